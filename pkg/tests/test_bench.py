import math
from dataclasses import replace

import numpy as np
import pytest

from maxloss.bench import (
    EXIT_BUDGET,
    EXIT_OK,
    BenchError,
    RunSpec,
    ScalingError,
    build_instance,
    fit_loglog,
    linear_reference_optimum,
    parse_grid,
    run_scaling,
    run_solve,
)
from maxloss.instances import InstanceFormatError, LinearInstance
from maxloss.manager import SolverSettings
from maxloss.storage import RECORD_COLUMNS, RecordStore

GOLDEN_HEADER = (
    "method,N,d,eps,seed,outer_iters,broo_calls,value_queries,grad_queries,"
    "full_passes,final_gap,wall_ms,termination_reason"
)

DESK = SolverSettings(max_outer=5, broo_budget_cap=500, sgd_first_epoch=50)


@pytest.fixture
def one_row_csv(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("2,1\n0.6,0.8,0.25\n")
    return path


def test_record_header_is_pinned(tmp_path, one_row_csv):
    record, _ = run_solve(RunSpec(instance="linear-csv", method="subgradient", csv_path=one_row_csv, radius=1.0, budget=5))
    out = tmp_path / "runs.csv"
    RecordStore(out).append(record.as_row())
    assert out.read_text().splitlines()[0] == GOLDEN_HEADER
    assert ",".join(RECORD_COLUMNS) == GOLDEN_HEADER


def test_single_row_linear_is_solved_exactly(one_row_csv):
    record, code = run_solve(
        RunSpec(instance="linear-csv", method="subgradient", csv_path=one_row_csv, radius=1.0, budget=10)
    )
    assert code == EXIT_OK
    assert record.final_gap == pytest.approx(0.0, abs=1e-12)
    assert record.termination_reason == "TARGET"


def test_single_row_linear_with_exact_oracle(one_row_csv):
    record, code = run_solve(
        RunSpec(instance="linear-csv", method="broo-exact", csv_path=one_row_csv, radius=1.0, eps=0.1)
    )
    assert code == EXIT_OK
    assert record.final_gap <= 0.1
    assert record.T is None


def test_full_passes_match_queries(one_row_csv):
    record, _ = run_solve(RunSpec(instance="linear-csv", method="subgradient", csv_path=one_row_csv, radius=1.0, budget=5))
    assert record.full_passes == (record.value_queries + record.grad_queries) / record.N


def test_seeded_runs_are_identical_up_to_wall_clock():
    spec = RunSpec(instance="hard", method="broo-sgd", eps=0.1, seed=7, N=4, T=3, d_cap=8, settings=DESK)
    first, _ = run_solve(spec)
    second, _ = run_solve(spec)
    a, b = first.as_row(), second.as_row()
    a.pop("wall_ms")
    b.pop("wall_ms")
    assert a == b
    assert first.T == 3
    assert first.outer_iters <= 5


def test_hard_instance_radius_is_minimiser_distance():
    built = build_instance(RunSpec(instance="hard", N=6, T=4, d_cap=10, seed=1))
    assert built.R == pytest.approx(1.0)
    assert built.optimum == 0.0
    assert built.inst.d == 10


def test_duplicated_instance():
    built = build_instance(RunSpec(instance="duplicated", N=3, T=4))
    assert built.inst.n == 3
    assert built.inst.d == 12
    assert built.optimum == 0.0


def test_linear_reference_optimum_two_rows():
    inst = LinearInstance(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2))
    assert linear_reference_optimum(inst, np.array([0.5, 0.0]), 1.0) == pytest.approx(0.0, abs=1e-6)


def test_linear_reference_optimum_at_ball_edge():
    inst = LinearInstance(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    # max(x1, x2) over the unit ball is smallest along (-1, -1)
    assert linear_reference_optimum(inst, np.zeros(2), 1.0) == pytest.approx(-1.0 / math.sqrt(2.0), abs=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(instance="sphere"), dict(method="newton"), dict(eps=0.0), dict(instance="linear-csv")],
)
def test_run_spec_validation(kwargs):
    with pytest.raises(BenchError):
        RunSpec(**kwargs)


def test_missing_csv_file(tmp_path):
    with pytest.raises(InstanceFormatError):
        run_solve(RunSpec(instance="linear-csv", method="subgradient", csv_path=tmp_path / "absent.csv"))


# --- fits ---

def test_fit_recovers_power_law():
    xs = [0.1, 0.2, 0.4, 0.8, 1.6]
    fit = fit_loglog(xs, [3.0 * x ** -0.5 for x in xs], "r")
    assert fit.slope == pytest.approx(-0.5)
    assert fit.intercept == pytest.approx(math.log(3.0))
    assert fit.r_squared == pytest.approx(1.0)


@pytest.mark.parametrize(
    "xs,ys",
    [
        ([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]),
        ([1.0, 2.0, 3.0, 4.0], [1.0, 0.0, 3.0, 4.0]),
        ([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0]),
        ([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0]),
    ],
)
def test_fit_rejects_bad_grids(xs, ys):
    with pytest.raises(ScalingError):
        fit_loglog(xs, ys)


def test_parse_grid():
    assert parse_grid("0.1, 0.2,0.4") == [0.1, 0.2, 0.4]
    np.testing.assert_allclose(parse_grid("1:100:3"), [1.0, 10.0, 100.0])
    with pytest.raises(ScalingError):
        parse_grid("a,b")
    with pytest.raises(ScalingError):
        parse_grid("1:2")


@pytest.mark.parametrize("sweep,grid", [("q", [1, 2, 3, 4]), ("r", [0.1, 0.2, 0.3]), ("r", [0.2] * 4)])
def test_scaling_rejects_bad_sweeps(sweep, grid):
    with pytest.raises(ScalingError):
        run_scaling(sweep, grid, RunSpec())


def test_radius_sweep_rows_follow_grid():
    base = RunSpec(N=4, eps=0.1, settings=SolverSettings(max_outer=40))
    grid = [0.1, 0.15, 0.2, 0.3]
    rows, fit = run_scaling("r", grid, base, threads=2)
    assert [row["value"] for row in rows] == grid
    assert all(row["sweep"] == "r" and row["outer_iters"] >= 1 for row in rows)
    assert fit.ys == [float(row["outer_iters"]) for row in rows]
    assert math.isfinite(fit.slope)


def test_radius_sweep_slope_near_two_thirds():
    rows, fit = run_scaling("r", parse_grid("0.02:0.2:5"), RunSpec(N=8, eps=0.05))
    assert len(rows) == 5
    assert -0.80 <= fit.slope <= -0.55
    assert fit.r_squared >= 0.9


def test_sgd_oracle_needs_a_third_of_subgradient_passes():
    # with a loose distance bound the subgradient steps R / (L sqrt(t)) overshoot for a long time
    base = RunSpec(
        instance="hard", N=2048, T=4, ell=16.0, d_cap=16, eps=0.15, radius=1000.0,
        settings=SolverSettings(broo_budget_cap=400, max_outer=15),
    )
    broo, code = run_solve(base)
    assert code == EXIT_OK
    sub, sub_code = run_solve(replace(base, method="subgradient", budget=3 * math.ceil(broo.full_passes)))
    assert sub_code == EXIT_BUDGET
    assert sub.full_passes >= 3 * broo.full_passes


def test_eps_sweep_uses_run_solve(one_row_csv):
    base = RunSpec(instance="linear-csv", method="subgradient", csv_path=one_row_csv, radius=1.0, budget=5)
    rows, _ = run_scaling("eps", [0.05, 0.1, 0.2, 0.4], base, threads=1)
    assert [row["eps"] for row in rows] == [0.05, 0.1, 0.2, 0.4]
