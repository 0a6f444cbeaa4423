"""Benchmark runs: instance construction, single solves, scaling sweeps and log-log fits."""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, minimize

from .accel import METHODS, AccelConfig, accelerate, solve_max_loss
from .baselines import BASELINES, BaselineConfig, run_baseline
from .broo import ExactBroo
from .core import MaxLossError, ProblemInstance, QueryLedger, Vector, eval_fmax
from .instances import (
    HardInstance,
    HardInstanceConfig,
    LinearInstance,
    chain_sum_instance,
    known_optimum,
    load_linear_csv,
    make_duplicated_instance,
    make_huber_instance,
)
from .manager import SolverSettings, thread_limit
from .softmax import SmoothedMaxLoss, SmoothingParams
from .storage import RECORD_COLUMNS

logger = logging.getLogger(__name__)

INSTANCE_FAMILIES = ("hard", "linear-csv", "duplicated")
SWEEPS = ("r", "eps", "N")
MIN_FIT_POINTS = 4

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2


class BenchError(MaxLossError):
    pass


class ScalingError(MaxLossError):
    pass


@dataclass
class RunRecord:
    method: str
    N: int
    d: int
    eps: float
    seed: int
    outer_iters: int
    broo_calls: int
    value_queries: int
    grad_queries: int
    full_passes: float
    final_gap: float
    wall_ms: float
    termination_reason: str
    T: Optional[int] = None

    def as_row(self) -> Dict[str, Any]:
        """The record restricted to the stable file columns"""
        data = asdict(self)
        return {col: data[col] for col in RECORD_COLUMNS}

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunSpec:
    instance: str = "hard"
    method: str = "broo-sgd"
    eps: float = 0.05
    seed: int = 0
    N: int = 32
    T: int = 6
    ell: float = 1.0
    d_cap: Optional[int] = 64
    csv_path: Optional[Path] = None
    radius: Optional[float] = None
    budget: int = 10_000
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.instance not in INSTANCE_FAMILIES:
            raise BenchError(f"unknown instance {self.instance!r}; expected one of {', '.join(INSTANCE_FAMILIES)}")
        if self.method not in METHODS + BASELINES:
            raise BenchError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS + BASELINES)}")
        if self.eps <= 0:
            raise BenchError(f"eps must be positive, got {self.eps}")
        if self.instance == "linear-csv" and self.csv_path is None:
            raise BenchError("--instance linear-csv needs --csv")


@dataclass
class BuiltInstance:
    inst: ProblemInstance
    x0: Vector
    R: float
    optimum: Optional[float]
    T: Optional[int] = None


def linear_reference_optimum(inst: LinearInstance, x0: Vector, R: float) -> float:
    """min over B_R(x0) of max_i <a_i, x> + b_i.

    Solved in epigraph form with SLSQP, started from the linprog optimum over
    the enclosing box; the box value is the fallback lower bound.
    """
    d, n = inst.d, inst.n
    if n == 1:
        return float(inst.b[0] + inst.A[0] @ x0 - R * np.linalg.norm(inst.A[0]))

    # variables (x, t): minimise t subject to A x + b <= t, |x - x0|_inf <= R
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    A_ub = np.hstack([inst.A, -np.ones((n, 1))])
    bounds = [(float(c - R), float(c + R)) for c in x0] + [(None, None)]
    lp = linprog(cost, A_ub=A_ub, b_ub=-inst.b, bounds=bounds, method="highs")
    if lp.status != 0:
        raise BenchError(f"linear reference solve failed: {lp.message}")
    box_value = float(lp.fun)
    start_x = x0 + (lp.x[:d] - x0) * min(1.0, R / max(np.linalg.norm(lp.x[:d] - x0), 1e-300))
    start = np.concatenate([start_x, [float(np.max(inst.values(start_x)))]])

    constraints = [
        {"type": "ineq", "fun": lambda z: z[-1] - inst.A @ z[:d] - inst.b, "jac": lambda z: -A_ub},
        {
            "type": "ineq",
            "fun": lambda z: np.array([R * R - float(np.sum((z[:d] - x0) ** 2))]),
            "jac": lambda z: np.concatenate([-2.0 * (z[:d] - x0), [0.0]])[None, :],
        },
    ]
    res = minimize(
        lambda z: z[-1], start, jac=lambda z: cost, constraints=constraints, method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 1000},
    )
    if not res.success:
        logger.warning("SLSQP reference solve did not converge (%s); using the box bound", res.message)
        return box_value
    x_ball = x0 + (res.x[:d] - x0) * min(1.0, R / max(np.linalg.norm(res.x[:d] - x0), 1e-300))
    return float(np.max(inst.values(x_ball)))


def build_instance(spec: RunSpec) -> BuiltInstance:
    if spec.instance == "hard":
        cfg = HardInstanceConfig.create(spec.T, spec.N, ell=spec.ell, d_cap=spec.d_cap, seed=spec.seed)
        inst = HardInstance(cfg)
        x0 = np.zeros(inst.d)
        R = spec.radius or float(np.linalg.norm(inst.minimizer() - x0))
        return BuiltInstance(inst, x0, R, known_optimum(inst), T=spec.T)
    if spec.instance == "duplicated":
        inst = make_duplicated_instance(chain_sum_instance(spec.T, spec.ell), spec.N)
        x0 = np.zeros(inst.d)
        R = spec.radius or inst.radius_bound
        return BuiltInstance(inst, x0, R, known_optimum(inst), T=spec.T)
    inst = load_linear_csv(spec.csv_path)
    x0 = np.zeros(inst.d)
    R = spec.radius or inst.radius_bound
    return BuiltInstance(inst, x0, R, linear_reference_optimum(inst, x0, R))


def run_solve(spec: RunSpec) -> Tuple[RunRecord, int]:
    """One seeded solve; exit code 0 when the final gap is within eps, 2 otherwise"""
    built = build_instance(spec)
    inst = built.inst
    ledger = QueryLedger()
    rng = np.random.default_rng(spec.seed)
    started = time.perf_counter()

    if spec.method in METHODS:
        report = solve_max_loss(inst, built.x0, built.R, spec.eps, spec.method, rng, ledger, spec.settings)
        fmax = report.fmax
        outer, broo_calls, reason = report.outer_iters, report.broo_calls, report.termination_reason.value
    else:
        target = None if built.optimum is None else built.optimum + spec.eps
        result = run_baseline(
            spec.method, inst, built.x0, built.R, BaselineConfig(spec.budget, spec.eps, target), ledger
        )
        x = result.best_point
        fmax = eval_fmax(inst, x, QueryLedger())
        outer, broo_calls = result.steps, 0
        reason = "TARGET" if result.reached_target else "BUDGET"

    wall_ms = 1000.0 * (time.perf_counter() - started)
    gap = math.nan if built.optimum is None else max(fmax - built.optimum, 0.0)
    record = RunRecord(
        method=spec.method, N=inst.n, d=inst.d, eps=spec.eps, seed=spec.seed,
        outer_iters=outer, broo_calls=broo_calls,
        value_queries=ledger.value_queries, grad_queries=ledger.grad_queries,
        full_passes=ledger.full_passes(inst.n), final_gap=gap, wall_ms=wall_ms,
        termination_reason=reason, T=built.T,
    )
    logger.info("%s on %r: gap=%.4g passes=%.1f", spec.method, inst, gap, record.full_passes)
    code = EXIT_OK if gap <= spec.eps else EXIT_BUDGET
    return record, code


# --- scaling -----------------------------------------------------------------

@dataclass
class ScalingFit:
    sweep: str
    xs: List[float]
    ys: List[float]
    slope: float
    intercept: float
    r_squared: float

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


def fit_loglog(xs: Sequence[float], ys: Sequence[float], sweep: str = "") -> ScalingFit:
    """Least-squares line through (log x, log y)"""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape:
        raise ScalingError("x and y grids differ in length")
    if xs.size < MIN_FIT_POINTS:
        raise ScalingError(f"need at least {MIN_FIT_POINTS} points for a fit, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ScalingError("log-log fit needs positive values")
    if np.unique(xs).size < 2:
        raise ScalingError("degenerate sweep: all grid values are identical")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(resid ** 2)) / total if total > 0 else 1.0
    return ScalingFit(sweep, xs.tolist(), ys.tolist(), float(slope), float(intercept), r_squared)


def parse_grid(text: str) -> List[float]:
    """``a,b,c`` or ``start:stop:count`` (geometric)"""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return np.geomspace(float(start), float(stop), int(count)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScalingError(f"cannot parse grid {text!r}")


def radius_sweep_point(r: float, base: RunSpec, d: int = 5) -> RunRecord:
    """Outer iterations of the exact-oracle loop at ball radius r on a fixed smooth instance"""
    inst = make_huber_instance(d, base.N, ell=base.ell, seed=base.seed)
    params = SmoothingParams.build(base.eps, inst.n, inst.lip)
    x0 = np.full(d, 1.0 / math.sqrt(d))
    R = 1.0
    cfg = AccelConfig.build(R, r, base.eps / 2.0, inst.lip, max_outer=base.settings.max_outer)
    ledger = QueryLedger()
    started = time.perf_counter()
    _, trace = accelerate(SmoothedMaxLoss(inst, params), x0, cfg, ExactBroo(inst, params, base.settings), ledger)
    return RunRecord(
        method="broo-exact", N=inst.n, d=inst.d, eps=base.eps, seed=base.seed,
        outer_iters=trace.outer_iters, broo_calls=trace.broo_calls,
        value_queries=ledger.value_queries, grad_queries=ledger.grad_queries,
        full_passes=ledger.full_passes(inst.n), final_gap=math.nan,
        wall_ms=1000.0 * (time.perf_counter() - started), termination_reason=trace.termination_reason.value,
    )


def _scaling_point(sweep: str, value: float, base: RunSpec) -> RunRecord:
    if sweep == "r":
        return radius_sweep_point(value, base)
    if sweep == "eps":
        return run_solve(replace(base, eps=value))[0]
    return run_solve(replace(base, N=int(round(value))))[0]


def run_scaling(
    sweep: str, grid: Sequence[float], base: RunSpec, threads: Optional[int] = None
) -> Tuple[List[Dict[str, Any]], ScalingFit]:
    """Run every grid point in a worker pool and fit the log-log slope.

    Outer iterations are fitted for r and eps sweeps, full passes for N.
    Rows come back in grid order.
    """
    if sweep not in SWEEPS:
        raise ScalingError(f"unknown sweep {sweep!r}; expected one of {', '.join(SWEEPS)}")
    grid = list(grid)
    if len(grid) < MIN_FIT_POINTS:
        raise ScalingError(f"need at least {MIN_FIT_POINTS} grid points, got {len(grid)}")
    if len(set(grid)) < 2:
        raise ScalingError("degenerate sweep: all grid values are identical")
    workers = threads or thread_limit()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(lambda v: _scaling_point(sweep, v, base), grid))

    ys = [rec.full_passes if sweep == "N" else rec.outer_iters for rec in records]
    fit = fit_loglog(grid, ys, sweep)
    rows = [dict(sweep=sweep, value=v, **rec.as_row()) for v, rec in zip(grid, records)]
    return rows, fit


SCALING_COLUMNS = ("sweep", "value") + RECORD_COLUMNS
