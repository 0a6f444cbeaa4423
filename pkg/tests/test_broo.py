import logging

import numpy as np
import pytest

from maxloss.broo import (
    BrooRequest,
    BrooRequestError,
    EmptyIntersectionError,
    ExactBroo,
    ExactSolveError,
    KatyushaBroo,
    SgdBroo,
    SmoothnessRequiredError,
    exact_broo,
    katyusha_broo,
    project_ball_intersection,
    sgd_broo,
    sgd_budget,
)
from maxloss.core import QueryLedger, project_ball
from maxloss.instances import make_huber_instance
from maxloss.manager import SolverSettings
from maxloss.softmax import SmoothingParams, fsmax_value_grad, make_ball_context, regularized_fsmax
from maxloss.verify import broo_suite

from conftest import abs_instance, linear_instance


def _objective(inst, params, req, x):
    ctx = make_ball_context(inst, params, req.center, req.lam, QueryLedger())
    return regularized_fsmax(ctx, params, x, QueryLedger())


def _huber_request(huber, delta_scale):
    params = SmoothingParams.build(0.1, huber.n, huber.lip)
    r = params.r_eps
    center = np.full(huber.d, 0.05)
    return params, BrooRequest(center=center, radius=r, lam=huber.lip / r, delta=delta_scale * r)


# --- ball intersection ---

def test_point_inside_both_balls_is_kept():
    x = np.array([0.1, 0.0])
    np.testing.assert_array_equal(project_ball_intersection(x, np.zeros(2), 1.0, np.array([0.5, 0.0]), 1.0), x)


def test_disjoint_balls():
    with pytest.raises(EmptyIntersectionError):
        project_ball_intersection(np.zeros(2), np.zeros(2), 1.0, np.array([3.0, 0.0]), 1.0)


def test_projection_lands_in_both_balls_and_is_nearest(rng):
    c1, c2 = np.zeros(3), np.array([1.2, 0.0, 0.0])
    r1, r2 = 1.0, 0.8
    for _ in range(20):
        x = rng.normal(scale=3.0, size=3)
        p = project_ball_intersection(x, c1, r1, c2, r2)
        assert np.linalg.norm(p - c1) <= r1 + 1e-12
        assert np.linalg.norm(p - c2) <= r2 + 1e-8
        # no sampled point of the intersection is closer to x
        for _ in range(200):
            q = c1 + rng.uniform(-1, 1, size=3)
            if np.linalg.norm(q - c1) <= r1 and np.linalg.norm(q - c2) <= r2:
                assert np.linalg.norm(x - p) <= np.linalg.norm(x - q) + 1e-7


# --- requests ---

@pytest.mark.parametrize(
    "kwargs",
    [
        dict(radius=0.0),
        dict(delta=0.0),
        dict(sigma=1.0),
        dict(sigma=0.0),
        dict(lam=-1.0),
        dict(budget_cap=0),
    ],
)
def test_request_validation(kwargs):
    base = dict(center=np.zeros(2), radius=1.0, lam=1.0, delta=0.1)
    base.update(kwargs)
    with pytest.raises(BrooRequestError):
        BrooRequest(**base)


def test_sgd_budget_grows_as_accuracy_tightens():
    assert sgd_budget(1.0, 2.0, 0.01, 0.05, 4.0) > sgd_budget(1.0, 2.0, 0.1, 0.05, 4.0)
    assert sgd_budget(1.0, 2.0, 0.1, 0.01, 4.0) > sgd_budget(1.0, 2.0, 0.1, 0.05, 4.0)


# --- exact reference ---

def test_exact_unconstrained_minimiser():
    inst = linear_instance([[1.0]], [0.0])
    params = SmoothingParams.build(0.1, 1, inst.lip)
    resp = exact_broo(inst, params, BrooRequest(center=np.zeros(1), radius=1.0, lam=2.0, delta=0.01))
    assert resp.point[0] == pytest.approx(-0.5, abs=1e-8)


def test_exact_active_ball_constraint():
    inst = linear_instance([[1.0]], [0.0])
    params = SmoothingParams.build(0.1, 1, inst.lip)
    resp = ExactBroo(inst, params)(BrooRequest(center=np.zeros(1), radius=0.2, lam=2.0, delta=0.01), QueryLedger())
    assert resp.point[0] == pytest.approx(-0.2, abs=1e-12)


def test_exact_charges_full_passes(huber):
    params, req = _huber_request(huber, 0.5)
    ledger = QueryLedger()
    exact_broo(huber, params, req, ledger)
    assert ledger.value_queries > 0
    assert ledger.value_queries % huber.n == 0


@pytest.mark.parametrize("seed", range(20))
def test_exact_converges_on_random_huber_requests(seed):
    rng = np.random.default_rng(seed)
    inst = make_huber_instance(3, 10, ell=1.0, seed=seed)
    params = SmoothingParams.build(0.2, inst.n, inst.lip)
    r = params.r_eps
    req = BrooRequest(center=rng.normal(scale=0.5, size=3), radius=r, lam=inst.lip / (2 * r), delta=r / 2)
    resp = exact_broo(inst, params, req)
    assert np.linalg.norm(resp.point - req.center) <= r * (1 + 1e-12)
    # a short projected gradient step from the answer goes nowhere
    _, grad, _ = fsmax_value_grad(inst, params, resp.point, QueryLedger())
    grad = grad + req.lam * (resp.point - req.center)
    step = 1e-3
    moved = project_ball(resp.point - step * grad, req.center, r) - resp.point
    assert np.linalg.norm(moved) / step <= 1e-3


def test_exact_refuses_large_instances():
    inst = linear_instance([np.ones(51)], [0.0])
    params = SmoothingParams.build(0.1, 1, inst.lip)
    with pytest.raises(ExactSolveError):
        exact_broo(inst, params, BrooRequest(center=np.zeros(51), radius=1.0, lam=1.0, delta=0.1))


# --- stochastic oracles ---

def test_sgd_needs_positive_regularisation(huber, rng):
    params = SmoothingParams.build(0.1, huber.n, huber.lip)
    req = BrooRequest(center=np.zeros(huber.d), radius=0.1, lam=0.0, delta=0.1)
    with pytest.raises(BrooRequestError):
        sgd_broo(huber, params, req, rng, QueryLedger())


def test_sgd_single_component_reaches_boundary_minimiser(rng):
    inst = linear_instance([[1.0]], [0.0])
    params = SmoothingParams.build(0.1, 1, inst.lip)
    r = params.r_eps
    req = BrooRequest(center=np.zeros(1), radius=r, lam=inst.lip / r, delta=r / 4)
    resp = sgd_broo(inst, params, req, rng, QueryLedger())
    assert abs(resp.point[0] + r) <= r / 4


def test_sgd_meets_accuracy_on_smooth_losses(huber):
    params, req = _huber_request(huber, 1.0)
    best = exact_broo(huber, params, req).point
    resp = sgd_broo(huber, params, req, np.random.default_rng(1), QueryLedger())
    assert np.linalg.norm(resp.point - req.center) <= req.radius * (1 + 1e-12)
    excess = _objective(huber, params, req, resp.point) - _objective(huber, params, req, best)
    assert excess <= 0.5 * req.lam * req.delta ** 2


def test_sgd_runs_budgets_shorter_than_the_first_epoch(huber, rng):
    params, req = _huber_request(huber, 0.5)
    budget = sgd_budget(huber.lip, req.lam, req.delta, req.sigma, 4.0)
    assert 0 < budget < SolverSettings().sgd_first_epoch
    ledger = QueryLedger()
    resp = sgd_broo(huber, params, req, rng, ledger)
    assert resp.iterations == budget
    assert ledger.grad_queries == budget
    assert ledger.value_queries == huber.n + budget
    assert not np.allclose(resp.point, req.center)
    assert not resp.budget_capped


def test_budget_cap_never_raises_the_budget(huber):
    params, req = _huber_request(huber, 0.5)
    budget = sgd_budget(huber.lip, req.lam, req.delta, req.sigma, 4.0)
    loose = BrooRequest(center=req.center, radius=req.radius, lam=req.lam, delta=req.delta, budget_cap=100_000)
    resp = sgd_broo(huber, params, loose, np.random.default_rng(5), QueryLedger())
    assert resp.iterations == budget
    assert not resp.budget_capped


def test_budget_cap_lowers_the_budget_with_a_partial_epoch(huber, rng):
    params = SmoothingParams.build(0.1, huber.n, huber.lip)
    r = params.r_eps
    req = BrooRequest(center=np.full(huber.d, 0.05), radius=r, lam=huber.lip / r, delta=0.05 * r, budget_cap=1000)
    assert sgd_budget(huber.lip, req.lam, req.delta, req.sigma, 4.0) > 1000
    ledger = QueryLedger()
    resp = sgd_broo(huber, params, req, rng, ledger, SolverSettings(sgd_first_epoch=100))
    # epochs of 100, 200 and 400, then 300 of the next 800
    assert resp.iterations == 1000
    assert ledger.grad_queries == 1000
    assert ledger.value_queries == huber.n + 1000
    assert resp.budget_capped


def test_sgd_adapter_warns_once_when_capped(huber, caplog):
    params = SmoothingParams.build(0.1, huber.n, huber.lip)
    r = params.r_eps
    oracle = SgdBroo(huber, params, np.random.default_rng(0))
    req = BrooRequest(center=np.zeros(huber.d), radius=r, lam=huber.lip / r, delta=0.05 * r, budget_cap=20)
    with caplog.at_level(logging.WARNING, logger="maxloss.broo"):
        for _ in range(3):
            oracle(req, QueryLedger())
    assert oracle.capped_calls == 3
    assert sum("budget cap" in rec.getMessage() for rec in caplog.records) == 1


def test_stochastic_oracles_meet_contract_in_seeded_trials():
    results = {res.name: res for res in broo_suite(100, seed=11)}
    for name in ("sgd-contract", "katyusha-contract"):
        assert results[name].passed, results[name].detail
        assert results[name].pass_fraction >= 0.95


def test_katyusha_meets_accuracy(huber):
    params, req = _huber_request(huber, 0.5)
    best = exact_broo(huber, params, req).point
    resp = katyusha_broo(huber, params, req, np.random.default_rng(2), QueryLedger())
    excess = _objective(huber, params, req, resp.point) - _objective(huber, params, req, best)
    assert excess <= 0.5 * req.lam * req.delta ** 2
    assert resp.stage_points
    assert not resp.overflow_flagged


def test_katyusha_respects_budget_cap(huber, rng):
    params, req = _huber_request(huber, 0.5)
    req = BrooRequest(center=req.center, radius=req.radius, lam=req.lam, delta=req.delta, budget_cap=50)
    resp = katyusha_broo(huber, params, req, rng, QueryLedger())
    assert resp.iterations <= 50


def test_katyusha_needs_smooth_components(rng):
    inst = abs_instance()
    params = SmoothingParams.build(0.1, 1, inst.lip)
    req = BrooRequest(center=np.zeros(1), radius=0.1, lam=10.0, delta=0.01)
    with pytest.raises(SmoothnessRequiredError):
        katyusha_broo(inst, params, req, rng, QueryLedger())
    with pytest.raises(SmoothnessRequiredError):
        KatyushaBroo(inst, params, rng)
