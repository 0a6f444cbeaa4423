"""Property suites run by ``maxloss verify``.

Each check is either hard (any violation fails) or statistical (a pass
fraction compared against a threshold). Everything runs at desk scale on
small synthetic instances and is seeded.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .accel import AccelConfig, accelerate, lambda_bisection, step_coefficients
from .broo import BrooRequest, ExactBroo, exact_broo, katyusha_broo, sgd_broo
from .core import MaxLossError, QueryLedger, Vector, eval_fmax
from .instances import (
    HardInstance,
    HardInstanceConfig,
    hard_gap_bound,
    link_psi_value_grad,
    make_huber_instance,
    prog_alpha,
)
from .manager import SolverSettings
from .softmax import (
    SmoothedMaxLoss,
    SmoothingParams,
    fsmax,
    gamma_full,
    gamma_value_grad,
    make_ball_context,
    regularized_fsmax,
    stability_constants,
)

logger = logging.getLogger(__name__)

SUITES = ("softmax", "instances", "broo", "accel")


class VerifyError(MaxLossError):
    pass


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    hard: bool = True
    detail: str = ""
    pass_fraction: Optional[float] = None
    threshold: Optional[float] = None


def _hard(suite: str, name: str, violations: int, total: int, detail: str = "") -> CheckResult:
    note = detail or f"{violations} violations in {total} cases"
    return CheckResult(suite, name, violations == 0, hard=True, detail=note)


def _statistical(suite: str, name: str, passes: int, total: int, threshold: float) -> CheckResult:
    frac = passes / total if total else 0.0
    return CheckResult(
        suite, name, frac >= threshold, hard=False,
        detail=f"{passes}/{total} passed", pass_fraction=frac, threshold=threshold,
    )


def sample_in_ball(rng: np.random.Generator, center: Vector, radius: float) -> Vector:
    """Uniform point of B_radius(center)"""
    d = center.shape[0]
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    return center + radius * rng.random() ** (1.0 / d) * direction


# --- softmax -----------------------------------------------------------------

def softmax_suite(trials: int, seed: int, inject_fault: bool = False) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    sandwich_bad = unbiased_bad = transfer_bad = 0
    points = 0
    C = stability_constants(1.0).C
    for _ in range(trials):
        inst = make_huber_instance(4, 12, ell=2.0, seed=rng.integers(1 << 31))
        eps = float(rng.uniform(0.05, 0.5))
        params = SmoothingParams.build(eps, inst.n, inst.lip)
        ledger = QueryLedger()
        center = rng.normal(scale=0.5, size=inst.d)
        r = params.r_eps
        lam = inst.lip / r
        ctx = make_ball_context(inst, params, center, lam, ledger)
        ref = exact_broo(inst, params, BrooRequest(center=center, radius=r, lam=lam, delta=r)).point
        ref_f = regularized_fsmax(ctx, params, ref, ledger)
        ref_g = gamma_full(ctx, params, ref, ledger).value

        for _ in range(50):
            points += 1
            x = rng.normal(scale=1.0, size=inst.d)
            gap = fsmax(inst, params, x, ledger) - eval_fmax(inst, x, ledger)
            if gap < -1e-10 or gap > eps / 2.0 + 1e-12:
                sandwich_bad += 1

            y = sample_in_ball(rng, center, r)
            full = gamma_full(ctx, params, y, ledger)
            summed = np.zeros(inst.d)
            for i in range(inst.n):
                grad = gamma_value_grad(ctx, params, i, y, ledger).grad
                summed += ctx.probs[i] * (-grad if inject_fault else grad)
            if np.linalg.norm(summed - full.grad) > 1e-12 * max(np.linalg.norm(full.grad), 1e-300) + 1e-15:
                unbiased_bad += 1

            lhs = regularized_fsmax(ctx, params, y, ledger) - ref_f
            if lhs > C * (full.value - ref_g) + 1e-9:
                transfer_bad += 1

    return [
        _hard("softmax", "sandwich", sandwich_bad, points),
        _hard("softmax", "unbiased-gradient", unbiased_bad, points),
        _hard("softmax", "gamma-transfer", transfer_bad, points),
    ]


# --- instances ---------------------------------------------------------------

def instances_suite(trials: int, seed: int) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    gap_bad = chain_bad = link_bad = 0
    total = 0
    for T in (4, 8):
        for ell in (1.0, 16.0):
            inst = HardInstance(HardInstanceConfig.create(T, 2 * T, ell=ell, d=T + 4, seed=int(rng.integers(1 << 31))))
            bound = hard_gap_bound(T, ell)
            U = inst.cfg.U
            for _ in range(trials * 10):
                total += 1
                k = int(rng.integers(0, T))
                z = rng.normal(scale=1.0 / math.sqrt(T), size=T)
                z[k:] = rng.uniform(-inst.alpha, inst.alpha, size=T - k)
                x = U @ z
                if prog_alpha(inst.chain_coordinates(x), inst.alpha) >= T:
                    continue
                if eval_fmax(inst, x, QueryLedger()) < bound - 1e-15:
                    gap_bad += 1
                # gradients may reach one coordinate past the progress, never further
                prog = prog_alpha(inst.chain_coordinates(x), inst.alpha)
                leak = U[:, prog + 1:].T @ inst.subgradients(x).T
                if leak.size and np.max(np.abs(leak)) > 1e-12:
                    chain_bad += 1

    for _ in range(trials * 20):
        alpha = float(rng.uniform(0.0, 0.1))
        ell = float(rng.uniform(0.5, 20.0))
        s, t = rng.normal(scale=0.5, size=2)
        vals, grads = link_psi_value_grad(np.array([s, t]), alpha, ell)
        if abs(vals[0] - vals[1]) > abs(s - t) + 1e-12 or abs(grads[0] - grads[1]) > ell * abs(s - t) + 1e-12:
            link_bad += 1

    return [
        _hard("instances", "gap-bound", gap_bad, total),
        _hard("instances", "zero-chain", chain_bad, total),
        _hard("instances", "link-regularity", link_bad, trials * 20),
    ]


# --- broo --------------------------------------------------------------------

def broo_suite(trials: int, seed: int, threshold: float = 0.95) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    settings = SolverSettings()
    passes = {"sgd": 0, "katyusha": 0}
    for _ in range(trials):
        inst = make_huber_instance(int(rng.integers(2, 6)), int(rng.integers(5, 21)), ell=1.0, seed=rng.integers(1 << 31))
        params = SmoothingParams.build(0.2, inst.n, inst.lip)
        r = params.r_eps
        lam = inst.lip / r * float(rng.uniform(0.25, 1.0))
        center = rng.normal(scale=0.5, size=inst.d)
        delta = r / 2.0
        ref = exact_broo(inst, params, BrooRequest(center=center, radius=r, lam=lam, delta=delta)).point
        ledger = QueryLedger()
        ctx = make_ball_context(inst, params, center, lam, ledger)
        ref_val = regularized_fsmax(ctx, params, ref, ledger)

        req = BrooRequest(center=center, radius=r, lam=lam, delta=delta, sigma=0.05)
        points = {
            "sgd": sgd_broo(inst, params, req, rng, ledger, settings).point,
            "katyusha": katyusha_broo(inst, params, req, rng, ledger, settings).point,
        }
        for name, point in points.items():
            excess = regularized_fsmax(ctx, params, point, ledger) - ref_val
            if excess <= 0.5 * lam * delta ** 2 and np.linalg.norm(point - ref) <= delta:
                passes[name] += 1

    return [
        _statistical("broo", "sgd-contract", passes["sgd"], trials, threshold),
        _statistical("broo", "katyusha-contract", passes["katyusha"], trials, threshold),
    ]


# --- accel -------------------------------------------------------------------

def accel_suite(trials: int, seed: int) -> List[CheckResult]:
    rng = np.random.default_rng(seed)
    outcome_bad = coupling_bad = growth_bad = potential_bad = window_bad = 0
    calls = iters = steps = probes = 0
    for _ in range(trials):
        inst = make_huber_instance(3, 8, ell=1.0, seed=rng.integers(1 << 31))
        eps = 0.05
        params = SmoothingParams.build(eps, inst.n, inst.lip)
        R, r = 1.0, 0.2
        cfg = AccelConfig.build(R, r, eps, inst.lip, max_outer=200)
        oracle = ExactBroo(inst, params)
        objective = SmoothedMaxLoss(inst, params)

        # bisection outcomes from random couplings
        x0 = rng.normal(scale=0.3, size=inst.d)
        x = x0 + rng.normal(scale=0.3, size=inst.d)
        v = x0 + rng.normal(scale=0.3, size=inst.d)
        A = float(rng.uniform(0.0, 5.0))
        bis = lambda_bisection(x, v, A, cfg, oracle, QueryLedger())
        calls += 1
        if not check_bisection_outcome(bis.lam, x, v, A, cfg, oracle):
            outcome_bad += 1

        x_star = exact_broo(inst, params, BrooRequest(center=x0, radius=R, lam=0.0, delta=R)).point
        _, trace = accelerate(objective, x0, cfg, oracle, QueryLedger(), reference=x_star)
        A_prev = 0.0
        for rec in trace.iterations:
            iters += 1
            if abs(rec.A - rec.a ** 2 * rec.lam) > 1e-9 * rec.A or abs(rec.A - (A_prev + rec.a)) > 1e-9 * rec.A:
                coupling_bad += 1
            if math.sqrt(rec.A) < 0.5 * rec.inv_sqrt_lambda_sum * (1.0 - 1e-9):
                growth_bad += 1
            A_prev = rec.A
        for t, rec in enumerate(trace.iterations):
            if not rec.potential_preconditions:
                continue
            steps += 1
            drop = trace.potentials[t + 1] - trace.potentials[t]
            if drop > -rec.A * rec.lam * r * r / 12.0 + 1e-9:
                potential_bad += 1
        lo, hi = eps / (24.0 * r * R), 4.0 * inst.lip / r
        window_bad += sum(1 for lam, _ in trace.queries if not lo <= lam <= hi)
        probes += len(trace.queries)

    return [
        _hard("accel", "bisection-outcome", outcome_bad, calls),
        _hard("accel", "coupling-identities", coupling_bad, iters),
        _hard("accel", "coupling-growth", growth_bad, iters),
        _hard("accel", "potential-decrease", potential_bad, steps),
        _hard("accel", "lambda-window", window_bad, probes),
    ]


def check_bisection_outcome(lam: float, x: Vector, v: Vector, A: float, cfg: AccelConfig, oracle) -> bool:
    """(a) lam in [2 lam_min, lam_max] with reference prox displacement in (3r/4, r), or (b) lam < 2 lam_min"""
    if lam < 2.0 * cfg.lambda_min:
        return True
    if lam > cfg.lambda_max * (1.0 + 1e-12):
        return False
    a, A_next = step_coefficients(lam, A)
    y = (A / A_next) * x + (a / A_next) * v
    prox = oracle(BrooRequest(center=y, radius=cfg.r, lam=lam, delta=cfg.r * 1e-6), QueryLedger()).point
    disp = float(np.linalg.norm(prox - y))
    return 0.75 * cfg.r < disp < cfg.r


# --- driver ------------------------------------------------------------------

def run_suites(suite: str, trials: int, seed: int, inject_fault: bool = False) -> List[CheckResult]:
    runners: Dict[str, Callable[[], List[CheckResult]]] = {
        "softmax": lambda: softmax_suite(trials, seed, inject_fault=inject_fault),
        "instances": lambda: instances_suite(trials, seed),
        "broo": lambda: broo_suite(trials, seed),
        "accel": lambda: accel_suite(trials, seed),
    }
    if suite == "all":
        names = list(SUITES)
    elif suite in runners:
        names = [suite]
    else:
        raise VerifyError(f"unknown suite {suite!r}; expected one of {', '.join(SUITES + ('all',))}")
    if trials < 1:
        raise VerifyError(f"trials must be positive, got {trials}")
    results: List[CheckResult] = []
    for name in names:
        logger.info("running %s suite (%d trials)", name, trials)
        results.extend(runners[name]())
    return results


def all_passed(results: List[CheckResult]) -> bool:
    return all(res.passed for res in results)
