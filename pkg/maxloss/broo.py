"""Ball regularized optimization oracles.

A request asks for an approximate minimiser of F_smax(x) + (lam/2)||x - center||^2
over the ball B_radius(center), accurate to (lam/2) delta^2 in objective. Three
implementations: a deterministic reference solver for small instances, restarted
projected SGD on the exponentiated softmax, and an accelerated variance-reduced
method for smooth components.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol

import numpy as np

from .core import MaxLossError, ProblemInstance, QueryLedger, Vector, project_ball
from .manager import SolverSettings
from .softmax import (
    SmoothingParams,
    fsmax_value_grad,
    gamma_components,
    gamma_value_grad,
    make_ball_context,
    sample_components,
    stability_constants,
)

logger = logging.getLogger(__name__)

EXACT_MAX_DIM = 50
EXACT_MAX_COMPONENTS = 200


class BrooError(MaxLossError):
    pass


class BrooRequestError(BrooError):
    pass


class EmptyIntersectionError(BrooError):
    pass


class ExactSolveError(BrooError):
    pass


class SmoothnessRequiredError(BrooError):
    pass


@dataclass(frozen=True, eq=False)
class BrooRequest:
    center: Vector
    radius: float
    lam: float
    delta: float
    sigma: float = 0.05
    budget_cap: Optional[int] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise BrooRequestError(f"radius must be positive, got {self.radius}")
        if not self.delta > 0:
            raise BrooRequestError(f"accuracy delta must be positive, got {self.delta}")
        if not 0 < self.sigma < 1:
            raise BrooRequestError(f"failure probability must lie in (0, 1), got {self.sigma}")
        if self.lam < 0:
            raise BrooRequestError(f"regularisation must be non-negative, got {self.lam}")
        if self.budget_cap is not None and self.budget_cap < 1:
            raise BrooRequestError(f"budget cap must be positive, got {self.budget_cap}")


@dataclass
class BrooResponse:
    point: Vector
    iterations: int
    overflow_flagged: bool = False
    stage_points: List[Vector] = field(default_factory=list)
    budget_capped: bool = False


class BallOracle(Protocol):
    def __call__(self, req: BrooRequest, ledger: QueryLedger) -> BrooResponse:
        ...


# --- projection --------------------------------------------------------------

def project_ball_intersection(
    x: Vector, c1: Vector, r1: float, c2: Vector, r2: float, tol: float = 1e-12, max_sweeps: int = 10_000
) -> Vector:
    """Euclidean projection onto B_r1(c1) ∩ B_r2(c2).

    Single-active cases are closed form; otherwise Dykstra's alternating
    projections. The result always lies in B_r1(c1).
    """
    gap = float(np.linalg.norm(c1 - c2))
    if gap > r1 + r2:
        raise EmptyIntersectionError(f"balls are {gap:.6g} apart with radii {r1:.6g} and {r2:.6g}")
    if np.linalg.norm(x - c1) <= r1 and np.linalg.norm(x - c2) <= r2:
        return x.copy()
    p1 = project_ball(x, c1, r1)
    if np.linalg.norm(p1 - c2) <= r2:
        return p1
    p2 = project_ball(x, c2, r2)
    if np.linalg.norm(p2 - c1) <= r1:
        return p2

    y = x
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_sweeps):
        a = project_ball(y + p, c1, r1)
        p = y + p - a
        b = project_ball(a + q, c2, r2)
        q = a + q - b
        moved = float(np.linalg.norm(b - y))
        y = b
        if moved <= tol * max(1.0, float(np.linalg.norm(y))):
            break
    else:
        logger.warning("Dykstra projection stopped after %d sweeps without converging", max_sweeps)
    return project_ball(y, c1, r1)


# --- exact reference ---------------------------------------------------------

def exact_broo(
    inst: ProblemInstance,
    params: SmoothingParams,
    req: BrooRequest,
    ledger: Optional[QueryLedger] = None,
    settings: Optional[SolverSettings] = None,
) -> BrooResponse:
    """Projected full-gradient descent with step halving, to objective tolerance"""
    settings = settings or SolverSettings()
    if inst.d > EXACT_MAX_DIM or inst.n > EXACT_MAX_COMPONENTS:
        raise ExactSolveError(
            f"exact solver is limited to d <= {EXACT_MAX_DIM}, N <= {EXACT_MAX_COMPONENTS}; got d={inst.d}, N={inst.n}"
        )
    ledger = ledger if ledger is not None else QueryLedger()
    center = inst.check_point(req.center)
    lam = req.lam

    def objective(x):
        value, grad, _ = fsmax_value_grad(inst, params, x, ledger)
        offset = x - center
        return value + 0.5 * lam * float(offset @ offset), grad + lam * offset

    x = center.copy()
    fx, gx = objective(x)
    # the step only ever shrinks; lam bounds the curvature from below
    step = 1.0 / lam if lam > 0 else 1.0
    for it in range(1, settings.exact_max_iter + 1):
        while True:
            x_new = project_ball(x - step * gx, center, req.radius)
            move = x_new - x
            f_new, g_new = objective(x_new)
            slack = 1e-15 * max(1.0, abs(fx))
            if f_new <= fx + float(gx @ move) + float(move @ move) / (2.0 * step) + slack:
                break
            step /= 2.0
            if step < 1e-30:
                return BrooResponse(point=x, iterations=it)
        decrease = fx - f_new
        if decrease > 0:
            x, fx, gx = x_new, f_new, g_new
        if decrease <= settings.exact_tol * max(1.0, abs(fx)):
            return BrooResponse(point=project_ball(x, center, req.radius), iterations=it)
    raise ExactSolveError(f"no convergence within {settings.exact_max_iter} iterations")


# --- restarted SGD -----------------------------------------------------------

def sgd_budget(lip: float, lam: float, delta: float, sigma: float, multiplier: float) -> int:
    """Total stochastic gradient budget ~ L_f^2 / (lam delta)^2 * log(log(L_f / (lam delta)) / sigma)"""
    inner = max(math.log(max(lip / (lam * delta), math.e)), 1.0)
    return int(math.ceil(multiplier * lip ** 2 / (lam * delta) ** 2 * math.log(inner / sigma)))


def sgd_broo(
    inst: ProblemInstance,
    params: SmoothingParams,
    req: BrooRequest,
    rng: np.random.Generator,
    ledger: QueryLedger,
    settings: Optional[SolverSettings] = None,
) -> BrooResponse:
    """Epoch-doubling projected SGD on the exponentiated softmax"""
    settings = settings or SolverSettings()
    lam = req.lam
    if lam <= 0:
        raise BrooRequestError("stochastic ball oracles need lam > 0 for strong convexity")
    c = settings.stability_c
    if lam > 2.0 * c * inst.lip / req.radius:
        logger.warning("lam=%.4g exceeds the stable regime 2c*L_f/r=%.4g", lam, 2.0 * c * inst.lip / req.radius)
    G = stability_constants(c).C * inst.lip

    budget = sgd_budget(inst.lip, lam, req.delta, req.sigma, settings.sgd_budget_multiplier)
    capped = req.budget_cap is not None and req.budget_cap < budget
    if capped:
        logger.debug("budget cap %d lowers the computed SGD budget %d", req.budget_cap, budget)
        budget = req.budget_cap

    ctx = make_ball_context(inst, params, req.center, lam, ledger)
    center = ctx.center
    eta = 1.0 / (3.0 * lam)
    domain = settings.sgd_domain_constant * G * math.sqrt(math.log(max(math.log(max(budget, 2)), 1.0) / req.sigma)) / lam
    epoch_len = min(settings.sgd_first_epoch, budget)

    anchor = center.copy()
    x = anchor
    used = 0
    overflow = False
    while used < budget:
        # the last epoch is cut short so the budget is spent exactly
        length = min(epoch_len, budget - used)
        total = np.zeros_like(x)
        for i in sample_components(ctx, rng, length):
            total += x
            ev = gamma_value_grad(ctx, params, int(i), x, ledger)
            overflow |= ev.overflow
            x = project_ball_intersection(x - eta * ev.grad, center, req.radius, anchor, domain)
        used += length
        anchor = total / length
        x = anchor
        epoch_len *= 2
        eta /= 2.0
        domain /= math.sqrt(2.0)

    if overflow:
        logger.warning("SGD iterates left the stability ball (exponent clamped)")
    return BrooResponse(
        point=project_ball(anchor, center, req.radius),
        iterations=used,
        overflow_flagged=overflow,
        budget_capped=capped,
    )


# --- accelerated variance reduction ------------------------------------------

def katyusha_broo(
    inst: ProblemInstance,
    params: SmoothingParams,
    req: BrooRequest,
    rng: np.random.Generator,
    ledger: QueryLedger,
    settings: Optional[SolverSettings] = None,
) -> BrooResponse:
    """Katyusha with negative momentum on the p(center)-weighted sum of gamma_i"""
    settings = settings or SolverSettings()
    if not inst.is_smooth:
        raise SmoothnessRequiredError("components have no finite gradient Lipschitz bound; use sgd_broo")
    lam = req.lam
    if lam <= 0:
        raise BrooRequestError("stochastic ball oracles need lam > 0 for strong convexity")
    C = stability_constants(settings.stability_c).C
    mu = lam / C
    L = C * (inst.smooth + lam + inst.lip ** 2 / params.eps_prime)

    m = settings.katyusha_epoch_factor * inst.n
    tau1 = min(math.sqrt(m * mu / (3.0 * L)), 0.5)
    tau2 = 0.5
    alpha = 1.0 / (3.0 * tau1 * L)
    per_epoch = min(m * math.log1p(alpha * mu), math.log(1.5))
    epochs_per_stage = max(1, math.ceil(settings.katyusha_stage_slack * math.log(2.0) / per_epoch))

    gap_bound = C * inst.lip * req.radius
    target = lam * req.delta ** 2 / (6.0 * math.e ** 2 * C)
    stages = max(1, math.ceil(math.log2(gap_bound / (target * req.sigma))))
    cap = req.budget_cap
    capped = cap is not None and cap < stages * epochs_per_stage * m
    if capped:
        logger.debug("budget cap %d lowers %d Katyusha inner steps", cap, stages * epochs_per_stage * m)

    ctx = make_ball_context(inst, params, req.center, lam, ledger)
    center = ctx.center
    x_tilde = center.copy()
    y = center.copy()
    z = center.copy()
    used = 0
    overflow = False
    stage_points: List[Vector] = []
    for _ in range(stages):
        for _ in range(epochs_per_stage):
            if cap is not None and used > 0 and used + m > cap:
                break
            _, snap_grads, ovf = gamma_components(ctx, params, x_tilde, ledger)
            overflow |= ovf
            full_grad = ctx.probs @ snap_grads
            acc = np.zeros_like(x_tilde)
            weight, weight_sum = 1.0, 0.0
            for i in sample_components(ctx, rng, m):
                i = int(i)
                x_k = tau1 * z + tau2 * x_tilde + (1.0 - tau1 - tau2) * y
                ev = gamma_value_grad(ctx, params, i, x_k, ledger)
                overflow |= ev.overflow
                g = full_grad + ev.grad - snap_grads[i]
                z = project_ball(z - alpha * g, center, req.radius)
                y = project_ball(x_k - g / (3.0 * L), center, req.radius)
                acc += weight * y
                weight_sum += weight
                weight *= 1.0 + alpha * mu
                if weight > 1e150:
                    acc /= weight
                    weight_sum /= weight
                    weight = 1.0
            x_tilde = acc / weight_sum
            used += m
        stage_points.append(x_tilde.copy())
        if cap is not None and used + m > cap:
            break

    if overflow:
        logger.warning("Katyusha iterates left the stability ball (exponent clamped)")
    return BrooResponse(
        point=project_ball(x_tilde, center, req.radius),
        iterations=used,
        overflow_flagged=overflow,
        stage_points=stage_points,
        budget_capped=capped,
    )


# --- oracle adapters ---------------------------------------------------------

class ExactBroo:
    """Reference oracle bound to an instance"""

    def __init__(self, inst: ProblemInstance, params: SmoothingParams, settings: Optional[SolverSettings] = None):
        self.inst = inst
        self.params = params
        self.settings = settings or SolverSettings()

    def __call__(self, req: BrooRequest, ledger: QueryLedger) -> BrooResponse:
        return exact_broo(self.inst, self.params, req, ledger, self.settings)


class _StochasticBroo:
    """Shared state of the sampling oracles; warns the first time the budget cap binds"""

    def __init__(
        self,
        inst: ProblemInstance,
        params: SmoothingParams,
        rng: np.random.Generator,
        settings: Optional[SolverSettings] = None,
    ):
        self.inst = inst
        self.params = params
        self.rng = rng
        self.settings = settings or SolverSettings()
        self.capped_calls = 0

    def _note_cap(self, resp: BrooResponse, req: BrooRequest) -> BrooResponse:
        if resp.budget_capped:
            if not self.capped_calls:
                logger.warning(
                    "budget cap %d is below the accuracy-driven step budget; later calls may be capped too",
                    req.budget_cap,
                )
            self.capped_calls += 1
        return resp


class SgdBroo(_StochasticBroo):
    def __call__(self, req: BrooRequest, ledger: QueryLedger) -> BrooResponse:
        return self._note_cap(sgd_broo(self.inst, self.params, req, self.rng, ledger, self.settings), req)


class KatyushaBroo(_StochasticBroo):
    def __init__(
        self,
        inst: ProblemInstance,
        params: SmoothingParams,
        rng: np.random.Generator,
        settings: Optional[SolverSettings] = None,
    ):
        if not inst.is_smooth:
            raise SmoothnessRequiredError("components have no finite gradient Lipschitz bound; use sgd_broo")
        super().__init__(inst, params, rng, settings)

    def __call__(self, req: BrooRequest, ledger: QueryLedger) -> BrooResponse:
        return self._note_cap(katyusha_broo(self.inst, self.params, req, self.rng, ledger, self.settings), req)
