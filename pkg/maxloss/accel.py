"""Outer acceleration over a ball oracle, with the lambda bisection, and the end-to-end solver."""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .broo import BallOracle, BrooRequest, ExactBroo, KatyushaBroo, SgdBroo
from .core import MaxLossError, ProblemInstance, QueryLedger, Vector, eval_fmax, project_ball
from .manager import SolverSettings
from .softmax import SmoothedMaxLoss, SmoothingParams

logger = logging.getLogger(__name__)

Objective = Callable[[Vector, QueryLedger], float]

METHODS = ("broo-sgd", "broo-katyusha", "broo-exact")


class AccelError(MaxLossError):
    pass


class MethodError(MaxLossError):
    pass


class BisectionOutcome(str, Enum):
    SMALL_LAMBDA = "SMALL_LAMBDA"
    MIDDLE = "MIDDLE"
    SEARCH = "SEARCH"


class Termination(str, Enum):
    A_LARGE = "A_LARGE"
    SMALL_LAMBDA = "SMALL_LAMBDA"
    COUPLING_FAR = "COUPLING_FAR"
    SLOW_GROWTH = "SLOW_GROWTH"
    MAX_OUTER = "MAX_OUTER"
    CONSTANT_INSTANCE = "CONSTANT_INSTANCE"


def default_max_outer(R: float, r: float, eps: float, lip: float) -> int:
    """50 (R/r)^{2/3} log(L_f R^2 / (r eps))^2"""
    log_term = max(math.log(max(lip * R * R / (r * eps), 1.0)), 1.0)
    return int(math.ceil(50.0 * (R / r) ** (2.0 / 3.0) * log_term ** 2))


@dataclass(frozen=True)
class AccelConfig:
    R: float
    r: float
    eps: float
    lip: float
    lambda_max: float
    lambda_min: float
    bisection_delta: float
    max_outer: int
    sigma: float = 0.05
    budget_cap: Optional[int] = None

    @classmethod
    def build(
        cls,
        R: float,
        r: float,
        eps: float,
        lip: float,
        max_outer: Optional[int] = None,
        sigma: float = 0.05,
        budget_cap: Optional[int] = None,
    ) -> "AccelConfig":
        if not 0 < r <= R:
            raise AccelError(f"need 0 < r <= R, got r={r}, R={R}")
        if eps <= 0:
            raise AccelError(f"accuracy eps must be positive, got {eps}")
        if lip <= 0:
            raise AccelError(f"Lipschitz bound must be positive, got {lip}")
        lambda_max = 2.0 * lip / r
        lambda_min = eps / (6.0 * r * R)
        if not lambda_min < lambda_max:
            raise AccelError(f"lambda_min={lambda_min:.4g} is not below lambda_max={lambda_max:.4g}; eps is too large")
        if max_outer is None:
            max_outer = default_max_outer(R, r, eps, lip)
        if max_outer < 1:
            raise AccelError(f"max_outer must be positive, got {max_outer}")
        return cls(
            R=R, r=r, eps=eps, lip=lip,
            lambda_max=lambda_max, lambda_min=lambda_min, bisection_delta=r / 17.0,
            max_outer=int(max_outer), sigma=sigma, budget_cap=budget_cap,
        )

    def bisection_call_bound(self) -> int:
        """Worst-case BROO calls in one bisection"""
        halvings = math.ceil(math.log2(self.lambda_max / self.lambda_min)) + 2
        search = math.ceil(math.log2(8.0 * (self.R + self.lip / self.lambda_min) / self.r)) + 2
        return halvings + search


def alpha_tau(tau: float) -> float:
    """tau / (1 + tau + sqrt(1 + 2 tau))"""
    if tau < 0:
        raise AccelError(f"tau must be non-negative, got {tau}")
    return tau / (1.0 + tau + math.sqrt(1.0 + 2.0 * tau))


def step_coefficients(lam: float, A: float) -> Tuple[float, float]:
    """a' = (1 + sqrt(1 + 4 lam A)) / (2 lam), A' = A + a'; then A' = a'^2 lam"""
    if lam <= 0:
        raise AccelError(f"lambda must be positive, got {lam}")
    if A < 0:
        raise AccelError(f"A must be non-negative, got {A}")
    a = (1.0 + math.sqrt(1.0 + 4.0 * lam * A)) / (2.0 * lam)
    return a, A + a


# --- bisection ---------------------------------------------------------------

@dataclass
class BisectionResult:
    lam: float
    outcome: BisectionOutcome
    broo_calls: int
    probes: List[Tuple[float, float]] = field(default_factory=list)
    queries: List[Tuple[float, float]] = field(default_factory=list)


def coupling_point(x: Vector, v: Vector, A: float, lam: float) -> Vector:
    alpha = alpha_tau(2.0 * A * lam)
    return alpha * x + (1.0 - alpha) * v


def lambda_bisection(
    x: Vector, v: Vector, A: float, cfg: AccelConfig, broo: BallOracle, ledger: QueryLedger
) -> BisectionResult:
    """Find lam with the ball constraint nearly tight at y_lam, or report that lam can be tiny.

    Delta(lam) is the oracle's displacement from y_lam at accuracy r/17; each
    lam is queried at most once. Overflow-flagged responses count as Delta = inf.
    """
    r = cfg.r
    cache: Dict[float, float] = {}
    probes: List[Tuple[float, float]] = []
    queries: List[Tuple[float, float]] = []

    def delta_of(lam: float) -> float:
        if lam in cache:
            return cache[lam]
        y = coupling_point(x, v, A, lam)
        req = BrooRequest(
            center=y, radius=r, lam=lam, delta=cfg.bisection_delta, sigma=cfg.sigma, budget_cap=cfg.budget_cap
        )
        resp = broo(req, ledger)
        queries.append((lam, cfg.bisection_delta))
        disp = math.inf if resp.overflow_flagged else float(np.linalg.norm(resp.point - y))
        cache[lam] = disp
        probes.append((lam, disp))
        return disp

    def result(lam: float, outcome: BisectionOutcome) -> BisectionResult:
        return BisectionResult(lam, outcome, len(queries), probes, queries)

    lo_band, hi_band = 13.0 * r / 16.0, 15.0 * r / 16.0
    lam = cfg.lambda_max
    while lam >= cfg.lambda_min and delta_of(lam) <= lo_band:
        lam /= 2.0
    if lam <= cfg.lambda_min:
        return result(2.0 * lam, BisectionOutcome.SMALL_LAMBDA)

    lam_u, lam_l = 2.0 * lam, lam
    if delta_of(lam_l) <= hi_band:
        return result(lam_l, BisectionOutcome.MIDDLE)

    lam_m = math.sqrt(lam_u * lam_l)
    while True:
        disp = delta_of(lam_m)
        if lo_band <= disp <= hi_band:
            break
        if math.log2(lam_u / lam_l) < r / (8.0 * (cfg.R + cfg.lip / lam_l)):
            break
        if disp < lo_band:
            lam_u = lam_m
        else:
            lam_l = lam_m
        lam_m = math.sqrt(lam_u * lam_l)
    return result(lam_m, BisectionOutcome.SEARCH)


# --- outer loop --------------------------------------------------------------

@dataclass
class AccelState:
    t: int
    x: Vector
    v: Vector
    y: Optional[Vector] = None
    A: float = 0.0
    a: float = 0.0
    lam: float = 0.0


@dataclass
class IterationRecord:
    t: int
    lam: float
    a: float
    A: float
    delta: float
    outcome: BisectionOutcome
    bisection_calls: int
    coupling_gap: float
    inv_sqrt_lambda_sum: float
    overflow: bool = False
    # ||x_t - v_t|| <= 2R and lam_{t+1} >= eps/(3rR), checked before the step
    potential_preconditions: bool = False


@dataclass
class SolverTrace:
    iterations: List[IterationRecord] = field(default_factory=list)
    queries: List[Tuple[float, float]] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)
    potentials: List[float] = field(default_factory=list)
    termination_reason: Optional[Termination] = None
    broo_calls: int = 0
    selection_value_queries: int = 0

    @property
    def outer_iters(self) -> int:
        return len(self.iterations)

    @property
    def diagnostic(self) -> bool:
        return bool(self.potentials)


def accelerate(
    objective: Objective,
    x0: Vector,
    cfg: AccelConfig,
    broo: BallOracle,
    ledger: QueryLedger,
    reference: Optional[Vector] = None,
) -> Tuple[Vector, SolverTrace]:
    """Accelerated proximal-point outer loop over a ball oracle.

    With ``reference`` (a minimiser of the objective over B_R(x0)) the trace
    also carries E_t, D_t and the potential P_t = A_t (E_t - eps/4) + D_t,
    evaluated on a scratch ledger.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    trace = SolverTrace()
    state = AccelState(t=0, x=x0.copy(), v=x0.copy())

    before = ledger.value_queries
    best_x, best_val = x0.copy(), objective(x0, ledger)
    trace.selection_value_queries += ledger.value_queries - before

    scratch = QueryLedger()
    ref_val = objective(reference, scratch) if reference is not None else None

    def record_potential():
        if reference is None:
            return
        energy = objective(state.x, scratch) - ref_val
        dist = 0.5 * float(np.sum((state.v - reference) ** 2))
        trace.energies.append(energy)
        trace.distances.append(dist)
        trace.potentials.append(state.A * (energy - cfg.eps / 4.0) + dist)

    record_potential()
    A_1 = None
    inv_sqrt_sum = 0.0
    small_lambda = cfg.eps / (3.0 * cfg.r * cfg.R)

    for t in range(cfg.max_outer):
        state.t = t
        bis = lambda_bisection(state.x, state.v, state.A, cfg, broo, ledger)
        lam = bis.lam
        preconditions = float(np.linalg.norm(state.x - state.v)) <= 2.0 * cfg.R and lam >= small_lambda
        a, A_next = step_coefficients(lam, state.A)
        y = (state.A / A_next) * state.x + (a / A_next) * state.v
        delta = cfg.eps / (12.0 * lam * cfg.R)
        resp = broo(
            BrooRequest(center=y, radius=cfg.r, lam=lam, delta=delta, sigma=cfg.sigma, budget_cap=cfg.budget_cap),
            ledger,
        )
        x_next = resp.point
        v_next = project_ball(state.v - a * lam * (y - x_next), x0, cfg.R)

        trace.queries.extend(bis.queries)
        trace.queries.append((lam, delta))
        trace.broo_calls += bis.broo_calls + 1
        inv_sqrt_sum += 1.0 / math.sqrt(lam)
        gap = float(np.linalg.norm(x_next - v_next))
        trace.iterations.append(
            IterationRecord(
                t=t, lam=lam, a=a, A=A_next, delta=delta, outcome=bis.outcome,
                bisection_calls=bis.broo_calls, coupling_gap=gap, inv_sqrt_lambda_sum=inv_sqrt_sum,
                overflow=resp.overflow_flagged, potential_preconditions=preconditions,
            )
        )
        logger.debug(
            "outer t=%d lam=%.4g a=%.4g A=%.4g %s bisection_calls=%d", t, lam, a, A_next, bis.outcome.value, bis.broo_calls
        )

        state.x, state.v, state.y = x_next, v_next, y
        state.A, state.a, state.lam = A_next, a, lam
        if A_1 is None:
            A_1 = A_next

        before = ledger.value_queries
        val = objective(x_next, ledger)
        trace.selection_value_queries += ledger.value_queries - before
        if val < best_val:
            best_x, best_val = x_next.copy(), val
        record_potential()

        if A_next >= cfg.R ** 2 / cfg.eps:
            trace.termination_reason = Termination.A_LARGE
        elif lam <= small_lambda:
            trace.termination_reason = Termination.SMALL_LAMBDA
        elif gap > 2.0 * cfg.R:
            trace.termination_reason = Termination.COUPLING_FAR
        elif A_next < math.exp((cfg.r / cfg.R) ** (2.0 / 3.0) * (t - 1)) * A_1:
            trace.termination_reason = Termination.SLOW_GROWTH
        if trace.termination_reason is not None:
            return best_x, trace

    logger.warning("outer loop hit max_outer=%d; returning the best iterate so far", cfg.max_outer)
    trace.termination_reason = Termination.MAX_OUTER
    return best_x, trace


# --- end to end --------------------------------------------------------------

@dataclass
class SolveReport:
    x: Vector
    fmax: float
    method: str
    eps: float
    R: float
    r: float
    value_queries: int
    grad_queries: int
    full_passes: float
    termination_reason: Termination
    trace: SolverTrace
    wall_ms: float = 0.0

    @property
    def outer_iters(self) -> int:
        return self.trace.outer_iters

    @property
    def broo_calls(self) -> int:
        return self.trace.broo_calls


def make_oracle(
    method: str,
    inst: ProblemInstance,
    params: SmoothingParams,
    rng: np.random.Generator,
    settings: SolverSettings,
) -> BallOracle:
    if method == "broo-sgd":
        return SgdBroo(inst, params, rng, settings)
    if method == "broo-katyusha":
        return KatyushaBroo(inst, params, rng, settings)
    if method == "broo-exact":
        return ExactBroo(inst, params, settings)
    raise MethodError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def solve_max_loss(
    inst: ProblemInstance,
    x0: Vector,
    R: float,
    eps: float,
    method: str,
    rng: np.random.Generator,
    ledger: QueryLedger,
    settings: Optional[SolverSettings] = None,
    reference: Optional[Vector] = None,
) -> SolveReport:
    """Minimise F_max to accuracy eps: softmax at eps/2, accelerated BROO loop at eps/2"""
    settings = settings or SolverSettings()
    if method not in METHODS:
        raise MethodError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if R <= 0:
        raise AccelError(f"distance bound R must be positive, got {R}")
    x0 = inst.check_point(x0)
    started = time.perf_counter()

    if inst.lip == 0:
        fmax = eval_fmax(inst, x0, ledger)
        return SolveReport(
            x=x0, fmax=fmax, method=method, eps=eps, R=R, r=R,
            value_queries=ledger.value_queries, grad_queries=ledger.grad_queries,
            full_passes=ledger.full_passes(inst.n), termination_reason=Termination.CONSTANT_INSTANCE,
            trace=SolverTrace(termination_reason=Termination.CONSTANT_INSTANCE),
            wall_ms=1000.0 * (time.perf_counter() - started),
        )

    params = SmoothingParams.build(eps, inst.n, inst.lip)
    r = params.r_eps
    if r > R:
        logger.debug("ball radius %.4g exceeds R=%.4g; using R", r, R)
        r = R
    oracle = make_oracle(method, inst, params, rng, settings)

    cfg = AccelConfig.build(R, r, eps / 2.0, inst.lip, max_outer=settings.max_outer)
    t_bound = cfg.max_outer * (cfg.bisection_call_bound() + 1)
    cfg = AccelConfig.build(
        R, r, eps / 2.0, inst.lip,
        max_outer=cfg.max_outer, sigma=min(0.05, 1.0 / (100.0 * t_bound)), budget_cap=settings.broo_budget_cap,
    )
    logger.info(
        "solving %r with %s: eps=%.3g R=%.3g r=%.3g max_outer=%d", inst, method, eps, R, r, cfg.max_outer
    )

    x, trace = accelerate(SmoothedMaxLoss(inst, params), x0, cfg, oracle, ledger, reference)
    fmax = eval_fmax(inst, x, ledger)
    return SolveReport(
        x=x, fmax=fmax, method=method, eps=eps, R=R, r=r,
        value_queries=ledger.value_queries, grad_queries=ledger.grad_queries,
        full_passes=ledger.full_passes(inst.n), termination_reason=trace.termination_reason,
        trace=trace, wall_ms=1000.0 * (time.perf_counter() - started),
    )
