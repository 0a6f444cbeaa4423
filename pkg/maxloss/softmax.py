"""Softmax smoothing of the max and the exponentiated-softmax ball surrogate."""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp, softmax

from .core import (
    MaxLossError,
    ProblemInstance,
    QueryLedger,
    Vector,
    all_values,
    all_values_grads,
    component_value_grad,
)

logger = logging.getLogger(__name__)

# exponent arguments are clamped here; leaving the stability ball is the only way to hit it
EXPONENT_CLAMP = 50.0


class SmoothingError(MaxLossError):
    pass


@dataclass(frozen=True)
class SmoothingParams:
    eps: float
    eps_prime: float
    r_eps: float

    @classmethod
    def build(cls, eps: float, n: int, lip: float) -> "SmoothingParams":
        """eps' = eps / (2 log max(N, 2)) and the stability radius eps' / L_f"""
        if eps <= 0:
            raise SmoothingError(f"accuracy eps must be positive, got {eps}")
        if lip <= 0:
            raise SmoothingError(f"Lipschitz bound must be positive, got {lip}")
        eps_prime = eps / (2.0 * math.log(max(n, 2)))
        return cls(eps=eps, eps_prime=eps_prime, r_eps=eps_prime / lip)


@dataclass(frozen=True)
class StabilityConstants:
    c: float
    C: float


def stability_constants(c: float = 1.0) -> StabilityConstants:
    """C = (1 + c + c^2) e^{c + c^2/2}"""
    if c < 0:
        raise SmoothingError(f"radius slack c must be non-negative, got {c}")
    return StabilityConstants(c=c, C=(1.0 + c + c * c) * math.exp(c + 0.5 * c * c))


def log_sum_exp(vals: Sequence[float]) -> float:
    vals = np.asarray(vals, dtype=np.float64)
    if vals.size == 0:
        raise SmoothingError("log_sum_exp of an empty sequence")
    return float(logsumexp(vals))


def fsmax(inst: ProblemInstance, params: SmoothingParams, x: Vector, ledger: QueryLedger) -> float:
    """eps' log sum_i exp(f_i(x) / eps'); one value pass"""
    x = inst.check_point(x)
    vals = all_values(inst, x, ledger)
    return params.eps_prime * float(logsumexp(vals / params.eps_prime))


def fsmax_value_grad(
    inst: ProblemInstance, params: SmoothingParams, x: Vector, ledger: QueryLedger
) -> Tuple[float, Vector, float]:
    """F_smax(x), its exact gradient sum_i p_i(x) grad f_i(x), and F_max(x)"""
    x = inst.check_point(x)
    vals, grads = all_values_grads(inst, x, ledger)
    scaled = vals / params.eps_prime
    value = params.eps_prime * float(logsumexp(scaled))
    return value, softmax(scaled) @ grads, float(np.max(vals))


class SmoothedMaxLoss:
    """The F_smax oracle handed to the outer accelerated loop"""

    def __init__(self, inst: ProblemInstance, params: SmoothingParams):
        self.inst = inst
        self.params = params

    def __call__(self, x: Vector, ledger: QueryLedger) -> float:
        return fsmax(self.inst, self.params, x, ledger)

    def value_grad(self, x: Vector, ledger: QueryLedger) -> Tuple[float, Vector]:
        value, grad, _ = fsmax_value_grad(self.inst, self.params, x, ledger)
        return value, grad


@dataclass(frozen=True, eq=False)
class BallContext:
    """Everything a ball subproblem caches from its one full pass at the centre"""

    inst: ProblemInstance
    center: Vector
    lam: float
    values: Vector
    probs: Vector
    log_partition: float
    cdf: Vector

    @property
    def n(self) -> int:
        return self.inst.n


def make_ball_context(
    inst: ProblemInstance, params: SmoothingParams, center: Vector, lam: float, ledger: QueryLedger
) -> BallContext:
    if lam < 0:
        raise SmoothingError(f"regularisation must be non-negative, got {lam}")
    center = inst.check_point(center)
    vals = all_values(inst, center, ledger)
    scaled = vals / params.eps_prime
    probs = softmax(scaled)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return BallContext(
        inst=inst,
        center=center,
        lam=float(lam),
        values=vals,
        probs=probs,
        log_partition=float(logsumexp(scaled)),
        cdf=cdf,
    )


@dataclass
class GammaEval:
    value: float
    grad: Vector
    overflow: bool = False


def _exponent(raw: NDArray[np.float64]) -> Tuple[NDArray[np.float64], bool]:
    clipped = np.clip(raw, -EXPONENT_CLAMP, EXPONENT_CLAMP)
    return clipped, bool(np.any(clipped != raw))


def gamma_value_grad(ctx: BallContext, params: SmoothingParams, i: int, x: Vector, ledger: QueryLedger) -> GammaEval:
    """gamma_i(x) = eps' exp((f_i^lam(x) - f_i^lam(center)) / eps') and its gradient"""
    ep = params.eps_prime
    offset = x - ctx.center
    f_x, g_x = component_value_grad(ctx.inst, i, x, ledger)
    raw = (f_x - ctx.values[i] + 0.5 * ctx.lam * float(offset @ offset)) / ep
    arg, overflow = _exponent(np.asarray(raw))
    gamma = ep * math.exp(float(arg))
    return GammaEval(gamma, gamma * (g_x + ctx.lam * offset) / ep, overflow)


def gamma_components(
    ctx: BallContext, params: SmoothingParams, x: Vector, ledger: QueryLedger
) -> Tuple[Vector, NDArray[np.float64], bool]:
    """Every gamma_i(x) and gradient row at once; one value and gradient pass"""
    ep = params.eps_prime
    offset = x - ctx.center
    vals, grads = all_values_grads(ctx.inst, x, ledger)
    raw = (vals - ctx.values + 0.5 * ctx.lam * float(offset @ offset)) / ep
    arg, overflow = _exponent(raw)
    gammas = ep * np.exp(arg)
    return gammas, gammas[:, None] * (grads + ctx.lam * offset) / ep, overflow


def gamma_full(ctx: BallContext, params: SmoothingParams, x: Vector, ledger: QueryLedger) -> GammaEval:
    """Gamma(x) = sum_i p_i(center) gamma_i(x), with gradient"""
    gammas, grads, overflow = gamma_components(ctx, params, x, ledger)
    if overflow:
        logger.debug("gamma exponent clamped at distance %.3g from the centre", np.linalg.norm(x - ctx.center))
    return GammaEval(float(ctx.probs @ gammas), ctx.probs @ grads, overflow)


def regularized_fsmax(ctx: BallContext, params: SmoothingParams, x: Vector, ledger: QueryLedger) -> float:
    offset = x - ctx.center
    return fsmax(ctx.inst, params, x, ledger) + 0.5 * ctx.lam * float(offset @ offset)


def sample_component(ctx: BallContext, rng: np.random.Generator) -> int:
    """Draw i ~ p(center)"""
    return min(int(np.searchsorted(ctx.cdf, rng.random(), side="right")), ctx.n - 1)


def sample_components(ctx: BallContext, rng: np.random.Generator, size: int) -> NDArray[np.intp]:
    """``size`` independent draws i ~ p(center), one uniform per draw"""
    picks = np.searchsorted(ctx.cdf, rng.random(size), side="right")
    return np.minimum(picks, ctx.n - 1)
