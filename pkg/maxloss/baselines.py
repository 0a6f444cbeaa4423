"""Full-pass reference methods: projected subgradient on F_max and accelerated gradient on F_smax."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .broo import SmoothnessRequiredError
from .core import MaxLossError, ProblemInstance, QueryLedger, Vector, project_ball, subgrad_fmax_with_value
from .softmax import SmoothingParams, fsmax_value_grad

logger = logging.getLogger(__name__)

BASELINES = ("subgradient", "agd-softmax")


class BaselineError(MaxLossError):
    pass


@dataclass(frozen=True)
class BaselineConfig:
    budget: int
    eps: float = 0.05
    target: Optional[float] = None

    def __post_init__(self):
        if self.budget < 1:
            raise BaselineError(f"iteration budget must be positive, got {self.budget}")
        if self.eps <= 0:
            raise BaselineError(f"accuracy eps must be positive, got {self.eps}")


@dataclass
class BaselineResult:
    point: Vector
    best_point: Vector
    best_value: float
    steps: int
    suffix_average: Optional[Vector] = None
    best_history: List[float] = field(default_factory=list)
    reached_target: bool = False


def subgradient_method(
    inst: ProblemInstance,
    x0: Vector,
    R: float,
    budget: int,
    ledger: QueryLedger,
    target: Optional[float] = None,
) -> BaselineResult:
    """Projected subgradient steps eta_t = R / (L_f sqrt(t)) on B_R(x0); N + 1 queries per step"""
    if budget < 1:
        raise BaselineError(f"iteration budget must be positive, got {budget}")
    x0 = inst.check_point(x0)
    if inst.lip == 0:
        value, _ = subgrad_fmax_with_value(inst, x0, ledger)
        return BaselineResult(point=x0, best_point=x0, best_value=value, steps=1, suffix_average=x0, best_history=[value])

    x = x0.copy()
    best_x, best_val = x0.copy(), math.inf
    history: List[float] = []
    suffix_start = budget // 2 + 1
    suffix_sum = np.zeros_like(x0)
    steps = 0
    for t in range(1, budget + 1):
        value, g = subgrad_fmax_with_value(inst, x, ledger)
        steps = t
        if value < best_val:
            best_x, best_val = x.copy(), value
        history.append(best_val)
        if t >= suffix_start:
            suffix_sum += x
        if target is not None and best_val <= target:
            logger.debug("subgradient method reached target %.4g after %d steps", target, t)
            reached = True
            break
        x = project_ball(x - (R / (inst.lip * math.sqrt(t))) * g, x0, R)
    else:
        reached = False

    counted = steps - suffix_start + 1
    suffix = suffix_sum / counted if counted > 0 else best_x.copy()
    return BaselineResult(
        point=best_x, best_point=best_x, best_value=best_val, steps=steps,
        suffix_average=suffix, best_history=history, reached_target=reached,
    )


def agd_softmax(
    inst: ProblemInstance,
    params: SmoothingParams,
    x0: Vector,
    R: float,
    budget: int,
    ledger: QueryLedger,
    target: Optional[float] = None,
) -> BaselineResult:
    """Constant-step projected Nesterov (two sequences) on F_smax with L = L_g + L_f^2 / eps'"""
    if not inst.is_smooth:
        raise SmoothnessRequiredError("AGD on the softmax needs a finite gradient Lipschitz bound")
    if budget < 1:
        raise BaselineError(f"iteration budget must be positive, got {budget}")
    x0 = inst.check_point(x0)
    L = inst.smooth + inst.lip ** 2 / params.eps_prime
    if L <= 0:
        _, _, fmax = fsmax_value_grad(inst, params, x0, ledger)
        return BaselineResult(point=x0, best_point=x0, best_value=fmax, steps=1, best_history=[fmax])

    x_prev = x0.copy()
    y = x0.copy()
    momentum = 1.0
    best_x, best_val = x0.copy(), math.inf
    history: List[float] = []
    steps = 0
    reached = False
    for k in range(1, budget + 1):
        _, grad, fmax = fsmax_value_grad(inst, params, y, ledger)
        steps = k
        if fmax < best_val:
            best_x, best_val = y.copy(), fmax
        history.append(best_val)
        if target is not None and best_val <= target:
            reached = True
            break
        x = project_ball(y - grad / L, x0, R)
        nxt = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum ** 2))
        y = x + ((momentum - 1.0) / nxt) * (x - x_prev)
        x_prev, momentum = x, nxt

    return BaselineResult(
        point=best_x if reached else x_prev, best_point=best_x, best_value=best_val,
        steps=steps, best_history=history, reached_target=reached,
    )


def run_baseline(
    method: str,
    inst: ProblemInstance,
    x0: Vector,
    R: float,
    cfg: BaselineConfig,
    ledger: QueryLedger,
) -> BaselineResult:
    if method == "subgradient":
        return subgradient_method(inst, x0, R, cfg.budget, ledger, target=cfg.target)
    if method == "agd-softmax":
        params = SmoothingParams.build(cfg.eps, inst.n, max(inst.lip, 1e-300))
        return agd_softmax(inst, params, x0, R, cfg.budget, ledger, target=cfg.target)
    raise BaselineError(f"unknown baseline {method!r}; expected one of {', '.join(BASELINES)}")
