"""Vectors, problem instances and query accounting shared by every solver."""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

Vector = NDArray[np.float64]


class MaxLossError(Exception):
    """Base class for every error raised by maxloss"""


class DimensionMismatchError(MaxLossError):
    pass


class NonFiniteError(MaxLossError):
    pass


def as_vector(x: Sequence[float], d: Optional[int] = None) -> Vector:
    """Convert x to a finite float64 vector, checking its dimension"""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim == 0:
        vec = vec.reshape(1)
    if vec.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-d vector, got shape {vec.shape}")
    if d is not None and vec.shape[0] != d:
        raise DimensionMismatchError(f"expected dimension {d}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteError("vector has NaN or infinite entries")
    return vec


def project_ball(x: Vector, center: Vector, radius: float) -> Vector:
    """Radial projection onto the Euclidean ball B_radius(center)"""
    diff = x - center
    dist = float(np.linalg.norm(diff))
    if dist <= radius:
        return x
    return center + diff * (radius / dist)


@dataclass
class QueryLedger:
    """Counts component value and gradient queries for one solve"""

    value_queries: int = 0
    grad_queries: int = 0

    def charge(self, values: int = 0, grads: int = 0):
        if values < 0 or grads < 0:
            raise ValueError("ledger counts only go up")
        self.value_queries += values
        self.grad_queries += grads

    def merge(self, other: "QueryLedger"):
        """Fold another ledger's counts into this one"""
        self.charge(other.value_queries, other.grad_queries)

    @property
    def total(self) -> int:
        return self.value_queries + self.grad_queries

    def full_passes(self, n: int) -> float:
        return self.total / n


class ProblemInstance:
    """N convex components with value and subgradient access.

    Subclasses implement ``value`` and ``subgradient``; ``values`` and
    ``subgradients`` evaluate every component at once and should be
    overridden with vectorised versions when the family allows it.
    Instances are immutable once built.
    """

    name = "instance"

    def __init__(self, d: int, n: int, lip: float, smooth: float = math.inf, radius_bound: float = 1.0):
        if d < 1 or n < 1:
            raise DimensionMismatchError(f"instance needs d >= 1 and N >= 1, got d={d}, N={n}")
        self.d = int(d)
        self.n = int(n)
        self.lip = float(lip)
        self.smooth = float(smooth)
        self.radius_bound = float(radius_bound)

    def value(self, i: int, x: Vector) -> float:
        raise NotImplementedError

    def subgradient(self, i: int, x: Vector) -> Vector:
        raise NotImplementedError

    def values(self, x: Vector) -> Vector:
        return np.array([self.value(i, x) for i in range(self.n)], dtype=np.float64)

    def subgradients(self, x: Vector) -> NDArray[np.float64]:
        return np.vstack([self.subgradient(i, x) for i in range(self.n)])

    @property
    def is_smooth(self) -> bool:
        return math.isfinite(self.smooth)

    def check_point(self, x: Sequence[float]) -> Vector:
        return as_vector(x, self.d)

    def __repr__(self):
        return f"{type(self).__name__}(d={self.d}, N={self.n}, lip={self.lip:g}, smooth={self.smooth:g})"


class FunctionalInstance(ProblemInstance):
    """Instance assembled from per-component Python callables"""

    name = "functional"

    def __init__(
        self,
        d: int,
        funcs: List[Callable[[Vector], float]],
        grads: List[Callable[[Vector], Vector]],
        lip: float,
        smooth: float = math.inf,
        radius_bound: float = 1.0,
    ):
        if len(funcs) != len(grads):
            raise DimensionMismatchError("need one gradient callable per component")
        super().__init__(d, len(funcs), lip, smooth, radius_bound)
        self._funcs = list(funcs)
        self._grads = list(grads)

    def value(self, i: int, x: Vector) -> float:
        return float(self._funcs[i](x))

    def subgradient(self, i: int, x: Vector) -> Vector:
        return np.asarray(self._grads[i](x), dtype=np.float64).reshape(self.d)


def component_value(inst: ProblemInstance, i: int, x: Vector, ledger: QueryLedger) -> float:
    ledger.charge(values=1)
    return inst.value(i, x)


def component_value_grad(inst: ProblemInstance, i: int, x: Vector, ledger: QueryLedger) -> Tuple[float, Vector]:
    ledger.charge(values=1, grads=1)
    return inst.value(i, x), inst.subgradient(i, x)


def all_values(inst: ProblemInstance, x: Vector, ledger: QueryLedger) -> Vector:
    """One full pass of value queries"""
    ledger.charge(values=inst.n)
    return inst.values(x)


def all_values_grads(inst: ProblemInstance, x: Vector, ledger: QueryLedger) -> Tuple[Vector, NDArray[np.float64]]:
    """One full pass of value and gradient queries"""
    ledger.charge(values=inst.n, grads=inst.n)
    return inst.values(x), inst.subgradients(x)


def eval_fmax(inst: ProblemInstance, x: Sequence[float], ledger: QueryLedger) -> float:
    """F_max(x) = max_i f_i(x); charges N value queries"""
    x = inst.check_point(x)
    return float(np.max(all_values(inst, x, ledger)))


def subgrad_fmax(inst: ProblemInstance, x: Sequence[float], ledger: QueryLedger) -> Vector:
    """Subgradient of F_max at x from the lowest index attaining the max"""
    return subgrad_fmax_with_value(inst, x, ledger)[1]


def subgrad_fmax_with_value(inst: ProblemInstance, x: Sequence[float], ledger: QueryLedger) -> Tuple[float, Vector]:
    x = inst.check_point(x)
    vals = all_values(inst, x, ledger)
    # np.argmax returns the first maximiser
    i_star = int(np.argmax(vals))
    ledger.charge(grads=1)
    return float(vals[i_star]), inst.subgradient(i_star, x)
