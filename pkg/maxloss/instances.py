"""Instance generators: the chain hard instance, synthetic families, CSV ingestion."""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .core import MaxLossError, ProblemInstance, Vector

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence, np.random.Generator, None]


class InstanceConfigError(MaxLossError):
    pass


class InstanceFormatError(MaxLossError):
    """Malformed linear-instance file; ``row`` is the 1-based CSV row"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


# --- link function -----------------------------------------------------------

def _check_link(alpha: float, ell: float):
    if ell <= 0:
        raise InstanceConfigError(f"link smoothness ell must be positive, got {ell}")
    if alpha < 0:
        raise InstanceConfigError(f"link threshold alpha must be non-negative, got {alpha}")


def link_psi_value_grad(t, alpha: float, ell: float) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Value and derivative of psi_{alpha,ell}, elementwise over t"""
    _check_link(alpha, ell)
    t = np.asarray(t, dtype=np.float64)
    mag = np.abs(t)
    excess = mag - alpha
    flat = mag <= alpha
    quad = (~flat) & (mag <= alpha + 1.0 / ell)
    value = np.where(flat, 0.0, np.where(quad, 0.5 * ell * excess ** 2, excess - 0.5 / ell))
    slope = np.where(flat, 0.0, np.where(quad, ell * excess, 1.0))
    return value, np.sign(t) * slope


def link_psi(t, alpha: float, ell: float):
    """Huber of the hinge max{0, |t| - alpha}: flat, then quadratic, then linear"""
    value, _ = link_psi_value_grad(t, alpha, ell)
    return float(value) if value.ndim == 0 else value


def link_psi_grad(t, alpha: float, ell: float):
    _, slope = link_psi_value_grad(t, alpha, ell)
    return float(slope) if slope.ndim == 0 else slope


# --- randomisation -----------------------------------------------------------

def sample_orthogonal(d: int, T: int, seed: Seed = None) -> NDArray[np.float64]:
    """d x T matrix with orthonormal columns, uniformly distributed"""
    if d < T:
        raise InstanceConfigError(f"need d >= T for an orthogonal embedding, got d={d}, T={T}")
    rng = np.random.default_rng(seed)
    gaussian = rng.standard_normal((d, T))
    q, r = np.linalg.qr(gaussian)
    # positive-diagonal convention makes the distribution Haar
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def prog_alpha(z: Vector, alpha: float) -> int:
    """Largest 1-based index i with |z_i| > alpha, 0 if there is none"""
    hits = np.flatnonzero(np.abs(np.asarray(z, dtype=np.float64)) > alpha)
    return int(hits[-1]) + 1 if hits.size else 0


def default_embedding_dimension(T: int, N: int, fail_prob: float = 0.01) -> int:
    """Dimension that keeps random queries from discovering chain coordinates"""
    alpha = 1.0 / (4.0 * T ** 1.5)
    return T + int(math.ceil((2.0 / alpha ** 2) * math.log(4.0 * N * T ** 2 / fail_prob)))


# --- hard instance -----------------------------------------------------------

@dataclass(eq=False)
class HardInstanceConfig:
    T: int
    N: int
    ell: float
    d: int
    U: NDArray[np.float64]
    Pi: NDArray[np.int64]
    seed: Optional[int] = None
    alpha: float = field(init=False)

    def __post_init__(self):
        if self.T < 1:
            raise InstanceConfigError(f"chain length T must be positive, got {self.T}")
        if self.T > self.N:
            raise InstanceConfigError(f"chain length T={self.T} exceeds component count N={self.N}")
        if self.ell <= 0:
            raise InstanceConfigError(f"ell must be positive, got {self.ell}")
        if self.d < self.T:
            raise InstanceConfigError(f"embedding dimension d={self.d} is below T={self.T}")
        self.U = np.asarray(self.U, dtype=np.float64)
        self.Pi = np.asarray(self.Pi, dtype=np.int64)
        if self.U.shape != (self.d, self.T):
            raise InstanceConfigError(f"U must be {self.d}x{self.T}, got {self.U.shape}")
        if not np.allclose(self.U.T @ self.U, np.eye(self.T), atol=1e-10, rtol=0.0):
            raise InstanceConfigError("columns of U are not orthonormal")
        if self.Pi.shape != (self.N,) or not np.array_equal(np.sort(self.Pi), np.arange(self.N)):
            raise InstanceConfigError("Pi is not a permutation of range(N)")
        self.alpha = 1.0 / (4.0 * self.T ** 1.5)

    @classmethod
    def create(
        cls,
        T: int,
        N: int,
        ell: float = 1.0,
        d: Optional[int] = None,
        d_cap: Optional[int] = None,
        seed: Optional[int] = 0,
        rotate: bool = True,
        permute: bool = True,
    ) -> "HardInstanceConfig":
        """Draw U and Pi from ``seed``; d defaults to the theoretical dimension"""
        if T > N:
            raise InstanceConfigError(f"chain length T={T} exceeds component count N={N}")
        if d is None:
            d = default_embedding_dimension(T, N)
            if d_cap is not None and d > d_cap:
                logger.info("capping embedding dimension %d at %d", d, max(d_cap, T))
                d = max(d_cap, T)
        u_seed, pi_seed = np.random.SeedSequence(seed).spawn(2)
        if rotate:
            U = sample_orthogonal(d, T, u_seed)
        else:
            U = np.eye(d, T)
        Pi = np.random.default_rng(pi_seed).permutation(N) if permute else np.arange(N)
        return cls(T=T, N=N, ell=ell, d=d, U=U, Pi=Pi, seed=seed)


class HardInstance(ProblemInstance):
    """Chain components psi((z_i - z_{i-1})/2) spread across N elements.

    Component i evaluates chain link Pi^{-1}(i) at z = U^T x; links past T
    are identically zero. The chain starts from the constant z_0 = 1/sqrt(T).
    """

    name = "hard"

    def __init__(self, cfg: HardInstanceConfig):
        super().__init__(cfg.d, cfg.N, lip=1.0, smooth=cfg.ell, radius_bound=1.0)
        self.cfg = cfg
        self.T = cfg.T
        self.alpha = cfg.alpha
        self.ell = cfg.ell
        self._U = cfg.U
        self._perm = cfg.Pi
        self._link_of = np.argsort(cfg.Pi)
        self._z0 = 1.0 / math.sqrt(cfg.T)

    def minimizer(self) -> Vector:
        return self._U @ np.full(self.T, self._z0)

    def chain_coordinates(self, x: Vector) -> Vector:
        return self._U.T @ x

    def chain_values(self, z: Vector) -> Vector:
        """Unrotated, unpermuted component values at chain point z"""
        vals = np.zeros(self.n)
        vals[: self.T] = link_psi_value_grad(self._diffs(z), self.alpha, self.ell)[0]
        return vals

    def _diffs(self, z: Vector) -> Vector:
        prev = np.concatenate(([self._z0], z[:-1]))
        return (z - prev) / 2.0

    def value(self, i: int, x: Vector) -> float:
        j = int(self._link_of[i])
        if j >= self.T:
            return 0.0
        zj = float(self._U[:, j] @ x)
        zprev = float(self._U[:, j - 1] @ x) if j > 0 else self._z0
        return link_psi((zj - zprev) / 2.0, self.alpha, self.ell)

    def subgradient(self, i: int, x: Vector) -> Vector:
        j = int(self._link_of[i])
        grad = np.zeros(self.d)
        if j >= self.T:
            return grad
        zj = float(self._U[:, j] @ x)
        zprev = float(self._U[:, j - 1] @ x) if j > 0 else self._z0
        slope = 0.5 * link_psi_grad((zj - zprev) / 2.0, self.alpha, self.ell)
        grad += slope * self._U[:, j]
        if j > 0:
            grad -= slope * self._U[:, j - 1]
        return grad

    def values(self, x: Vector) -> Vector:
        chain = self.chain_values(self.chain_coordinates(x))
        out = np.empty(self.n)
        out[self._perm] = chain
        return out

    def subgradients(self, x: Vector) -> NDArray[np.float64]:
        z = self.chain_coordinates(x)
        slopes = 0.5 * link_psi_value_grad(self._diffs(z), self.alpha, self.ell)[1]
        link_grads = slopes[:, None] * self._U.T
        link_grads[1:] -= slopes[1:, None] * self._U[:, :-1].T
        out = np.zeros((self.n, self.d))
        out[self._perm[: self.T]] = link_grads
        return out


def make_hard_instance(cfg: HardInstanceConfig) -> HardInstance:
    return HardInstance(cfg)


def hard_gap_bound(T: int, ell: float) -> float:
    """F_max lower bound for every point whose chain progress is below T"""
    return link_psi(3.0 / (8.0 * T ** 1.5), 1.0 / (4.0 * T ** 1.5), ell)


def hard_gap_bound_simplified(T: int, ell: float) -> float:
    return min(1.0 / (8.0 * T ** 1.5), ell / (32.0 * T ** 3))


@dataclass
class ProgressReport:
    values: List[int]
    T: int

    @property
    def max_progress(self) -> int:
        return max(self.values, default=0)


class ProgressTracker(ProblemInstance):
    """Hard instance wrapper recording prog_alpha(U^T x) for every queried point.

    Holds mutable state, so one tracker belongs to one solve.
    """

    name = "hard"

    def __init__(self, inner: HardInstance):
        super().__init__(inner.d, inner.n, inner.lip, inner.smooth, inner.radius_bound)
        self.inner = inner
        self.progress: List[int] = []

    def _record(self, x: Vector):
        self.progress.append(prog_alpha(self.inner.chain_coordinates(x), self.inner.alpha))

    def value(self, i, x):
        self._record(x)
        return self.inner.value(i, x)

    def subgradient(self, i, x):
        self._record(x)
        return self.inner.subgradient(i, x)

    def values(self, x):
        self._record(x)
        return self.inner.values(x)

    def subgradients(self, x):
        self._record(x)
        return self.inner.subgradients(x)

    def report(self) -> ProgressReport:
        return ProgressReport(values=list(self.progress), T=self.inner.T)


# --- synthetic families ------------------------------------------------------

class LinearInstance(ProblemInstance):
    """f_i(x) = <a_i, x> + b_i"""

    name = "linear-csv"

    def __init__(self, A: NDArray[np.float64], b: Vector, radius_bound: float = 1.0):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.asarray(b, dtype=np.float64).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise InstanceConfigError("need one offset per row of A")
        lip = float(np.max(np.linalg.norm(A, axis=1)))
        super().__init__(A.shape[1], A.shape[0], lip=lip, smooth=0.0, radius_bound=radius_bound)
        self.A = A
        self.b = b

    def value(self, i, x):
        return float(self.A[i] @ x + self.b[i])

    def subgradient(self, i, x):
        return self.A[i].copy()

    def values(self, x):
        return self.A @ x + self.b

    def subgradients(self, x):
        return self.A.copy()


class HuberInstance(ProblemInstance):
    """f_i(x) = psi_{0,ell}(<a_i, x> - b_i) + c_i with unit-norm a_i"""

    name = "huber"

    def __init__(self, A, b, c, ell: float = 1.0, radius_bound: float = 1.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.b = np.asarray(b, dtype=np.float64).reshape(-1)
        self.c = np.asarray(c, dtype=np.float64).reshape(-1)
        self.ell = float(ell)
        norms = np.linalg.norm(self.A, axis=1)
        super().__init__(
            self.A.shape[1], self.A.shape[0],
            lip=float(np.max(norms)), smooth=self.ell * float(np.max(norms)) ** 2,
            radius_bound=radius_bound,
        )

    def value(self, i, x):
        return link_psi(float(self.A[i] @ x - self.b[i]), 0.0, self.ell) + float(self.c[i])

    def subgradient(self, i, x):
        return link_psi_grad(float(self.A[i] @ x - self.b[i]), 0.0, self.ell) * self.A[i]

    def values(self, x):
        return link_psi_value_grad(self.A @ x - self.b, 0.0, self.ell)[0] + self.c

    def subgradients(self, x):
        slopes = link_psi_value_grad(self.A @ x - self.b, 0.0, self.ell)[1]
        return slopes[:, None] * self.A


def make_huber_instance(d: int, N: int, ell: float = 1.0, seed: Seed = 0, offset_scale: float = 0.3) -> HuberInstance:
    """Random smooth 1-Lipschitz family with a bounded minimiser"""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = offset_scale * rng.uniform(-1.0, 1.0, size=N)
    c = offset_scale * rng.uniform(0.0, 1.0, size=N)
    return HuberInstance(A, b, c, ell=ell)


class ChainSumInstance(ProblemInstance):
    """Single smooth chain (1/sqrt(T)) * sum_j psi((z_j - z_{j-1})/2), z_0 = 1/sqrt(T)"""

    name = "chain-sum"

    def __init__(self, T: int, ell: float = 1.0):
        if T < 1:
            raise InstanceConfigError(f"chain length must be positive, got {T}")
        super().__init__(T, 1, lip=1.0, smooth=ell, radius_bound=1.0)
        self.T = T
        self.ell = float(ell)
        self.alpha = 1.0 / (4.0 * T ** 1.5)
        self._scale = 1.0 / math.sqrt(T)

    def _diffs(self, z):
        prev = np.concatenate(([self._scale], z[:-1]))
        return (z - prev) / 2.0

    def value(self, i, x):
        vals = link_psi_value_grad(self._diffs(x), self.alpha, self.ell)[0]
        return self._scale * float(np.sum(vals))

    def subgradient(self, i, x):
        slopes = 0.5 * link_psi_value_grad(self._diffs(x), self.alpha, self.ell)[1]
        grad = slopes.copy()
        grad[:-1] -= slopes[1:]
        return self._scale * grad


def chain_sum_instance(T: int, ell: float = 1.0) -> ChainSumInstance:
    return ChainSumInstance(T, ell)


class DuplicatedInstance(ProblemInstance):
    """N copies of a single-component base, each on its own coordinate block"""

    name = "duplicated"

    def __init__(self, base: ProblemInstance, n: int):
        if base.n != 1:
            raise InstanceConfigError(f"base must have a single component, got N={base.n}")
        super().__init__(
            base.d * n, n, base.lip, base.smooth, radius_bound=math.sqrt(n) * base.radius_bound
        )
        self.base = base
        self.block = base.d

    def _slice(self, i):
        return slice(i * self.block, (i + 1) * self.block)

    def value(self, i, x):
        return self.base.value(0, x[self._slice(i)])

    def subgradient(self, i, x):
        grad = np.zeros(self.d)
        grad[self._slice(i)] = self.base.subgradient(0, x[self._slice(i)])
        return grad


def make_duplicated_instance(base: ProblemInstance, N: int) -> DuplicatedInstance:
    return DuplicatedInstance(base, N)


def known_optimum(inst: ProblemInstance) -> Optional[float]:
    """Minimum of F_max when the family fixes it, else None"""
    if isinstance(inst, (HardInstance, ProgressTracker, ChainSumInstance)):
        return 0.0
    if isinstance(inst, DuplicatedInstance):
        return known_optimum(inst.base)
    return None


# --- file ingestion ----------------------------------------------------------

def load_linear_csv(path: Union[str, Path]) -> LinearInstance:
    """Read a linear instance: first row ``d,N``, then N rows of a_i followed by b_i"""
    path = Path(path)
    if not path.exists():
        raise InstanceFormatError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = [(num, row) for num, row in enumerate(csv.reader(f), start=1) if any(cell.strip() for cell in row)]
    if not rows:
        raise InstanceFormatError("empty file", row=1)

    num, header = rows[0]
    try:
        d, n = (int(cell) for cell in header)
    except ValueError:
        raise InstanceFormatError(f"header must be two integers d,N, got {header}", row=num)
    if d < 1:
        raise InstanceFormatError(f"dimension must be positive, got {d}", row=num)
    if n < 1:
        raise InstanceFormatError(f"need at least one component, got N={n}", row=num)

    body = rows[1:]
    if len(body) != n:
        bad_row = body[n][0] if len(body) > n else num + len(body) + 1
        raise InstanceFormatError(f"header declares N={n} rows, found {len(body)}", row=bad_row)

    data = np.empty((n, d + 1))
    for k, (num, row) in enumerate(body):
        if len(row) != d + 1:
            raise InstanceFormatError(f"expected {d + 1} values, got {len(row)}", row=num)
        try:
            data[k] = [float(cell) for cell in row]
        except ValueError:
            raise InstanceFormatError(f"non-numeric entry in {row}", row=num)
        if not np.all(np.isfinite(data[k])):
            raise InstanceFormatError("non-finite entry", row=num)
    return LinearInstance(data[:, :d], data[:, d])
