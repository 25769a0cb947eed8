"""Arithmetic on the Heisenberg group H^N in exponential coordinates.

Points are stored as ``(x, y, t)`` with ``x, y`` in R^N and ``t`` real.  The
vectorised helpers at the bottom work on arrays of shape ``(M, 2N+1)`` laid
out as ``[x_1..x_N, y_1..y_N, t]`` and are what the mesh and operator code
use; the :class:`GroupPoint` API is the readable single-point surface.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Problem constants: dimension ``N``, order ``s`` and exponent ``p``."""

    N: int = 1
    s: float = 0.5
    p: float = 2.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer (got {self.N})")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0,1) (got {float(self.s):g})")
        if not 1.0 < self.p < np.inf:
            raise ValueError(f"p must lie in (1,inf) (got {float(self.p):g})")
        if self.s * self.p >= self.Q:
            raise ValueError(
                f"sp < Q violated ({float(self.s * self.p):g} ≥ {self.Q})")

    @property
    def Q(self) -> int:
        """Homogeneous dimension 2N + 2."""
        return 2 * int(self.N) + 2

    @property
    def dim(self) -> int:
        """Number of exponential coordinates, 2N + 1."""
        return 2 * int(self.N) + 1

    @property
    def kernel_exponent(self) -> float:
        return self.Q + self.s * self.p


@dataclass(frozen=True, eq=False)
class GroupPoint:
    x: np.ndarray
    y: np.ndarray
    t: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be vectors of equal length")
        t = float(self.t)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.isfinite(t)):
            raise ValueError("GroupPoint entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @classmethod
    def origin(cls, N: int = 1) -> "GroupPoint":
        return cls(np.zeros(N), np.zeros(N), 0.0)

    @classmethod
    def from_array(cls, a) -> "GroupPoint":
        a = np.asarray(a, dtype=float)
        if a.ndim != 1 or a.shape[0] % 2 != 1:
            raise ValueError("coordinate vector must have odd length 2N+1")
        N = a.shape[0] // 2
        return cls(a[:N], a[N:2 * N], a[-1])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, [self.t]])

    def __eq__(self, other):
        if not isinstance(other, GroupPoint):
            return NotImplemented
        return (self.N == other.N and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y) and self.t == other.t)

    def __hash__(self):
        return hash(tuple(self.as_array()))

    def __repr__(self):
        return f"GroupPoint(x={self.x.tolist()}, y={self.y.tolist()}, t={self.t!r})"


def _check_same_dim(a: GroupPoint, b: GroupPoint):
    if a.N != b.N:
        raise ValueError(f"dimension mismatch: N={a.N} vs N={b.N}")


def compose(a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """Group law a o b."""
    _check_same_dim(a, b)
    t = a.t + b.t + 2.0 * np.dot(a.y, b.x) - 2.0 * np.dot(a.x, b.y)
    return GroupPoint(a.x + b.x, a.y + b.y, t)


def inverse(a: GroupPoint) -> GroupPoint:
    return GroupPoint(-a.x, -a.y, -a.t)


def dilate(lam: float, a: GroupPoint) -> GroupPoint:
    """Anisotropic dilation (lam x, lam y, lam^2 t)."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive (got {lam})")
    return GroupPoint(lam * a.x, lam * a.y, lam * lam * a.t)


def koranyi_norm(a: GroupPoint) -> float:
    r2 = np.dot(a.x, a.x) + np.dot(a.y, a.y)
    return float((r2 * r2 + a.t * a.t) ** 0.25)


def distance(a: GroupPoint, b: GroupPoint) -> float:
    """Left-invariant Koranyi distance |b^{-1} o a|."""
    return koranyi_norm(compose(inverse(b), a))


def kernel(a: GroupPoint, b: GroupPoint, params: ModelParams) -> float:
    """Singular kernel distance(a, b)^-(Q+sp)."""
    d = distance(a, b)
    if d == 0.0:
        raise ValueError("kernel evaluated at coincident points")
    return d ** (-params.kernel_exponent)


# -- vectorised forms on (M, 2N+1) coordinate arrays ---------------------------

def _split(P: np.ndarray):
    N = P.shape[-1] // 2
    return P[..., :N], P[..., N:2 * N], P[..., -1]


def compose_arrays(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-1] != B.shape[-1]:
        raise ValueError("dimension mismatch")
    ax, ay, at = _split(A)
    bx, by, bt = _split(B)
    t = at + bt + 2.0 * np.sum(ay * bx, axis=-1) - 2.0 * np.sum(ax * by, axis=-1)
    return np.concatenate([ax + bx, ay + by, t[..., None]], axis=-1)


def koranyi_norm_arrays(P: np.ndarray) -> np.ndarray:
    x, y, t = _split(np.asarray(P, dtype=float))
    r2 = np.sum(x * x, axis=-1) + np.sum(y * y, axis=-1)
    return np.sqrt(np.sqrt(r2 * r2 + t * t))


def distance_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise Koranyi distances ``D[i, j] = |B_j^{-1} o A_i|``.

    Expanding the group law, ``B_j^{-1} o A_i`` has horizontal part
    ``A_i - B_j`` and vertical part ``t_i - t_j - 2<y_j, x_i> + 2<x_j, y_i>``,
    so the whole matrix is a few outer products.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    ax, ay, at = _split(A)
    bx, by, bt = _split(B)
    h = A[:, None, :-1] - B[None, :, :-1]
    r2 = np.einsum("ijk,ijk->ij", h, h)
    tv = (at[:, None] - bt[None, :]
          - 2.0 * (by @ ax.T).T
          + 2.0 * (bx @ ay.T).T)
    return np.sqrt(np.sqrt(r2 * r2 + tv * tv))
