"""Point-cloud meshes of bounded domains in H^N with a zero exterior collar.

Nodes sit on an axis-aligned coordinate lattice anchored at the domain
centre.  Haar measure is Lebesgue measure in exponential coordinates, so every
node carries the cell volume ``h**(2N+1)``.  Lattice points strictly inside
the domain are *interior*; points outside (or on the boundary) but within
``collar_width`` of it form the *collar*, where fields are pinned to zero.
Everything farther out is dropped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .hgroup import GroupPoint, compose_arrays, koranyi_norm_arrays

INTERIOR = "interior"
COLLAR = "collar"

DEFAULT_MAX_NODES = 20000
_MAX_LATTICE = 5_000_000


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """A Koranyi ball ``{|c^{-1} o xi| < radius}`` or a coordinate box.

    Use :meth:`box` / :meth:`ball` rather than the raw constructor.
    """

    shape: str
    bounds: np.ndarray | None = None      # (2N+1, 2) for boxes
    radius: float | None = None
    center: np.ndarray | None = None      # coordinates, length 2N+1

    @classmethod
    def box(cls, bounds) -> "DomainSpec":
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if b.shape[0] % 2 != 1:
            raise MeshError("a box needs 2N+1 axis intervals")
        if np.any(b[:, 1] <= b[:, 0]):
            raise MeshError("box bounds must satisfy lo < hi on every axis")
        return cls("box", bounds=b, center=b.mean(axis=1))

    @classmethod
    def ball(cls, radius: float, center=None, N: int = 1) -> "DomainSpec":
        if not radius > 0:
            raise MeshError(f"ball radius must be positive (got {radius})")
        if center is None:
            c = np.zeros(2 * N + 1)
        elif isinstance(center, GroupPoint):
            c = center.as_array()
        else:
            c = np.asarray(center, dtype=float)
        return cls("koranyi_ball", radius=float(radius), center=c)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def N(self) -> int:
        return self.dim // 2

    @property
    def diameter(self) -> float:
        if self.shape == "box":
            return float(np.linalg.norm(self.bounds[:, 1] - self.bounds[:, 0]))
        return 2.0 * self.radius

    def signed_gap(self, P: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive inside and negative outside.

        Boxes use the Euclidean coordinate distance.  Balls use the radial
        gap ``radius - |c^{-1} o xi|``.
        """
        P = np.atleast_2d(P)
        if self.shape == "box":
            lo, hi = self.bounds[:, 0], self.bounds[:, 1]
            inside = np.min(np.minimum(P - lo, hi - P), axis=1)
            excess = np.maximum(np.maximum(lo - P, P - hi), 0.0)
            outside = np.sqrt(np.sum(excess * excess, axis=1))
            return np.where(inside > 0, inside, -outside)
        rel = compose_arrays(-self.center[None, :], P)
        return self.radius - koranyi_norm_arrays(rel)

    def _half_extent(self, pad: float) -> np.ndarray:
        if self.shape == "box":
            return 0.5 * (self.bounds[:, 1] - self.bounds[:, 0]) + pad
        rho = self.radius + pad
        N = self.N
        shear = 2.0 * rho * np.sum(np.abs(self.center[:2 * N]))
        return np.concatenate([np.full(2 * N, rho), [rho * rho + shear]])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Interior nodes first, then collar nodes, each in lattice order."""

    points: np.ndarray
    n_interior: int
    h: float
    collar_width: float
    domain: DomainSpec
    gaps: np.ndarray = field(repr=False)   # signed_gap at every node

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    @property
    def n_collar(self) -> int:
        return self.n_nodes - self.n_interior

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.dim // 2

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.full(self.n_nodes, self.h ** self.dim)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @cached_property
    def roles(self) -> np.ndarray:
        r = np.full(self.n_nodes, COLLAR, dtype=object)
        r[:self.n_interior] = INTERIOR
        return r

    @property
    def interior_idx(self) -> np.ndarray:
        return np.arange(self.n_interior)

    @property
    def collar_idx(self) -> np.ndarray:
        return np.arange(self.n_interior, self.n_nodes)

    @property
    def interior_points(self) -> np.ndarray:
        return self.points[:self.n_interior]

    @property
    def interior_volume(self) -> float:
        return self.n_interior * self.cell_volume

    @property
    def n_pairs(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    def node(self, i: int) -> GroupPoint:
        return GroupPoint.from_array(self.points[i])

    @property
    def nodes(self) -> list[GroupPoint]:
        return [GroupPoint.from_array(p) for p in self.points]

    def extend(self, u_interior) -> np.ndarray:
        """Pad an interior vector with zeros on the collar."""
        u_interior = np.asarray(u_interior, dtype=float)
        if u_interior.shape != (self.n_interior,):
            raise ValueError(
                f"expected {self.n_interior} interior values, got {u_interior.shape}")
        out = np.zeros(self.n_nodes)
        out[:self.n_interior] = u_interior
        return out

    def restrict(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_nodes,):
            raise ValueError(f"field has {u.shape} values, mesh has {self.n_nodes} nodes")
        return u[:self.n_interior]

    def radial_distance(self, idx=None) -> np.ndarray:
        """Koranyi distance of nodes from the domain centre."""
        P = self.points if idx is None else self.points[idx]
        return koranyi_norm_arrays(compose_arrays(-self.domain.center[None, :], P))


def build_mesh(spec: DomainSpec, h: float, collar_width: float,
               max_nodes: int = DEFAULT_MAX_NODES) -> Mesh:
    if not h > 0:
        raise MeshError(f"spacing h must be positive (got {h})")
    if not collar_width > 0:
        raise MeshError(f"collar_width must be positive (got {collar_width})")

    width = 2.0 * spec._half_extent(0.0)
    if h > width.min():
        # the centre is always a lattice point, but a single node cannot
        # resolve a domain narrower than one spacing
        raise MeshError(f"empty interior: h={h} exceeds the domain width {width.min():g}")
    half = spec._half_extent(collar_width)
    kmax = np.floor(half / h + 1e-9).astype(int)
    n_lattice = int(np.prod(2 * kmax + 1))
    if n_lattice > _MAX_LATTICE:
        raise MeshError(f"lattice of {n_lattice} points is too large for h={h}")

    axes = [spec.center[k] + h * np.arange(-kmax[k], kmax[k] + 1)
            for k in range(spec.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)

    gap = spec.signed_gap(grid)
    tol = 1e-9 * h
    inside = gap > tol
    collar = ~inside & (gap >= -(collar_width + tol))
    if not inside.any():
        raise MeshError(f"empty interior: h={h} is too coarse for the domain")
    if not collar.any():
        raise MeshError(f"empty collar: collar_width={collar_width} holds no lattice point at h={h}")
    n_nodes = int(inside.sum() + collar.sum())
    if n_nodes > max_nodes:
        raise MeshError(f"node budget exceeded: {n_nodes} > {max_nodes}")

    order = np.concatenate([np.flatnonzero(inside), np.flatnonzero(collar)])
    return Mesh(points=grid[order], n_interior=int(inside.sum()), h=float(h),
                collar_width=float(collar_width), domain=spec, gaps=gap[order])


def interior_subset(mesh: Mesh, margin: float) -> np.ndarray:
    """Interior nodes at least ``margin`` away from the boundary."""
    if not margin > 0:
        raise MeshError("margin must be positive")
    idx = np.flatnonzero(mesh.gaps[:mesh.n_interior] >= margin)
    if idx.size == 0:
        raise MeshError(f"no interior node lies {margin} away from the boundary")
    return idx


def boundary_strip(mesh: Mesh, eps: float) -> np.ndarray:
    """Interior nodes strictly closer than ``eps`` to the boundary."""
    if not eps > 0:
        raise MeshError("strip width must be positive")
    return np.flatnonzero(mesh.gaps[:mesh.n_interior] < eps)

