"""Discrete nonlocal energy and fractional p-Laplace residual on a mesh.

Fields are plain float arrays with one value per mesh node (interior nodes
first).  A :class:`KernelGraph` stores the pair weights

    w_ij = vol_i * vol_j * |x_j^{-1} o x_i|^{-(Q+sp)}

in three dense blocks (interior/interior, interior/collar, collar/collar);
the last one is only built when a field with nonzero collar values is
evaluated, since admissible fields vanish there.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .hgroup import ModelParams, distance_matrix
from .mesh import Mesh

_CHUNK = 256


def j_p(t, p: float):
    """|t|^(p-2) t, extended by 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    if p == 2.0:
        return t.copy() if t.ndim else float(t)
    a = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, np.sign(t) * a ** (p - 1.0), 0.0)
    return out if out.ndim else float(out)


def _abs_pow(t: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(t)
    return a * a if p == 2.0 else a ** p


def _weights(A: np.ndarray, B: np.ndarray, va: float, vb: float,
             params: ModelParams, cutoff: float | None) -> np.ndarray:
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], _CHUNK):
        d = distance_matrix(A[s:s + _CHUNK], B)
        with np.errstate(divide="ignore"):
            w = va * vb * d ** (-params.kernel_exponent)
        if cutoff is not None:
            w[d > cutoff] = 0.0
        out[s:s + _CHUNK] = w
    return out


@dataclass(eq=False)
class KernelGraph:
    mesh: Mesh
    params: ModelParams
    W_ii: np.ndarray          # zero diagonal
    W_ic: np.ndarray
    cutoff: float | None = None

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def n_interior(self) -> int:
        return self.mesh.n_interior

    @cached_property
    def collar_sums(self) -> np.ndarray:
        """Total weight each interior node carries to the collar."""
        return self.W_ic.sum(axis=1)

    @cached_property
    def row_sums(self) -> np.ndarray:
        return self.W_ii.sum(axis=1)

    @cached_property
    def W_cc(self) -> np.ndarray:
        C = self.mesh.points[self.mesh.n_interior:]
        v = self.mesh.cell_volume
        W = _weights(C, C, v, v, self.params, self.cutoff)
        np.fill_diagonal(W, 0.0)
        return W

    def dense(self) -> np.ndarray:
        """Full symmetric n x n weight matrix (small meshes only)."""
        ni = self.n_interior
        n = self.mesh.n_nodes
        W = np.zeros((n, n))
        W[:ni, :ni] = self.W_ii
        W[:ni, ni:] = self.W_ic
        W[ni:, :ni] = self.W_ic.T
        W[ni:, ni:] = self.W_cc
        return W

    def pairs(self):
        """Unordered pairs ``(i, j, w_ij)`` with ``i < j`` in row-major order."""
        W = self.dense()
        i, j = np.triu_indices(W.shape[0], k=1)
        w = W[i, j]
        keep = w > 0
        return i[keep], j[keep], w[keep]

    # -- fast paths on interior vectors (collar pinned at zero) ---------------

    def energy_interior(self, v: np.ndarray) -> float:
        p = self.p
        D = v[:, None] - v[None, :]
        return float(np.sum(self.W_ii * _abs_pow(D, p))
                     + 2.0 * np.dot(self.collar_sums, _abs_pow(v, p)))

    def grad_interior(self, v: np.ndarray) -> np.ndarray:
        """Gradient of energy/p with respect to the interior values."""
        p = self.p
        if p == 2.0:
            return 2.0 * (self.row_sums * v - self.W_ii @ v
                          + self.collar_sums * v)
        D = v[:, None] - v[None, :]
        return 2.0 * (np.sum(self.W_ii * j_p(D, p), axis=1)
                      + self.collar_sums * j_p(v, p))

    def hessian_interior(self, v: np.ndarray | None = None,
                         floor: float = 0.0) -> np.ndarray:
        """Hessian of energy/p at ``v``.

        For p < 2 the factor |d|^(p-2) is unbounded near d = 0; ``floor``
        replaces |d| by sqrt(d^2 + floor^2) there.  At p = 2 ``v`` is unused.
        """
        p = self.p
        if p == 2.0 or v is None:
            A = -self.W_ii.copy()
            A[np.diag_indices_from(A)] = self.row_sums + self.collar_sums
            return 2.0 * A
        D = v[:, None] - v[None, :]
        M = self.W_ii * (p - 1.0) * _soft_pow(D, p - 2.0, floor)
        np.fill_diagonal(M, 0.0)
        diag = M.sum(axis=1) + self.collar_sums * (p - 1.0) * _soft_pow(v, p - 2.0, floor)
        H = -M
        H[np.diag_indices_from(H)] = diag
        return 2.0 * H


def _soft_pow(t: np.ndarray, e: float, floor: float) -> np.ndarray:
    a2 = t * t + floor * floor
    with np.errstate(divide="ignore"):
        out = a2 ** (0.5 * e)
    return np.where(np.isfinite(out), out, 0.0)


def assemble(mesh: Mesh, params: ModelParams, cutoff: float | None = None) -> KernelGraph:
    """Weight every node pair with the singular kernel times both volumes.

    ``cutoff`` (Koranyi distance) drops far pairs; off by default.
    """
    if mesh.dim != params.dim:
        raise ValueError(f"mesh is {mesh.dim}-dimensional, params expect {params.dim}")
    ni = mesh.n_interior
    v = mesh.cell_volume
    I = mesh.points[:ni]
    C = mesh.points[ni:]
    W_ii = _weights(I, I, v, v, params, cutoff)
    np.fill_diagonal(W_ii, 0.0)
    W_ic = _weights(I, C, v, v, params, cutoff)
    if not (np.all(np.isfinite(W_ii)) and np.all(np.isfinite(W_ic))):
        raise ValueError("coincident mesh nodes: kernel is singular")
    return KernelGraph(mesh, params, W_ii, W_ic, cutoff)


def _check_field(graph: KernelGraph, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (graph.mesh.n_nodes,):
        raise ValueError(
            f"field has shape {u.shape}, mesh has {graph.mesh.n_nodes} nodes")
    return u


def energy_seminorm_p(graph: KernelGraph, u) -> float:
    """Sum over ordered pairs of w_ij |u_i - u_j|^p, i.e. ||u||^p."""
    u = _check_field(graph, u)
    ni = graph.n_interior
    ui, uc = u[:ni], u[ni:]
    if not np.any(uc):
        return graph.energy_interior(ui)
    p = graph.p
    e = np.sum(graph.W_ii * _abs_pow(ui[:, None] - ui[None, :], p))
    e += 2.0 * np.sum(graph.W_ic * _abs_pow(ui[:, None] - uc[None, :], p))
    e += np.sum(graph.W_cc * _abs_pow(uc[:, None] - uc[None, :], p))
    return float(e)


def seminorm(graph: KernelGraph, u) -> float:
    return energy_seminorm_p(graph, u) ** (1.0 / graph.p)


def residual(graph: KernelGraph, u) -> np.ndarray:
    """Discrete L_{s,p}u tested against nodal indicators; zero on the collar."""
    u = _check_field(graph, u)
    ni = graph.n_interior
    ui, uc = u[:ni], u[ni:]
    out = np.zeros_like(u)
    if not np.any(uc):
        out[:ni] = graph.grad_interior(ui)
        return out
    p = graph.p
    out[:ni] = 2.0 * (np.sum(graph.W_ii * j_p(ui[:, None] - ui[None, :], p), axis=1)
                      + np.sum(graph.W_ic * j_p(ui[:, None] - uc[None, :], p), axis=1))
    return out


def pairing(graph: KernelGraph, u, v) -> float:
    """Sum over ordered pairs of w_ij J_p(u_i - u_j)(v_i - v_j)."""
    u = _check_field(graph, u)
    v = _check_field(graph, v)
    W = graph.dense()
    return float(np.sum(W * j_p(u[:, None] - u[None, :], graph.p)
                        * (v[:, None] - v[None, :])))


def weighted_lq_integral(mesh: Mesh, u, weight, q: float, signed: bool = False) -> float:
    """Sum over interior nodes of weight_i * |u_i|^q * vol_i.

    ``|u|^0`` is taken as 1 everywhere.  With ``signed=True`` and ``q == 1``
    the sign of ``u`` is kept.  Fractional ``q`` on negative values raises.
    """
    u = np.asarray(u, dtype=float)
    if u.shape == (mesh.n_nodes,):
        u = u[:mesh.n_interior]
    elif u.shape != (mesh.n_interior,):
        raise ValueError("field does not match the mesh")
    w = np.asarray(weight, dtype=float)
    if w.shape == (mesh.n_nodes,):
        w = w[:mesh.n_interior]
    w = np.broadcast_to(w, u.shape)
    if q == 0:
        vals = np.ones_like(u)
    elif signed and q == 1:
        vals = u
    else:
        if float(q) != int(q) and np.any(u < 0):
            raise ValueError("negative base with a fractional exponent")
        vals = np.abs(u) ** q
    return float(np.sum(w * vals) * mesh.cell_volume)
