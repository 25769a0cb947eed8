"""Regularised singular problems and the monotone outer iteration.

For each level ``n`` the regularised equation

    L_{s,p} u = f_n (u^+ + 1/n)^{-delta(x)},   f_n = min(f, n),

is the Euler-Lagrange equation of the strictly convex energy

    I_n(u) = ||u||^p / p - sum_i f_n,i G_n(u_i; delta_i) vol_i,

so each level is solved by descent on ``I_n`` (damped Newton or a
preconditioned gradient method, both with Armijo backtracking).  Levels are
warm-started from the previous one; the iterates increase with ``n`` and
their pointwise limit is the discrete singular solution.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .hgroup import ModelParams
from .mesh import Mesh, boundary_strip
from .operator import KernelGraph

log = logging.getLogger(__name__)

POSITIVITY_FLOOR = -1e-10
METRICS = ("kacanov", "sobolev", "jacobi", "euclidean")


class SolverError(RuntimeError):
    pass


class MonotonicityError(SolverError):
    pass


class PositivityError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class SingularExponentField:
    """Per-interior-node singular exponent delta(x) > 0.

    ``epsilon`` and ``delta_star`` describe the boundary-strip condition
    (delta <= delta_star within epsilon of the boundary).
    """

    values: np.ndarray
    epsilon: float | None = None
    delta_star: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("delta must be a non-empty vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("delta must be positive everywhere")
        object.__setattr__(self, "values", v)
        if self.delta_star is not None and self.delta_star < 1:
            raise ValueError(f"delta_star must be >= 1 (got {self.delta_star})")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def constant(cls, mesh: Mesh, value: float, **kw) -> "SingularExponentField":
        return cls(np.full(mesh.n_interior, float(value)), **kw)

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))

    @property
    def constant_value(self) -> float | None:
        return float(self.values[0]) if self.is_constant else None

    def effective_star(self, mesh: Mesh | None = None) -> float:
        """The bound used by the a-priori estimates.

        For constant delta this is delta itself; otherwise the declared
        ``delta_star`` (or, failing that, the max over the boundary strip).
        """
        if self.is_constant:
            return self.constant_value
        if self.delta_star is not None:
            return float(self.delta_star)
        if mesh is not None and self.epsilon is not None:
            strip = boundary_strip(mesh, self.epsilon)
            if strip.size:
                return max(1.0, float(self.values[strip].max()))
        return max(1.0, float(self.values.max()))


@dataclass(frozen=True, eq=False)
class SourceField:
    """Nonnegative, not identically zero source on the interior nodes."""

    values: np.ndarray
    m: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("source must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("source must be finite")
        if np.any(v < 0):
            raise ValueError("source must be nonnegative (f >= 0)")
        if not np.any(v > 0):
            raise ValueError("source must not vanish identically (f = 0 is excluded)")
        if self.m is not None and self.m < 1:
            raise ValueError(f"integrability exponent m must be >= 1 (got {self.m})")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh: Mesh, value: float, m: float | None = None) -> "SourceField":
        return cls(np.full(mesh.n_interior, float(value)), m=m)

    def scaled(self, factor: float) -> "SourceField":
        return SourceField(self.values * factor, m=self.m)


def default_schedule(K: int = 40) -> tuple[int, ...]:
    return tuple(2 ** k for k in range(K + 1))


@dataclass
class SolveConfig:
    n_schedule: tuple[int, ...] = field(default_factory=default_schedule)
    inner_tol: float | None = None      # None: 1e-8 for Newton, 1e-6 otherwise
    outer_tol: float = 1e-6
    max_inner_iters: int | None = None  # None: 200 for Newton, 20000 otherwise
    method: str = "auto"                # auto | newton | gradient
    metric: str = "kacanov"             # gradient preconditioner, see _Metric
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 60
    monotonicity_slack: float = 1e-8
    norm_slack: float = 1e-10
    strict: bool = True

    def __post_init__(self):
        sched = tuple(int(n) for n in self.n_schedule)
        if not sched or sched[0] < 1 or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("n_schedule must be strictly increasing positive integers")
        self.n_schedule = sched
        for name in ("outer_tol", "monotonicity_slack", "norm_slack"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.inner_tol is not None and not self.inner_tol > 0:
            raise ValueError("inner_tol must be positive")
        if self.method not in ("auto", "newton", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise ValueError("Armijo parameters must lie in (0,1)")

    def resolved_method(self, p: float) -> str:
        if self.method == "auto":
            return "newton" if p == 2.0 else "gradient"
        return self.method

    def resolved_tol(self, p: float) -> float:
        if self.inner_tol is not None:
            return self.inner_tol
        return 1e-8 if self.resolved_method(p) == "newton" else 1e-6

    def resolved_max_iters(self, p: float) -> int:
        if self.max_inner_iters is not None:
            return self.max_inner_iters
        return 200 if self.resolved_method(p) == "newton" else 20000


@dataclass
class LevelStats:
    n: int
    iterations: int
    residual: float
    norm: float
    min_interior: float
    energy: float
    u: np.ndarray = field(repr=False)   # interior values


@dataclass
class SolveReport:
    levels: list[LevelStats]
    converged: bool
    u: np.ndarray                       # full field, zero on the collar
    wall_time: float
    method: str
    graph: KernelGraph | None = field(default=None, repr=False)
    monotone: bool = True
    min_increment: float = math.inf     # min over levels of min(u_next - u_prev)
    max_norm_drop: float = 0.0          # max over levels of ||u_prev|| - ||u_next||

    @property
    def norms(self) -> list[float]:
        return [lv.norm for lv in self.levels]


# -- pointwise pieces -------------------------------------------------------

def truncate_source(f: SourceField, n: int) -> SourceField:
    if n < 1:
        raise ValueError("truncation level n must be >= 1")
    return SourceField(np.minimum(f.values, float(n)), m=f.m)


def g_n_primitive(t, n: int, delta):
    """Primitive of (t^+ + 1/n)^(-delta) extended linearly for t < 0.

    For delta != 1 this is ``(t^+ + 1/n)^(1-delta)/(1-delta) - n^delta t^-``
    (not zero at t = 0); for delta == 1 the logarithmic branch
    ``log(n t^+ + 1) - n t^-`` is used, which vanishes at 0.
    """
    t = np.asarray(t, dtype=float)
    d = np.broadcast_to(np.asarray(delta, dtype=float), t.shape)
    if np.any(d <= 0):
        raise ValueError("delta must be positive")
    tp = np.maximum(t, 0.0)
    tm = np.maximum(-t, 0.0)
    inv = 1.0 / n
    is_log = d == 1.0
    e = np.where(is_log, 0.5, 1.0 - d)          # placeholder exponent on the log branch
    power = (tp + inv) ** e / e - float(n) ** d * tm
    logb = np.log1p(n * tp) - n * tm
    out = np.where(is_log, logb, power)
    return out if out.ndim else float(out)


def _g_shift(n: int, delta: np.ndarray) -> np.ndarray:
    return np.asarray(g_n_primitive(np.zeros_like(delta), n, delta))


def _rhs(v: np.ndarray, fn: np.ndarray, n: int, delta: np.ndarray, vol: float) -> np.ndarray:
    return fn * vol * (np.maximum(v, 0.0) + 1.0 / n) ** (-delta)


class _Level:
    """Objective, gradient and curvature of I_n on interior vectors."""

    def __init__(self, graph: KernelGraph, f: SourceField, n: int, delta: SingularExponentField):
        self.graph = graph
        self.n = n
        self.fn = np.minimum(f.values, float(n))
        self.delta = delta.values
        self.vol = graph.mesh.cell_volume
        self.shift = _g_shift(n, self.delta)
        self.p = graph.p

    def energy(self, v):
        G = np.asarray(g_n_primitive(v, self.n, self.delta)) - self.shift
        return self.graph.energy_interior(v) / self.p - self.vol * float(np.dot(self.fn, G))

    def magnitude(self, v):
        """Size of the two terms of I_n, which sets its rounding error."""
        G = np.abs(g_n_primitive(v, self.n, self.delta)) + np.abs(self.shift)
        return self.graph.energy_interior(v) / self.p + self.vol * float(np.dot(self.fn, G))

    def grad(self, v):
        return self.graph.grad_interior(v) - _rhs(v, self.fn, self.n, self.delta, self.vol)

    def source_curvature(self, v):
        pos = v > 0
        c = np.zeros_like(v)
        c[pos] = (self.fn[pos] * self.vol * self.delta[pos]
                  * (v[pos] + 1.0 / self.n) ** (-self.delta[pos] - 1.0))
        return c


def regularized_energy(graph: KernelGraph, f: SourceField, n: int,
                       delta: SingularExponentField, u) -> float:
    """I_n(u) with the source primitive shifted so that I_n(0) = 0."""
    v = graph.mesh.restrict(u)
    return _Level(graph, f, n, delta).energy(v)


def regularized_gradient(graph: KernelGraph, f: SourceField, n: int,
                         delta: SingularExponentField, u) -> np.ndarray:
    v = graph.mesh.restrict(u)
    return graph.mesh.extend(_Level(graph, f, n, delta).grad(v))


# -- inner solve ------------------------------------------------------------

def _armijo(level: _Level, v, F, g, d, t0, cfg: SolveConfig):
    """Backtracking line search on I_n.

    Accepts the first step with sufficient decrease.  Once energy
    differences drop to the rounding level of I_n the decrease cannot be
    measured; a step is then accepted only if it lowers the residual
    sup-norm.  Returns (t, new point, new energy, new gradient, noisy) where
    ``noisy`` marks acceptance by the residual test.
    """
    slope = float(np.dot(g, d))
    if slope >= 0:
        raise SolverError("search direction is not a descent direction")
    res = float(np.max(np.abs(g)))
    noise = 8 * np.finfo(float).eps * level.magnitude(v)
    t = t0
    for _ in range(cfg.max_backtracks):
        w = v + t * d
        Fw = level.energy(w)
        if abs(Fw - F) <= noise:
            gw = level.grad(w)
            if float(np.max(np.abs(gw))) < res:
                return t, w, Fw, gw, True
        elif Fw <= F + cfg.armijo_c * t * slope:
            return t, w, Fw, level.grad(w), False
        t *= cfg.backtrack
    raise SolverError("line search failed: no sufficient decrease after "
                      f"{cfg.max_backtracks} backtracks")


def _chol_solve(M, g):
    try:
        return cho_solve(cho_factor(M), g)
    except LinAlgError:
        return None


class _Metric:
    """Preconditioner for gradient steps: d = -M^{-1} g.

    ``sobolev`` is the (fixed) p = 2 stiffness matrix; ``kacanov`` the
    lagged-diffusivity matrix with weights w_ij |u_i - u_j|^(p-2) at the
    current iterate (equal to ``sobolev`` when p = 2).
    """

    def __init__(self, graph: KernelGraph, kind: str):
        self.graph = graph
        self.kind = "sobolev" if (kind == "kacanov" and graph.p == 2.0) else kind
        if self.kind in ("sobolev", "kacanov"):
            self._fac = cho_factor(graph.hessian_interior(None))
        if self.kind == "jacobi":
            self._diag = 2.0 * (graph.row_sums + graph.collar_sums)

    def __call__(self, v, g):
        if self.kind == "kacanov":
            scale = float(np.max(np.abs(v)))
            if scale > 0:
                K = self.graph.hessian_interior(v, floor=1e-8 * scale)
                K /= self.graph.p - 1.0
                d = _chol_solve(K, g)
                if d is not None and np.all(np.isfinite(d)):
                    return d
            return cho_solve(self._fac, g)
        if self.kind == "sobolev":
            return cho_solve(self._fac, g)
        if self.kind == "jacobi":
            return g / self._diag
        return g


def solve_level(graph: KernelGraph, f: SourceField, n: int,
                delta: SingularExponentField, init=None,
                cfg: SolveConfig | None = None, *, method: str | None = None,
                metric: str | None = None):
    """Minimise I_n from ``init``; returns (full field, LevelStats)."""
    cfg = cfg or SolveConfig()
    mesh = graph.mesh
    _check_lengths(mesh, f, delta)
    if init is None:
        v = np.zeros(mesh.n_interior)
    else:
        init = np.asarray(init, dtype=float)
        if init.shape == (mesh.n_nodes,):
            if np.any(init[mesh.n_interior:] != 0):
                raise ValueError("initial field must vanish on the collar")
            init = init[:mesh.n_interior]
        v = np.array(init, dtype=float)
        if v.shape != (mesh.n_interior,):
            raise ValueError("initial field does not match the mesh")
    p = graph.p
    method = method or cfg.resolved_method(p)
    tol = cfg.resolved_tol(p)
    max_it = cfg.resolved_max_iters(p)
    level = _Level(graph, f, n, delta)

    if method == "newton":
        H_E = graph.hessian_interior(None) if p == 2.0 else None
    else:
        precond = _Metric(graph, metric or cfg.metric)

    F = level.energy(v)
    g = level.grad(v)
    res = float(np.max(np.abs(g)))
    step = cfg.initial_step
    it = 0
    # Always take one step, so a warm start that already meets ``tol`` still
    # moves and level-to-level differences are not masked by solver error.
    while res >= tol or (it == 0 and res > 0):
        if it >= max_it:
            raise SolverError(f"level n={n}: {max_it} iterations exceeded "
                              f"(residual {res:.3e} > {tol:.1e})")
        if method == "newton":
            if H_E is not None:
                H = H_E.copy()
            else:
                H = graph.hessian_interior(v, floor=1e-8 * max(float(np.max(np.abs(v))), 1e-300))
            H[np.diag_indices_from(H)] += level.source_curvature(v)
            d = _chol_solve(H, g)
            if d is None or not np.all(np.isfinite(d)):
                d = cho_solve(cho_factor(graph.hessian_interior(None)), g)
            t, v, F, g, _ = _armijo(level, v, F, g, -d, 1.0, cfg)
        else:
            t, v, F, g, noisy = _armijo(level, v, F, g, -precond(v, g), step, cfg)
            # a step accepted on the residual test says nothing about scale
            step = cfg.initial_step if noisy else min(t / cfg.backtrack, 1e8)
        res = float(np.max(np.abs(g)))
        it += 1

    if v.min() < POSITIVITY_FLOOR:
        raise PositivityError(f"level n={n}: negative interior value {v.min():.3e}")
    norm = graph.energy_interior(v) ** (1.0 / p)
    stats = LevelStats(n=n, iterations=it, residual=res, norm=norm,
                       min_interior=float(v.min()), energy=F, u=v.copy())
    return mesh.extend(v), stats


def _check_lengths(mesh: Mesh, f: SourceField, delta: SingularExponentField):
    if f.values.shape != (mesh.n_interior,):
        raise ValueError("source field does not match the mesh interior")
    if delta.values.shape != (mesh.n_interior,):
        raise ValueError("delta field does not match the mesh interior")


def monotone_solve(graph: KernelGraph, f: SourceField, delta: SingularExponentField,
                   cfg: SolveConfig | None = None):
    """Run the regularisation levels with warm starts until they settle.

    Returns ``(u, report)`` where ``u`` is the last computed level.  Raises
    :class:`MonotonicityError` (when ``cfg.strict``) if a level drops below
    its predecessor by more than the configured slack.
    """
    cfg = cfg or SolveConfig()
    t0 = time.perf_counter()
    method = cfg.resolved_method(graph.p)
    levels: list[LevelStats] = []
    prev = None
    converged = False
    monotone = True
    min_inc = math.inf
    max_drop = 0.0
    for n in cfg.n_schedule:
        _, st = solve_level(graph, f, n, delta, init=None if prev is None else prev.u,
                            cfg=cfg)
        levels.append(st)
        log.debug("level n=%d: %d its, residual %.2e, norm %.12g, min %.6g",
                  n, st.iterations, st.residual, st.norm, st.min_interior)
        if prev is None:
            if not math.isfinite(cfg.outer_tol):
                converged = True
                prev = st
                break
            prev = st
            continue
        inc = float(np.min(st.u - prev.u))
        drop = prev.norm - st.norm
        min_inc = min(min_inc, inc)
        max_drop = max(max_drop, drop)
        if inc < -cfg.monotonicity_slack or drop > cfg.norm_slack:
            monotone = False
            msg = (f"monotonicity violated between n={prev.n} and n={n}: "
                   f"min increment {inc:.3e}, norm drop {drop:.3e}")
            if cfg.strict:
                raise MonotonicityError(msg)
            log.warning(msg)
        diff = float(np.max(np.abs(st.u - prev.u)))
        prev = st
        if diff < cfg.outer_tol:
            converged = True
            break

    report = SolveReport(levels=levels, converged=converged,
                         u=graph.mesh.extend(prev.u),
                         wall_time=time.perf_counter() - t0, method=method,
                         graph=graph, monotone=monotone, min_increment=min_inc,
                         max_norm_drop=max_drop)
    return report.u, report


# -- diagnostics --------------------------------------------------------------

def check_prop1(graph: KernelGraph, f: SourceField, n: int, delta, u_n, phi) -> float:
    """||phi||^p + p sum (u_n - phi)(u_n + 1/n)^-delta f_n vol - ||u_n||^p.

    Nonnegative whenever ``u_n`` minimises the level-n energy.
    """
    mesh = graph.mesh
    d = delta.values if isinstance(delta, SingularExponentField) else np.broadcast_to(
        np.asarray(delta, dtype=float), (mesh.n_interior,))
    u = mesh.restrict(u_n)
    ph = np.asarray(phi, dtype=float)
    if ph.shape != (mesh.n_nodes,):
        raise ValueError("test field does not match the mesh")
    if np.any(ph[mesh.n_interior:] != 0):
        raise ValueError("test field must vanish on the collar")
    ph = ph[:mesh.n_interior]
    p = graph.p
    fn = np.minimum(f.values, float(n))
    pair = float(np.sum((u - ph) * (np.maximum(u, 0.0) + 1.0 / n) ** (-d) * fn)
                 * mesh.cell_volume)
    return graph.energy_interior(ph) + p * pair - graph.energy_interior(u)


@dataclass
class AprioriReport:
    exponent: float            # q in ||u_n^q||; 1 means the plain norm
    label: str
    values: list[float]
    bounded: bool


def apriori_norm_report(report: SolveReport, delta: SingularExponentField,
                        f: SourceField, params: ModelParams,
                        slack: float = 1e-6) -> AprioriReport:
    """Per-level norms in the quantity the a-priori bounds control.

    delta_star = 1 or constant delta <= 1: ||u_n||.  Larger exponents:
    ||u_n^((d + p - 1)/p)|| with d the (effective) bound.
    """
    graph = report.graph
    if graph is None:
        raise ValueError("report carries no kernel graph")
    dstar = delta.effective_star(graph.mesh)
    if dstar <= 1.0:
        q = 1.0
        label = "||u_n||"
    else:
        q = (dstar + params.p - 1.0) / params.p
        label = f"||u_n^{q:.6g}||"
    vals = []
    for lv in report.levels:
        w = np.maximum(lv.u, 0.0) ** q
        vals.append(graph.energy_interior(w) ** (1.0 / params.p))
    bounded = bool(vals) and all(v <= vals[-1] * (1.0 + slack) for v in vals)
    return AprioriReport(exponent=q, label=label, values=vals, bounded=bounded)
