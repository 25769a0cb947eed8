"""Randomised invariant suites shared by the ``verify`` mode and the tests.

Each suite returns a :class:`CheckResult` whose ``value`` is the worst
observed quantity and ``limit`` the threshold it was held to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hgroup as hg
from .mesh import interior_subset
from .operator import KernelGraph, residual
from .solver import (SingularExponentField, SolveConfig, SourceField, check_prop1,
                     default_schedule, monotone_solve, regularized_gradient, solve_level)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    note: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"{flag} worst={self.value:.6e} limit={self.limit:.1e}{extra}"


# -- group algebra ------------------------------------------------------------

def _rand_points(rng, n, N, scale=1.0):
    return rng.uniform(-scale, scale, (n, 2 * N + 1))


def group_algebra(rng: np.random.Generator, samples: int = 10_000, N: int = 1,
                  rtol: float = 1e-12) -> list[CheckResult]:
    """Associativity, identity, inverse, homogeneity, symmetry, left invariance.

    Errors are measured relative to the size of the operands, so that
    cancellation in the vertical coordinate is not mistaken for a defect.
    """
    A, B, C = (_rand_points(rng, samples, N) for _ in range(3))
    mag = 1.0 + np.abs(A).max(1) + np.abs(B).max(1) + np.abs(C).max(1)
    comp, norm = hg.compose_arrays, hg.koranyi_norm_arrays
    zero = np.zeros_like(A)
    lam = rng.uniform(0.1, 10.0, samples)
    scale = np.column_stack([lam[:, None] * np.ones((1, 2 * N)), lam ** 2])

    def dist(X, Y):
        return norm(comp(-Y, X))

    errs = {
        "associativity": np.abs(comp(comp(A, B), C) - comp(A, comp(B, C))).max(1) / mag ** 2,
        "identity": np.maximum(np.abs(comp(A, zero) - A).max(1),
                               np.abs(comp(zero, A) - A).max(1)) / mag,
        "inverse": np.maximum(np.abs(comp(A, -A)).max(1), np.abs(comp(-A, A)).max(1)) / mag ** 2,
        "norm_homogeneity": np.abs(norm(A * scale) - lam * norm(A)) / (lam * mag),
        "norm_symmetry": np.abs(norm(-A) - norm(A)) / mag,
        "left_invariance": np.abs(dist(comp(C, A), comp(C, B)) - dist(A, B)) / mag,
    }
    return [CheckResult(f"group.{k}", bool(v.max() <= rtol), float(v.max()), rtol)
            for k, v in errs.items()]


# -- operator consistency ---------------------------------------------------------

def _central_difference(E, v, d, eps):
    """Fourth-order central difference of E along d.

    For p < 2 the energy's higher derivatives blow up where two nodal values
    nearly coincide, so the plain two-point rule is not accurate enough.
    """
    return (8.0 * (E(v + eps * d) - E(v - eps * d))
            - (E(v + 2 * eps * d) - E(v - 2 * eps * d))) / (12.0 * eps)


def gradient_consistency(graph: KernelGraph, rng: np.random.Generator, fields: int = 20,
                         rtol: float = 1e-6, full: bool | None = None) -> CheckResult:
    """Residual against central differences of energy/p.

    Small meshes (``full``) compare every component; larger ones compare
    directional derivatives along random directions.
    """
    mesh = graph.mesh
    ni = mesh.n_interior
    p = graph.p
    E = graph.energy_interior
    full = ni <= 200 if full is None else full
    eps = 1e-5
    worst = 0.0
    for _ in range(fields):
        v = rng.uniform(-1.0, 1.0, ni)
        R = residual(graph, mesh.extend(v))[:ni]
        if full:
            fd = np.array([_central_difference(E, v, e, eps) for e in np.eye(ni)]) / p
            err = np.max(np.abs(fd - R)) / np.max(np.abs(R))
        else:
            d = rng.standard_normal(ni)
            fd = _central_difference(E, v, d, eps) / p
            exact = float(R @ d)
            err = abs(fd - exact) / max(abs(exact), np.linalg.norm(R) * np.linalg.norm(d) * 1e-3)
        worst = max(worst, float(err))
    return CheckResult("operator.gradient", worst < rtol, worst, rtol,
                       "all components" if full else "directional")


def euler_lagrange(graph: KernelGraph, f: SourceField, delta: SingularExponentField,
                   n: int, u, tol: float) -> CheckResult:
    g = regularized_gradient(graph, f, n, delta, u)
    worst = float(np.max(np.abs(g)))
    return CheckResult("solver.euler_lagrange", worst < tol, worst, tol, f"level n={n}")


# -- solver invariants --------------------------------------------------------------

def prop1_suite(graph: KernelGraph, f: SourceField, delta: SingularExponentField,
                report, rng: np.random.Generator, count: int = 20,
                tol: float = 1e-8) -> CheckResult:
    """Variational inequality at every computed level against random test fields."""
    mesh = graph.mesh
    worst = np.inf
    for lv in report.levels:
        u = mesh.extend(lv.u)
        scale = max(float(lv.u.max()), 1e-12)
        for k in range(count):
            kind = k % 3
            if kind == 0:
                phi = rng.uniform(0, 2 * scale, mesh.n_interior)
            elif kind == 1:
                phi = lv.u * rng.uniform(0, 2)
            else:
                phi = lv.u + scale * 0.1 * rng.standard_normal(mesh.n_interior)
            worst = min(worst, check_prop1(graph, f, lv.n, delta, u, mesh.extend(phi)))
    return CheckResult("solver.prop1", worst >= -tol, worst, tol,
                       f"{count} fields x {len(report.levels)} levels")


def positivity(graph: KernelGraph, u, margin: float) -> CheckResult:
    idx = interior_subset(graph.mesh, margin)
    low = float(np.min(np.asarray(u)[idx]))
    return CheckResult("solver.positivity", low > 0, low, 0.0, f"{idx.size} nodes, margin {margin:g}")


def uniqueness_paths(graph: KernelGraph, f: SourceField, delta: SingularExponentField,
                     rng: np.random.Generator, n: int = 64, tol: float = 1e-8,
                     inner_tol: float | None = None) -> CheckResult:
    """Zero vs random start, and Newton vs gradient, must reach the same u_n."""
    mesh = graph.mesh
    if inner_tol is None:
        inner_tol = 1e-11 if graph.p == 2.0 else 1e-9
    cfg = SolveConfig(inner_tol=inner_tol, max_inner_iters=50_000)
    primary = cfg.resolved_method(graph.p)
    other = "gradient" if primary == "newton" else "newton"
    u0, _ = solve_level(graph, f, n, delta, init=None, cfg=cfg, method=primary)
    start = rng.uniform(0, 2 * max(float(u0.max()), 1e-3), mesh.n_interior)
    u1, _ = solve_level(graph, f, n, delta, init=start, cfg=cfg, method=primary)
    u2, _ = solve_level(graph, f, n, delta, init=None, cfg=cfg, method=other)
    diff = max(float(np.max(np.abs(u0 - u1))), float(np.max(np.abs(u0 - u2))))
    note = f"n={n}: zero/random start, {primary}/{other}"
    return CheckResult("solver.uniqueness", diff < tol, diff, tol, note)


def comparison_suite(graph: KernelGraph, f: SourceField, delta: SingularExponentField,
                     rng: np.random.Generator, pairs: int = 20, levels: int = 10,
                     tol: float = 1e-8, base: SolveConfig | None = None) -> CheckResult:
    """Ordered random source pairs must give ordered solutions.

    Both members of a pair run the same fixed schedule 1, 2, ..., 2^levels
    so that they are compared at the same regularisation level.
    """
    from .extremal import comparison_check

    base = base or SolveConfig()
    cfg = SolveConfig(n_schedule=default_schedule(levels), outer_tol=1e-300,
                      inner_tol=base.inner_tol, method=base.method, metric=base.metric,
                      max_inner_iters=base.max_inner_iters, strict=base.strict)
    worst = -np.inf
    for _ in range(pairs):
        f1 = SourceField(f.values * rng.uniform(0.1, 1.0, f.values.shape))
        f2 = SourceField(f1.values + f.values * rng.uniform(0.0, 1.0, f.values.shape))
        u1, _ = monotone_solve(graph, f1, delta, cfg)
        u2, _ = monotone_solve(graph, f2, delta, cfg)
        worst = max(worst, comparison_check(u1, u2, f1, f2, tol).max_excess)
    return CheckResult("solver.comparison", worst <= tol, worst, tol,
                       f"{pairs} pairs at n={cfg.n_schedule[-1]}")
