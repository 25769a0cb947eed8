"""Exponent calculators, integrability studies and algebraic-inequality suites.

The calculators are written with plain arithmetic so that exact inputs
(``fractions.Fraction`` for ``s``, ``p``, ``delta``, ``m``) give exact results.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .hgroup import ModelParams
from .mesh import Mesh, boundary_strip
from .operator import j_p
from .solver import SingularExponentField


class ExponentError(ValueError):
    pass


def sobolev_exponent(params: ModelParams):
    """Critical exponent Qp / (Q - sp)."""
    Q, s, p = params.Q, params.s, params.p
    if s * p >= Q:
        raise ExponentError(f"sp < Q violated ({float(s * p):g} ≥ {Q})")
    return Q * p / (Q - s * p)


def conjugate(l):
    """Hölder conjugate l / (l - 1); the conjugate of 1 is infinity."""
    if l < 1:
        raise ExponentError(f"conjugate exponent needs l >= 1 (got {l})")
    if l == 1:
        return np.inf
    return l / (l - 1)


def linf_threshold(params: ModelParams):
    """Q / (sp): sources integrable beyond this give bounded solutions."""
    return params.Q / (params.s * params.p)


class Case(enum.Enum):
    VARIABLE = "variable"      # delta(x) with strip bound delta_star
    LT1 = "delta<1"
    EQ1 = "delta=1"
    GT1 = "delta>1"

    @classmethod
    def for_constant(cls, delta) -> "Case":
        if not delta > 0:
            raise ExponentError(f"delta must be positive (got {delta})")
        if delta < 1:
            return cls.LT1
        return cls.EQ1 if delta == 1 else cls.GT1


def _check_case(case: Case, delta):
    if case is Case.VARIABLE:
        if delta < 1:
            raise ExponentError(f"delta_star must be >= 1 (got {delta})")
    elif Case.for_constant(delta) is not case:
        raise ExponentError(f"delta = {delta} does not belong to case {case.value}")


def required_m(case: Case, delta, params: ModelParams):
    """Integrability of f assumed by the existence results in each case.

    ``delta`` is delta_star for :attr:`Case.VARIABLE` and the constant
    exponent otherwise.
    """
    _check_case(case, delta)
    ps = sobolev_exponent(params)
    p = params.p
    if case is Case.VARIABLE:
        return conjugate((delta + p - 1) * ps / (p * delta))
    if case is Case.LT1:
        return conjugate(ps / (1 - delta))
    return 1


def lt_interval(case: Case, delta, params: ModelParams):
    """(lower, closed?, upper) of the m-range with an L^t prediction."""
    _check_case(case, delta)
    Q, s, p = params.Q, params.s, params.p
    upper = linf_threshold(params)
    if case is Case.VARIABLE:
        return Q * (delta + p - 1) / (Q * (p - 1) + delta * s * p), True, upper
    if case is Case.LT1:
        return required_m(case, delta, params), True, upper
    return 1, False, upper


@dataclass(frozen=True)
class RegularityPrediction:
    case: Case
    m: object
    bounded: bool                    # True: u in L^infinity
    t: object = None                 # integrability exponent when not bounded
    gamma: object = None

    def describe(self) -> str:
        if self.bounded:
            return "L^inf"
        return f"L^{float(self.t):.10g}"


def predicted_integrability(case: Case, m, delta, params: ModelParams,
                            printed_n: bool = False) -> RegularityPrediction:
    """Integrability of the solution predicted from f in L^m.

    ``printed_n`` swaps Q for N in the variable-exponent gamma (a known
    variant of that formula); everything else always uses Q.
    """
    lo, closed, hi = lt_interval(case, delta, params)
    if m > hi:
        return RegularityPrediction(case, m, True)
    if m == hi:
        raise ExponentError(f"m = Q/(sp) = {hi} is not covered by any case")
    if m < lo or (m == lo and not closed):
        bracket = "[" if closed else "("
        raise ExponentError(f"m = {m} outside the admissible range {bracket}{lo}, {hi})")
    Q, s, p, N = params.Q, params.s, params.p, params.N
    mc = conjugate(m)
    ps = sobolev_exponent(params)
    if case is Case.VARIABLE:
        D = N if printed_n else Q
        gamma = D * (p - 1) * (m - 1) / (m * (D - s * p) - D * (m - 1))
        return RegularityPrediction(case, m, False, mc * gamma, gamma)
    if case is Case.EQ1:
        gamma = p * mc / (p * mc - ps)
    else:
        gamma = (delta + p - 1) * mc / (p * mc - ps)
    return RegularityPrediction(case, m, False, ps * gamma, gamma)


def exponent_table(case: Case, delta, params: ModelParams, ms) -> list[RegularityPrediction]:
    out = []
    for m in ms:
        try:
            out.append(predicted_integrability(case, m, delta, params))
        except ExponentError:
            continue
    return out


# -- empirical integrability --------------------------------------------------

def lt_norm(mesh: Mesh, u, t: float) -> float:
    """Discrete (sum |u|^t vol)^(1/t) over interior nodes; t = inf gives max|u|."""
    u = np.asarray(u, dtype=float)
    ui = u[:mesh.n_interior] if u.shape == (mesh.n_nodes,) else u
    if ui.shape != (mesh.n_interior,):
        raise ValueError("field does not match the mesh")
    if np.isinf(t):
        return float(np.max(np.abs(ui)))
    if not t > 0:
        raise ValueError("t must be positive")
    return float(np.sum(np.abs(ui) ** t) * mesh.cell_volume) ** (1.0 / t)


@dataclass
class LtTrend:
    h: list[float]
    lt: list[float]              # L^t norms (max|u| again for bounded predictions)
    sup: list[float]
    t: float
    relative_change: float       # between the last two refinements
    bounded: bool
    threshold: float = 0.05


def empirical_lt_study(runs, prediction: RegularityPrediction,
                       threshold: float = 0.05) -> LtTrend:
    """Track ||u||_{L^t} (or max u) over a sequence of refinements.

    ``runs`` is a sequence of ``(mesh, u)`` pairs ordered by decreasing h.
    The trend counts as bounded when the last two values differ by less
    than ``threshold`` relative to the finer one.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise ValueError("an integrability study needs at least two meshes")
    hs = [m.h for m, _ in runs]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("runs must be ordered by decreasing h")
    t = np.inf if prediction.bounded else float(prediction.t)
    lt = [lt_norm(m, u, t) for m, u in runs]
    sup = [lt_norm(m, u, np.inf) for m, u in runs]
    change = abs(lt[-1] - lt[-2]) / abs(lt[-1])
    return LtTrend(hs, lt, sup, t, change, change < threshold, threshold)


def check_condition_P(delta: SingularExponentField, mesh: Mesh, eps: float,
                      delta_star: float) -> bool:
    """Is delta <= delta_star on the strip of width eps along the boundary?"""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if delta_star < 1:
        raise ValueError(f"delta_star must be >= 1 (got {delta_star})")
    strip = boundary_strip(mesh, eps)
    return bool(np.all(delta.values[strip] <= delta_star))


# -- algebraic inequality suites ----------------------------------------------------

P_GRID = (1.5, 2.0, 3.0)
Q_GRID = (1.5, 2.5)
EPS_GRID = (0.1, 1.0)
_RTOL = 1e-10


def monotonicity_constant(p: float) -> float:
    """A valid C(p) for <J_p(x) - J_p(y), x - y> >= C (|x|+|y|)^(p-2) |x-y|^2."""
    if p >= 2:
        return 0.5 * min(1.0, 2.0 ** (3.0 - p))
    return p - 1.0


def _vec_jp(X: np.ndarray, p: float) -> np.ndarray:
    r = np.linalg.norm(X, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r > 0, r ** (p - 2.0), 0.0)
    return w * X


@dataclass
class LemmaResult:
    name: str
    samples: int
    violations: int
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _sample_vectors(rng, n, k):
    scale = 10.0 ** rng.uniform(-3, 2, (n, 1))
    return rng.standard_normal((n, k)) * scale


def check_alg(rng: np.random.Generator, samples: int, p: float, k: int = 3) -> LemmaResult:
    X = _sample_vectors(rng, samples, k)
    # half the pairs are near-coincident, where the inequality is tightest
    Y = np.where(rng.random((samples, 1)) < 0.5, _sample_vectors(rng, samples, k),
                 X + 1e-3 * _sample_vectors(rng, samples, k))
    D = X - Y
    lhs = np.sum((_vec_jp(X, p) - _vec_jp(Y, p)) * D, axis=1)
    s = np.linalg.norm(X, axis=1) + np.linalg.norm(Y, axis=1)
    base = s ** (p - 2.0) * np.sum(D * D, axis=1)
    C = monotonicity_constant(p)
    keep = base > 0
    ratio = lhs[keep] / base[keep]
    bad = int(np.sum(ratio < C * (1 - _RTOL)))
    return LemmaResult("alg", samples, bad,
                       {"p": p, "C": C, "min_ratio": float(ratio.min())})


def pow_difference(a, b, e: float) -> np.ndarray:
    """a^e - b^e for a, b >= 0 without cancellation when a is close to b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        close = b ** e * np.expm1(e * np.log1p((a - b) / b))
    return np.where(b > 0, close, a ** e)


def bp_primitive_difference(a, b, p: float, q: float, order: int = 24) -> np.ndarray:
    """G(a) - G(b) for g(t) = t^q on t >= 0, by Gauss-Legendre quadrature.

    G(t) = int_0^t g'(s)^(1/p) ds.  With s = r^p the integrand becomes
    p q^(1/p) r^(q+p-2), which is smooth enough for a fixed rule, and the
    difference is integrated directly between b^(1/p) and a^(1/p) so that
    nearby arguments do not cancel.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("the power nonlinearity is sampled on t >= 0")
    x, w = np.polynomial.legendre.leggauss(order)
    lo = b ** (1.0 / p)
    hi = a ** (1.0 / p)
    half = 0.5 * pow_difference(a, b, 1.0 / p)
    r = 0.5 * (hi + lo)[..., None] + half[..., None] * x
    vals = p * q ** (1.0 / p) * r ** (q + p - 2.0)
    return half * (vals @ w)


def check_bpalg(rng: np.random.Generator, samples: int, p: float, q: float) -> LemmaResult:
    a = 10.0 ** rng.uniform(-3, 1, samples)
    b = np.where(rng.random(samples) < 0.5, 10.0 ** rng.uniform(-3, 1, samples),
                 a * (1 + 1e-3 * rng.standard_normal(samples)))
    b = np.abs(b)
    lhs = np.asarray(j_p(a - b, p)) * pow_difference(a, b, q)
    rhs = np.abs(bp_primitive_difference(a, b, p, q)) ** p
    bad = int(np.sum(lhs < rhs * (1 - _RTOL)))
    keep = rhs > 0
    return LemmaResult("BPalg", samples, bad,
                       {"p": p, "q": q, "min_ratio": float(np.min(lhs[keep] / rhs[keep]))})


def check_dino(rng: np.random.Generator, samples: int, q: float, eps: float) -> LemmaResult:
    big = eps + 10.0 ** rng.uniform(-4, 1.5, samples) * eps * rng.integers(0, 2, samples)
    small = rng.uniform(0, 1, samples) * 10.0 ** rng.uniform(-3, 1.5, samples) * eps
    swap = rng.random(samples) < 0.5
    x = np.where(swap, small, big)
    y = np.where(swap, big, small)
    lhs = np.abs(pow_difference(x, y, q))
    rhs = eps ** (q - 1.0) * np.abs(x - y)
    bad = int(np.sum(lhs < rhs * (1 - _RTOL)))
    keep = rhs > 0
    return LemmaResult("dino", samples, bad,
                       {"q": q, "eps": eps, "min_ratio": float(np.min(lhs[keep] / rhs[keep]))})


def lemma_suites(samples: int = 100_000, seed: int = 0) -> dict[str, list[LemmaResult]]:
    """Randomised checks of the three algebraic inequalities over the grid."""
    rng = np.random.default_rng(seed)
    return {
        "alg": [check_alg(rng, samples, p) for p in P_GRID],
        "BPalg": [check_bpalg(rng, samples, p, q) for p in P_GRID for q in Q_GRID],
        "dino": [check_dino(rng, samples, q, e) for q in Q_GRID for e in EPS_GRID],
    }
