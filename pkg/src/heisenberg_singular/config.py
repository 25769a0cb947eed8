"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, keys are grouped by prefix::

    seed = 0
    domain.shape = box                 # box | ball
    domain.bounds = -1 1 -1 1 -1 1     # lo hi per axis (box)
    domain.radius = 1.0                # ball
    domain.center = 0 0 0              # ball, optional
    mesh.h = 0.25
    mesh.collar_width = 1.0
    mesh.max_nodes = 20000
    model.N = 1
    model.s = 0.5
    model.p = 2
    delta.kind = constant              # constant | radial | file
    delta.value = 0.5
    delta.profile = 0:2 0.5:1          # radial: r:value knots, linear in between
    delta.file = grid.csv              # file: CSV with coordinates and a value column
    delta.column = u
    delta.epsilon = 0.25               # strip width for the boundary condition
    delta.star = 1.5                   # bound on the strip
    source.kind = constant             # constant | radial | file
    source.value = 1
    source.m = inf                     # declared integrability exponent
    solver.method = auto               # auto | newton | gradient
    ...

Exact decimal inputs for ``model.s``, ``model.p``, ``delta.value`` and
``source.m`` are also kept as fractions, so the exponent calculators can
report exact values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .hgroup import ModelParams
from .mesh import DEFAULT_MAX_NODES, DomainSpec, Mesh
from .solver import (METRICS, SingularExponentField, SolveConfig, SourceField,
                     default_schedule)


class ConfigError(ValueError):
    pass


_FLOAT = "float"
_INT = "int"
_STR = "str"
_LIST = "list"
_BOOL = "bool"

KEYS: dict[str, tuple[str, object]] = {
    "seed": (_INT, 0),
    "domain.shape": (_STR, "box"),
    "domain.bounds": (_LIST, None),
    "domain.radius": (_FLOAT, None),
    "domain.center": (_LIST, None),
    "mesh.h": (_FLOAT, 0.25),
    "mesh.collar_width": (_FLOAT, 1.0),
    "mesh.max_nodes": (_INT, DEFAULT_MAX_NODES),
    "model.N": (_INT, 1),
    "model.s": (_STR, "0.5"),
    "model.p": (_STR, "2"),
    "delta.kind": (_STR, "constant"),
    "delta.value": (_STR, "0.5"),
    "delta.profile": (_STR, None),
    "delta.file": (_STR, None),
    "delta.column": (_STR, "u"),
    "delta.epsilon": (_FLOAT, None),
    "delta.star": (_FLOAT, None),
    "source.kind": (_STR, "constant"),
    "source.value": (_FLOAT, 1.0),
    "source.profile": (_STR, None),
    "source.file": (_STR, None),
    "source.column": (_STR, "u"),
    "source.m": (_STR, "inf"),
    "solver.method": (_STR, "auto"),
    "solver.metric": (_STR, "kacanov"),
    "solver.levels": (_INT, 40),
    "solver.inner_tol": (_FLOAT, None),
    "solver.outer_tol": (_FLOAT, 1e-6),
    "solver.max_inner_iters": (_INT, None),
    "solver.armijo_c": (_FLOAT, 1e-4),
    "solver.backtrack": (_FLOAT, 0.5),
    "solver.initial_step": (_FLOAT, 1.0),
    "solver.monotonicity_slack": (_FLOAT, 1e-8),
    "solver.norm_slack": (_FLOAT, 1e-10),
    "outputs.figures": (_BOOL, True),
    "outputs.csv": (_BOOL, True),
    "verify.trial_fields": (_INT, 100),
    "verify.comparison_pairs": (_INT, 20),
    "verify.prop1_fields": (_INT, 20),
    "verify.lemma_samples": (_INT, 100_000),
    "verify.rayleigh_restarts": (_INT, 3),
    "verify.margin": (_FLOAT, None),
    "exponents.m_values": (_LIST, None),
}


def _parse_value(kind: str, raw: str, key: str, lineno: int):
    try:
        if kind == _FLOAT:
            return float(raw)
        if kind == _INT:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if kind == _LIST:
            return [float(x) for x in raw.replace(",", " ").split()]
        if kind == _BOOL:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None


def read_pairs(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines; unknown and repeated keys are errors."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for {key}")
        out[key] = _parse_value(KEYS[key][0], raw, key, lineno)
    return out


def _exact(raw: str, name: str):
    """Fraction for finite decimal/rational text, float('inf') for inf."""
    text = raw.strip()
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{name} must be a number (got {raw!r})") from None


@dataclass(frozen=True)
class FieldSpec:
    """How to build a per-node field: constant, radial profile or grid file."""

    kind: str
    value: float | None = None
    profile: tuple[tuple[float, float], ...] = ()
    file: Path | None = None
    column: str = "u"

    def evaluate(self, mesh: Mesh) -> np.ndarray:
        if self.kind == "constant":
            return np.full(mesh.n_interior, float(self.value))
        if self.kind == "radial":
            r = mesh.radial_distance(mesh.interior_idx)
            knots = np.array(self.profile)
            return np.interp(r, knots[:, 0], knots[:, 1])
        return read_grid_values(self.file, mesh, self.column)

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant {self.value:g}"
        if self.kind == "radial":
            return "radial " + " ".join(f"{r:g}:{v:g}" for r, v in self.profile)
        return f"file {self.file} column {self.column}"


def _profile(raw: str, name: str) -> tuple[tuple[float, float], ...]:
    knots = []
    for item in raw.split():
        try:
            r, v = item.split(":")
            knots.append((float(r), float(v)))
        except ValueError:
            raise ConfigError(f"{name}: knots must look like r:value (got {item!r})") from None
    if not knots:
        raise ConfigError(f"{name} is empty")
    rs = [r for r, _ in knots]
    if any(b <= a for a, b in zip(rs, rs[1:])) or rs[0] < 0:
        raise ConfigError(f"{name}: radii must be nonnegative and increasing")
    return tuple(knots)


def _field_spec(d: dict, prefix: str, base: Path) -> FieldSpec:
    kind = d[f"{prefix}.kind"]
    if kind == "constant":
        return FieldSpec("constant", value=float(_exact(str(d[f"{prefix}.value"]), f"{prefix}.value")))
    if kind == "radial":
        if d.get(f"{prefix}.profile") is None:
            raise ConfigError(f"{prefix}.kind = radial needs {prefix}.profile")
        return FieldSpec("radial", profile=_profile(d[f"{prefix}.profile"], f"{prefix}.profile"))
    if kind == "file":
        if d.get(f"{prefix}.file") is None:
            raise ConfigError(f"{prefix}.kind = file needs {prefix}.file")
        path = Path(d[f"{prefix}.file"])
        if not path.is_absolute():
            path = base / path
        return FieldSpec("file", file=path, column=d[f"{prefix}.column"])
    raise ConfigError(f"{prefix}.kind must be constant, radial or file (got {kind!r})")


@dataclass
class RunConfig:
    domain: DomainSpec
    h: float
    collar_width: float
    max_nodes: int
    params: ModelParams
    exact_params: ModelParams          # same numbers as fractions
    delta: FieldSpec
    delta_exact: object                # Fraction for constant delta, else None
    delta_epsilon: float | None
    delta_star: float | None
    source: FieldSpec
    m: object                          # declared integrability of f
    solver: SolveConfig
    seed: int = 0
    figures: bool = True
    write_csv: bool = True
    verify: dict = field(default_factory=dict)
    m_values: list[float] | None = None
    echo: dict = field(default_factory=dict)   # effective settings, for the summary

    def build_fields(self, mesh: Mesh) -> tuple[SourceField, SingularExponentField]:
        fv = self.source.evaluate(mesh)
        try:
            f = SourceField(fv, m=None if math.isinf(self.m) else float(self.m))
        except ValueError as exc:
            raise ConfigError(f"source: {exc}") from None
        dv = self.delta.evaluate(mesh)
        try:
            d = SingularExponentField(dv, epsilon=self.delta_epsilon,
                                      delta_star=self.delta_star)
        except ValueError as exc:
            raise ConfigError(f"delta: {exc}") from None
        return f, d


def build_config(d: dict[str, object], base: Path = Path(".")) -> RunConfig:
    full = {k: d.get(k, default) for k, (_, default) in KEYS.items()}

    shape = full["domain.shape"]
    try:
        if shape == "box":
            bounds = full["domain.bounds"] or [-1.0, 1.0] * (2 * int(full["model.N"]) + 1)
            domain = DomainSpec.box(bounds)
        elif shape == "ball":
            if full["domain.radius"] is None:
                raise ConfigError("domain.shape = ball needs domain.radius")
            domain = DomainSpec.ball(full["domain.radius"], full["domain.center"],
                                     N=int(full["model.N"]))
        else:
            raise ConfigError(f"domain.shape must be box or ball (got {shape!r})")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"domain: {exc}") from None

    s_ex = _exact(full["model.s"], "model.s")
    p_ex = _exact(full["model.p"], "model.p")
    try:
        exact = ModelParams(N=int(full["model.N"]), s=s_ex, p=p_ex)
        params = ModelParams(N=exact.N, s=float(s_ex), p=float(p_ex))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if domain.dim != params.dim:
        raise ConfigError(f"domain has {domain.dim} coordinates but N={params.N} "
                          f"needs {params.dim}")

    for key in ("mesh.h", "mesh.collar_width"):
        if not full[key] > 0:
            raise ConfigError(f"{key} must be positive (got {full[key]})")

    delta = _field_spec(full, "delta", base)
    delta_exact = None
    if delta.kind == "constant":
        delta_exact = _exact(full["delta.value"], "delta.value")
        if not delta.value > 0:
            raise ConfigError(f"delta must be positive (delta > 0 violated, got {delta.value:g})")
    elif delta.kind == "radial" and min(v for _, v in delta.profile) <= 0:
        raise ConfigError("delta must be positive (delta > 0 violated in delta.profile)")
    eps, dstar = full["delta.epsilon"], full["delta.star"]
    if eps is not None and not eps > 0:
        raise ConfigError(f"delta.epsilon must be positive (got {eps})")
    if dstar is not None and dstar < 1:
        raise ConfigError(f"delta.star must be >= 1 (got {dstar})")

    source = _field_spec(full, "source", base)
    if source.kind == "constant" and not source.value > 0:
        raise ConfigError("source must be nonnegative and not identically zero "
                          f"(f = {source.value:g})")
    if source.kind == "radial":
        vals = [v for _, v in source.profile]
        if min(vals) < 0 or max(vals) <= 0:
            raise ConfigError("source.profile must be nonnegative and not identically zero")
    m = _exact(full["source.m"], "source.m")
    if m < 1:
        raise ConfigError(f"source.m must be >= 1 (got {full['source.m']})")

    if full["solver.levels"] < 0:
        raise ConfigError("solver.levels must be >= 0")
    if full["solver.metric"] not in METRICS:
        raise ConfigError(f"solver.metric must be one of {', '.join(METRICS)}")
    try:
        solver = SolveConfig(
            n_schedule=default_schedule(full["solver.levels"]),
            inner_tol=full["solver.inner_tol"], outer_tol=full["solver.outer_tol"],
            max_inner_iters=full["solver.max_inner_iters"], method=full["solver.method"],
            metric=full["solver.metric"], armijo_c=full["solver.armijo_c"],
            backtrack=full["solver.backtrack"], initial_step=full["solver.initial_step"],
            monotonicity_slack=full["solver.monotonicity_slack"],
            norm_slack=full["solver.norm_slack"])
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    verify = {k.split(".", 1)[1]: full[k] for k in KEYS if k.startswith("verify.")}
    for k, v in verify.items():
        if k != "margin" and v < 0:
            raise ConfigError(f"verify.{k} must be nonnegative")
    if verify["margin"] is not None and not verify["margin"] > 0:
        raise ConfigError("verify.margin must be positive")

    return RunConfig(
        domain=domain, h=float(full["mesh.h"]), collar_width=float(full["mesh.collar_width"]),
        max_nodes=int(full["mesh.max_nodes"]), params=params, exact_params=exact,
        delta=delta, delta_exact=delta_exact, delta_epsilon=eps, delta_star=dstar,
        source=source, m=m, solver=solver, seed=int(full["seed"]),
        figures=bool(full["outputs.figures"]), write_csv=bool(full["outputs.csv"]),
        verify=verify, m_values=full["exponents.m_values"], echo=full)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(read_pairs(text), base=path.parent)


# -- grid files -----------------------------------------------------------------

def coordinate_columns(N: int) -> list[str]:
    return ([f"x{i}" for i in range(1, N + 1)] + [f"y{i}" for i in range(1, N + 1)] + ["t"])


def write_solution_csv(path, mesh: Mesh, u) -> None:
    """node_id, role, coordinates, volume and u for every node, 17 digits."""
    u = np.asarray(u, dtype=float)
    cols = ["node_id", "role"] + coordinate_columns(mesh.N) + ["volume", "u"]
    vol = mesh.volumes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(mesh.n_nodes):
            w.writerow([i, mesh.roles[i]] + [f"{c:.17g}" for c in mesh.points[i]]
                       + [f"{vol[i]:.17g}", f"{u[i]:.17g}"])


def read_grid(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Coordinates and all numeric columns of a grid CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"grid file {path} has no rows")
    header = list(rows[0].keys())
    N = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
    coords = coordinate_columns(N)
    if N == 0 or any(c not in header for c in coords):
        raise ConfigError(f"grid file {path} lacks coordinate columns {coords}")
    try:
        P = np.array([[float(r[c]) for c in coords] for r in rows])
        cols = {c: np.array([float(r[c]) for r in rows]) for c in header
                if c not in coords and c != "role"}
    except (TypeError, ValueError):
        raise ConfigError(f"grid file {path} has non-numeric entries") from None
    return P, cols


def read_grid_values(path, mesh: Mesh, column: str = "u") -> np.ndarray:
    """Values of ``column`` at the interior nodes, matched by coordinates."""
    P, cols = read_grid(path)
    if column not in cols:
        raise ConfigError(f"grid file {path} has no column {column!r}")
    if P.shape[1] != mesh.dim:
        raise ConfigError(f"grid file {path} is {P.shape[1]}-dimensional, mesh is {mesh.dim}")
    dist, idx = cKDTree(P).query(mesh.interior_points)
    if np.any(dist > 1e-9 * max(1.0, mesh.h)):
        missing = int(np.sum(dist > 1e-9 * max(1.0, mesh.h)))
        raise ConfigError(f"grid file {path} misses {missing} interior nodes of the mesh")
    return cols[column][idx]
