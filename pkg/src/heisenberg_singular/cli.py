"""Command-line driver: ``hsing MODE [--config PATH] [--seed K] [--out DIR]``.

Modes: solve, extremal, verify, exponents, mesh-info.  Exit codes: 0 success,
1 solver non-convergence, 2 invariant violation, 3 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis as an
from . import checks as ck
from . import extremal as ex
from .config import ConfigError, RunConfig, parse_config, write_solution_csv
from .mesh import Mesh, MeshError, build_mesh
from .operator import assemble, energy_seminorm_p
from .plotting import plot_exponents, plot_levels, plot_radial_profile, write_table
from .solver import (MonotonicityError, PositivityError, SolverError, apriori_norm_report,
                     monotone_solve)

log = logging.getLogger("heisenberg_singular")

MODES = ("solve", "extremal", "verify", "exponents", "mesh-info")
EXIT_OK, EXIT_NONCONVERGED, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2, 3


def default_config_path() -> Path:
    return Path(str(resources.files("heisenberg_singular") / "default.cfg"))


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def _exact_and_float(x) -> str:
    if isinstance(x, Fraction) and x.denominator != 1:
        return f"{_fmt(x)} ({float(x):.12g})"
    return _fmt(x)


class Summary:
    """Ordered ``key: value`` lines written to summary.txt."""

    def __init__(self):
        self.lines: list[tuple[str, str]] = []

    def add(self, key: str, value) -> None:
        self.lines.append((key, value if isinstance(value, str) else _fmt(value)))

    def check(self, res: ck.CheckResult) -> bool:
        self.add(f"check.{res.name}", res.line())
        return res.passed

    def flag(self, name: str, passed: bool, detail: str) -> bool:
        self.add(f"check.{name}", f"{'PASS' if passed else 'FAIL'} {detail}")
        return passed

    def write(self, path: Path) -> None:
        with open(path, "w") as fh:
            for k, v in self.lines:
                fh.write(f"{k}: {v}\n")


# -- pipeline pieces --------------------------------------------------------------

def _mesh(cfg: RunConfig) -> Mesh:
    try:
        return build_mesh(cfg.domain, cfg.h, cfg.collar_width, cfg.max_nodes)
    except MeshError as exc:
        raise ConfigError(f"mesh: {exc}") from None


def _echo_config(cfg: RunConfig, out: Summary) -> None:
    for k, v in cfg.echo.items():
        if v is None:
            continue
        if isinstance(v, list):
            v = " ".join(_fmt(x) for x in v)
        out.add(f"config.{k}", v)


def _mesh_block(mesh: Mesh, out: Summary) -> None:
    out.add("mesh.nodes", mesh.n_nodes)
    out.add("mesh.interior", mesh.n_interior)
    out.add("mesh.collar", mesh.n_collar)
    out.add("mesh.cell_volume", mesh.cell_volume)
    out.add("mesh.interior_volume", mesh.interior_volume)
    out.add("mesh.pairs", mesh.n_pairs)


def _case(cfg: RunConfig):
    """Regularity case and the delta (or delta_star) it is evaluated at."""
    if cfg.delta.kind == "constant":
        d = cfg.delta_exact
        return an.Case.for_constant(d), d
    if cfg.delta_star is None:
        return None, None
    return an.Case.VARIABLE, Fraction(str(cfg.delta_star))


def _prediction_block(cfg: RunConfig, out: Summary):
    case, d = _case(cfg)
    if case is None:
        out.add("prediction", "skipped (variable delta needs delta.star)")
        return None
    P = cfg.exact_params
    out.add("prediction.case", case.value)
    out.add("prediction.delta" if case is not an.Case.VARIABLE else "prediction.delta_star", d)
    req = an.required_m(case, d, P)
    out.add("prediction.required_m", _exact_and_float(req))
    m = cfg.m
    out.add("prediction.m", m)
    out.add("prediction.hypothesis", "satisfied" if m >= req else "not satisfied (m below required)")
    try:
        pred = an.predicted_integrability(case, m, d, P)
    except an.ExponentError as exc:
        out.add("prediction.integrability", f"none ({exc})")
        return None
    out.add("prediction.integrability", pred.describe())
    if not pred.bounded:
        out.add("prediction.gamma", _exact_and_float(pred.gamma))
        out.add("prediction.t", _exact_and_float(pred.t))
    return pred


def _write_solution(cfg: RunConfig, mesh: Mesh, u, outdir: Path, label: str = "u") -> None:
    if cfg.write_csv:
        write_solution_csv(outdir / "solution.csv", mesh, u)
    r = mesh.radial_distance()
    order = np.lexsort((np.arange(mesh.n_nodes), r))
    inner = (mesh.roles == "interior").astype(float)
    write_table(outdir / "radial_profile.dat",
                {"r": r[order], label: np.asarray(u)[order], "interior": inner[order]})
    if cfg.figures:
        plot_radial_profile(outdir / "radial_profile.png", r, u, mesh.roles, label)


def _levels_block(report, out: Summary, outdir: Path, figures: bool) -> None:
    for i, lv in enumerate(report.levels):
        out.add(f"level.{i:02d}", f"n={lv.n} iterations={lv.iterations} "
                f"residual={lv.residual:.6e} norm={lv.norm:.15g} "
                f"min_interior={lv.min_interior:.12g} energy={lv.energy:.15g}")
    out.add("solve.method", report.method)
    out.add("solve.levels", len(report.levels))
    out.add("solve.converged", report.converged)
    out.add("solve.monotone", report.monotone)
    if math.isfinite(report.min_increment):
        out.add("solve.min_increment", f"{report.min_increment:.6e}")
    out.add("solve.max_norm_drop", f"{report.max_norm_drop:.6e}")
    n = [lv.n for lv in report.levels]
    norms = [lv.norm for lv in report.levels]
    mins = [lv.min_interior for lv in report.levels]
    write_table(outdir / "levels.dat", {
        "n": n, "iterations": [lv.iterations for lv in report.levels],
        "residual": [lv.residual for lv in report.levels], "norm": norms,
        "min_interior": mins, "energy": [lv.energy for lv in report.levels]})
    if figures:
        plot_levels(outdir / "levels.png", n, norms, mins)


def _solve(cfg: RunConfig, out: Summary, outdir: Path, solver_cfg=None):
    mesh = _mesh(cfg)
    _mesh_block(mesh, out)
    f, delta = cfg.build_fields(mesh)
    graph = assemble(mesh, cfg.params)
    u, report = monotone_solve(graph, f, delta, solver_cfg or cfg.solver)
    _levels_block(report, out, outdir, cfg.figures)
    ui = u[:mesh.n_interior]
    out.add("solution.max", float(ui.max()))
    out.add("solution.min_interior", float(ui.min()))
    out.add("solution.norm", energy_seminorm_p(graph, u) ** (1.0 / graph.p))
    ap = apriori_norm_report(report, delta, f, cfg.params)
    out.add("apriori.quantity", ap.label)
    out.add("apriori.final", ap.values[-1])
    out.add("apriori.bounded", ap.bounded)
    if cfg.delta_epsilon is not None and cfg.delta_star is not None:
        ok = an.check_condition_P(delta, mesh, cfg.delta_epsilon, cfg.delta_star)
        out.add("condition_P", ok)
    return mesh, graph, f, delta, u, report


# -- modes -----------------------------------------------------------------------------

def run_mesh_info(cfg: RunConfig, out: Summary, outdir: Path) -> int:
    mesh = _mesh(cfg)
    _mesh_block(mesh, out)
    if mesh.domain.shape == "box":
        out.add("domain.volume", float(np.prod(np.diff(mesh.domain.bounds, axis=1))))
    r = mesh.radial_distance()
    write_table(outdir / "nodes.dat", {"r": r, "gap": mesh.gaps,
                                       "interior": (mesh.roles == "interior").astype(float)})
    return EXIT_OK


def run_exponents(cfg: RunConfig, out: Summary, outdir: Path) -> int:
    P = cfg.exact_params
    ps = an.sobolev_exponent(P)
    out.add("exponents.Q", P.Q)
    out.add("exponents.sobolev_exponent", _exact_and_float(ps))
    thr = an.linf_threshold(P)
    out.add("exponents.linf_threshold", _exact_and_float(thr))
    _prediction_block(cfg, out)
    case, d = _case(cfg)
    if case is None:
        return EXIT_OK
    lo, closed, hi = an.lt_interval(case, d, P)
    if cfg.m_values:
        ms = [Fraction(str(m)) for m in cfg.m_values]
    else:
        start = lo if closed else lo + (hi - lo) / 10
        ms = [start + k * (hi - start) / 5 for k in range(5)] + [hi + 1]
    rows = an.exponent_table(case, d, P, ms)
    for i, pr in enumerate(rows):
        extra = "" if pr.bounded else f" gamma={_fmt(pr.gamma)} t={_fmt(pr.t)}"
        out.add(f"table.{i:02d}", f"m={_fmt(pr.m)} -> {pr.describe()}{extra}")
    finite = [pr for pr in rows if not pr.bounded]
    write_table(outdir / "exponents.dat", {
        "m": [float(pr.m) for pr in rows],
        "t": [math.inf if pr.bounded else float(pr.t) for pr in rows],
        "gamma": [math.nan if pr.bounded else float(pr.gamma) for pr in rows]})
    if cfg.figures and finite:
        plot_exponents(outdir / "exponents.png", [float(pr.m) for pr in finite],
                       [float(pr.t) for pr in finite], float(thr))
    return EXIT_OK


def run_solve(cfg: RunConfig, out: Summary, outdir: Path) -> int:
    mesh, graph, f, delta, u, report = _solve(cfg, out, outdir)
    _prediction_block(cfg, out)
    _write_solution(cfg, mesh, u, outdir)
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def _extremal_checks(cfg, graph, f, res: ex.ExtremalResult, out: Summary,
                     rng: np.random.Generator, identity_tol: float) -> bool:
    d = cfg.delta.value
    ok = True
    out.add("extremal.theta", f"{res.theta:.15g}")
    out.add("extremal.theta_from_V", f"{res.theta_from_V:.15g}")
    out.add("extremal.tau_delta", f"{res.tau_delta:.15g}")
    out.add("extremal.energy_identity_gap", f"{res.energy_identity_gap:.6e}")
    ok &= out.flag("extremal.energy_identity", res.relative_identity_gap < identity_tol,
                   f"relative={res.relative_identity_gap:.3e} limit={identity_tol:.0e}")
    ok &= out.flag("extremal.theta_consistency", res.theta_mismatch < 1e-6,
                   f"relative={res.theta_mismatch:.3e} limit=1e-06")
    cgap = abs(res.constraint - 1.0)
    ok &= out.flag("extremal.constraint", cgap < 1e-10, f"|mass-1|={cgap:.3e} limit=1e-10")

    mesh = graph.mesh
    trials = ex.trial_fields(mesh, res.V_delta, rng, cfg.verify["trial_fields"])
    if trials:
        worst = ex.sobolev_check(graph, f, d, res.theta, trials)
        ok &= out.flag("extremal.sobolev_inequality", worst >= -1e-10,
                       f"worst slack={worst:.3e} over {len(trials)} fields limit=-1e-10")
    eq = max(abs(ex.sobolev_slack(graph, f, d, res.theta, lam * res.V_delta))
             / energy_seminorm_p(graph, lam * res.V_delta) for lam in (1.0, 2.5, -0.7))
    ok &= out.flag("extremal.equality_at_V", eq < 1e-6, f"relative={eq:.3e} limit=1e-06")

    u = res.u_delta
    s3 = ex.simplicity_check(graph, f, d, res.theta, 3 * u, u)
    sneg = ex.simplicity_check(graph, f, d, res.theta, -u, u)
    bump = u.copy()
    P = mesh.interior_points
    bump[:mesh.n_interior] += 0.2 * u.max() * np.exp(
        -np.sum((P - P[np.argmax(u[:mesh.n_interior])]) ** 2, axis=1) / (0.1 * mesh.domain.diameter) ** 2)
    sb = ex.simplicity_check(graph, f, d, res.theta, bump, u)
    ok &= out.flag("extremal.simplicity", s3.accepted and abs(s3.k - 3) < 1e-9
                   and sneg.accepted and sneg.k < 0 and not sb.equality,
                   f"3u k={s3.k:.12g}; -u k={sneg.k:.12g}; perturbed slack={sb.relative_slack:.3e}")
    restarts = cfg.verify["rayleigh_restarts"]
    if restarts:
        best = ex.rayleigh_search(graph, f, d, rng, restarts)
        ok &= out.flag("extremal.rayleigh_search", best >= res.theta - 1e-6,
                       f"min quotient={best:.12g} theta={res.theta:.12g}")
    return bool(ok)


def _extremal_mode_check(cfg: RunConfig) -> float:
    if cfg.delta.kind != "constant" or not 0 < cfg.delta.value < 1:
        raise ConfigError("extremal mode needs a constant delta with 0 < delta < 1")
    return cfg.delta.value


def run_extremal(cfg: RunConfig, out: Summary, outdir: Path, rng) -> int:
    _extremal_mode_check(cfg)
    scfg = ex.extremal_config(cfg.params.p, cfg.solver)
    mesh, graph, f, delta, u, report = _solve(cfg, out, outdir, scfg)
    res = ex.extremal_from_solution(graph, u, f, delta, report)
    tol = 1e-6 if report.method == "newton" else 1e-4
    ok = _extremal_checks(cfg, graph, f, res, out, rng, tol)
    _write_solution(cfg, mesh, u, outdir)
    if not report.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if ok else EXIT_INVARIANT


def run_verify(cfg: RunConfig, out: Summary, outdir: Path, rng) -> int:
    ok = True
    for res in ck.group_algebra(rng, samples=10_000, N=cfg.params.N):
        ok &= out.check(res)
    mesh, graph, f, delta, u, report = _solve(cfg, out, outdir)
    ok &= out.check(ck.gradient_consistency(graph, rng, fields=5))
    ok &= out.flag("solver.monotonicity", report.monotone,
                   f"min increment={report.min_increment:.3e} max norm drop={report.max_norm_drop:.3e}")
    last = report.levels[-1]
    tol = cfg.solver.resolved_tol(cfg.params.p)
    ok &= out.check(ck.euler_lagrange(graph, f, delta, last.n, u, tol))
    margin = cfg.verify["margin"] or 0.5 * mesh.h
    ok &= out.check(ck.positivity(graph, u, margin))
    ok &= out.check(ck.prop1_suite(graph, f, delta, report, rng, cfg.verify["prop1_fields"]))
    ap = apriori_norm_report(report, delta, f, cfg.params)
    ok &= out.flag("solver.apriori_bound", ap.bounded, f"{ap.label} final={ap.values[-1]:.12g}")
    ok &= out.check(ck.uniqueness_paths(graph, f, delta, rng))
    if cfg.verify["comparison_pairs"]:
        ok &= out.check(ck.comparison_suite(graph, f, delta, rng, cfg.verify["comparison_pairs"],
                                            base=cfg.solver))
    if cfg.delta_epsilon is not None and cfg.delta_star is not None:
        ok &= out.flag("condition_P", an.check_condition_P(delta, mesh, cfg.delta_epsilon,
                                                           cfg.delta_star),
                       f"eps={cfg.delta_epsilon:g} delta_star={cfg.delta_star:g}")

    if delta.is_constant and 0 < delta.constant_value < 1:
        res = ex.compute_extremal(graph, f, delta, ex.extremal_config(cfg.params.p, cfg.solver))
        tol_id = 1e-6 if res.report.method == "newton" else 1e-4
        ok &= _extremal_checks(cfg, graph, f, res, out, rng, tol_id)
    else:
        out.add("extremal", "skipped (needs a constant delta with 0 < delta < 1)")

    samples = cfg.verify["lemma_samples"]
    if samples:
        for name, results in an.lemma_suites(samples, cfg.seed).items():
            bad = sum(r.violations for r in results)
            worst = min(r.detail["min_ratio"] for r in results)
            ok &= out.flag(f"lemma.{name}", bad == 0,
                           f"violations={bad} samples={samples * len(results)} min ratio={worst:.12g}")
    ok &= _exponent_consistency(cfg, out)
    _prediction_block(cfg, out)
    _write_solution(cfg, mesh, u, outdir)
    if not report.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if ok else EXIT_INVARIANT


def _exponent_consistency(cfg: RunConfig, out: Summary) -> bool:
    case, d = _case(cfg)
    if case is None:
        return True
    P = cfg.exact_params
    lo, closed, _ = an.lt_interval(case, d, P)
    if not closed:
        return True
    pr = an.predicted_integrability(case, lo, d, P)
    if case is an.Case.VARIABLE:
        good = pr.gamma == d
        detail = f"gamma at lower endpoint = {_fmt(pr.gamma)} (expected delta_star = {_fmt(d)})"
    else:
        good = pr.gamma == 1 and pr.t == an.sobolev_exponent(P)
        detail = f"gamma={_fmt(pr.gamma)} t={_fmt(pr.t)} at m={_fmt(lo)}"
    return out.flag("exponents.endpoint", bool(good), detail)


# -- entry point ------------------------------------------------------------------------

def run(mode: str, cfg: RunConfig, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    out = Summary()
    out.add("mode", mode)
    _echo_config(cfg, out)
    rng = np.random.default_rng(cfg.seed)
    try:
        if mode == "mesh-info":
            code = run_mesh_info(cfg, out, outdir)
        elif mode == "exponents":
            code = run_exponents(cfg, out, outdir)
        elif mode == "solve":
            code = run_solve(cfg, out, outdir)
        elif mode == "extremal":
            code = run_extremal(cfg, out, outdir, rng)
        else:
            code = run_verify(cfg, out, outdir, rng)
    except ConfigError as exc:
        out.add("error", str(exc))
        code = EXIT_CONFIG
    except (MonotonicityError, PositivityError) as exc:
        out.add("error", f"invariant violation: {exc}")
        code = EXIT_INVARIANT
    except SolverError as exc:
        out.add("error", f"solver failure: {exc}")
        code = EXIT_NONCONVERGED
    out.add("status", {EXIT_OK: "ok", EXIT_NONCONVERGED: "not converged",
                       EXIT_INVARIANT: "invariant violation", EXIT_CONFIG: "config error"}[code])
    out.write(outdir / "summary.txt")
    if code != EXIT_OK:
        err = dict(out.lines).get("error")
        if err:
            print(f"hsing {mode}: {err}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hsing",
        description="Singular fractional p-Laplace problems on the Heisenberg group.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", type=Path, default=None,
                    help="key = value run configuration (default: the bundled default.cfg)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", type=Path, default=Path("hsing-out"),
                    help="output directory (created if missing)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    path = args.config or default_config_path()
    try:
        cfg = parse_config(path)
    except ConfigError as exc:
        print(f"hsing: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.echo["seed"] = args.seed
    return run(args.mode, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
