import numpy as np
import pytest

from heisenberg_singular import extremal as ex
from heisenberg_singular.hgroup import ModelParams
from heisenberg_singular.mesh import build_mesh
from heisenberg_singular.operator import assemble, energy_seminorm_p
from heisenberg_singular.solver import SingularExponentField, SolveConfig, SourceField, solve_level

from conftest import unit_box


@pytest.fixture(scope="module")
def coarse():
    mesh = build_mesh(unit_box(), 0.4, 1.0)
    g = assemble(mesh, ModelParams())
    f = SourceField.constant(mesh, 1.0)
    return mesh, g, f, ex.compute_extremal(g, f, 0.5)


def test_tau_examples(tiny_box):
    mesh = tiny_box
    v = mesh.cell_volume
    # mass = sqrt(u) f vol
    assert ex.tau_delta(mesh, [16.0], [1.0 / v], 0.5) == pytest.approx(0.0625)
    assert ex.tau_delta(mesh, [1.0], [1.0 / v], 0.5) == pytest.approx(1.0)
    with pytest.raises(ex.ExtremalError, match="zero mass"):
        ex.tau_delta(mesh, [0.0], [1.0], 0.5)


def test_theta_exponent(coarse):
    mesh, g, f, r = coarse
    norm = energy_seminorm_p(g, r.u_delta) ** 0.5
    assert r.theta == pytest.approx(norm ** -6, rel=1e-13)
    # a field of unit norm has theta 1 for any admissible delta
    unit = r.u_delta / norm
    for d in (0.2, 0.5, 0.9):
        assert ex.theta(g, unit, d) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("delta", [1.0, 0.0, 2.0])
def test_extremal_needs_delta_in_unit_interval(coarse, delta):
    mesh, g, f, _ = coarse
    with pytest.raises(ex.ExtremalError):
        ex.theta(g, np.ones(mesh.n_interior), delta)


def test_variable_delta_rejected(coarse):
    mesh, g, f, _ = coarse
    d = SingularExponentField(np.linspace(0.2, 0.8, mesh.n_interior))
    with pytest.raises(ex.ExtremalError, match="constant"):
        ex.compute_extremal(g, f, d)


def test_scalar_energy_identity(tiny_box):
    # at the exact stationary point 2 W u^2 = F vol u^(1-delta)
    mesh = tiny_box
    g = assemble(mesh, ModelParams())
    W, vol, F, d = g.W_ic.sum(), mesh.cell_volume, 2.0, 0.5
    u = (F * vol / (2 * W)) ** (1 / (1 + d))
    gap = ex.energy_identity_check(g, [u], [F], d)
    assert abs(gap) < 1e-14 * 2 * W * u * u
    assert abs(ex.energy_identity_check(g, [2 * u], [F], d)) > 0.1 * 2 * W * u * u


def test_identity_on_solution(coarse, rng):
    mesh, g, f, r = coarse
    assert r.relative_identity_gap < 1e-6
    noise = rng.uniform(0, 1, mesh.n_interior)
    assert abs(ex.energy_identity_check(g, noise, f, 0.5)) > 1e-3 * energy_seminorm_p(
        g, mesh.extend(noise))


def test_constraint_and_theta_consistency(coarse):
    _, _, _, r = coarse
    assert abs(r.constraint - 1) < 1e-12
    assert r.theta_mismatch < 1e-6
    assert r.report.converged and r.report.method == "newton"


def test_sobolev_inequality(coarse, rng):
    mesh, g, f, r = coarse
    trials = ex.trial_fields(mesh, r.V_delta, rng, 60)
    assert len(trials) == 60
    assert ex.sobolev_check(g, f, 0.5, r.theta, trials) >= -1e-10
    for lam in (1.0, 0.1, -4.0):
        slack = ex.sobolev_slack(g, f, 0.5, r.theta, lam * r.V_delta)
        assert abs(slack) < 1e-6 * lam ** 2 * r.theta_from_V
    bumps = trials[0::3]
    assert all(ex.sobolev_slack(g, f, 0.5, r.theta, v) > 0 for v in bumps)
    with pytest.raises(ValueError):
        ex.sobolev_slack(g, f, 0.5, r.theta, np.zeros(mesh.n_interior))


def test_rayleigh_search_not_below_theta(coarse, rng):
    mesh, g, f, r = coarse
    best = ex.rayleigh_search(g, f, 0.5, rng, restarts=3)
    assert best >= r.theta - 1e-6
    assert best == pytest.approx(r.theta, rel=1e-6)


def test_simplicity(coarse):
    mesh, g, f, r = coarse
    u = r.u_delta
    v = ex.simplicity_check(g, f, 0.5, r.theta, 3 * u, u)
    assert v.accepted and v.k == pytest.approx(3)
    v = ex.simplicity_check(g, f, 0.5, r.theta, -u, u)
    assert v.accepted and v.k == pytest.approx(-1)
    w = u.copy()
    w[:mesh.n_interior] += 0.05 * np.exp(-np.sum(mesh.interior_points ** 2, axis=1) / 0.1)
    v = ex.simplicity_check(g, f, 0.5, r.theta, w, u)
    assert not v.equality and v.proportional is None and not v.accepted


def test_dilated_translate_identity(coarse):
    mesh, g, f, r = coarse
    same = ex.dilated_translate(mesh, r.V_delta, 1.0, np.zeros(3))
    np.testing.assert_array_equal(same, r.V_delta[:mesh.n_interior])
    far = ex.dilated_translate(mesh, r.V_delta, 1.0, np.array([10.0, 0, 0]))
    assert not far.any()


def test_comparison(coarse):
    mesh, g, f, r = coarse
    d = SingularExponentField.constant(mesh, 0.5)
    cfg = SolveConfig(inner_tol=1e-12)
    u1, _ = solve_level(g, f, 64, d, cfg=cfg)
    u2, _ = solve_level(g, f.scaled(2.0), 64, d, cfg=cfg)
    again, _ = solve_level(g, f, 64, d, cfg=cfg)
    assert ex.comparison_check(u1, u2, f, f.scaled(2.0)).ordered
    verdict = ex.comparison_check(u1, again, f, f)
    assert verdict.ordered and abs(verdict.max_excess) < 1e-12
    rev = ex.comparison_check(u2, u1, f, f, tol=1e-8)
    assert not rev.ordered
    with pytest.raises(ValueError, match="f_u <= f_v"):
        ex.comparison_check(u2, u1, f.scaled(2.0), f)


def test_supersolution_signs(coarse):
    mesh, g, f, r = coarse
    # the limit solution is (numerically) a solution: defect near zero
    defect = ex.supersolution_defect(g, r.u_delta, f, SingularExponentField.constant(mesh, 0.5))
    scale = f.values * mesh.cell_volume * r.u_delta[:mesh.n_interior] ** -0.5
    assert np.max(np.abs(defect) / scale) < 1e-5
    # doubling raises the operator term and lowers the singular one
    up = ex.supersolution_defect(g, 2 * r.u_delta, f, SingularExponentField.constant(mesh, 0.5))
    assert np.all(up > 0)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_generic_p_extremal(p):
    mesh = build_mesh(unit_box(), 0.4, 1.0)
    g = assemble(mesh, ModelParams(p=p))
    r = ex.compute_extremal(g, SourceField.constant(mesh, 1.0), 0.5)
    assert r.report.method == "gradient"
    assert r.relative_identity_gap < 1e-4
    assert r.theta_mismatch < 1e-4
    assert abs(r.constraint - 1) < 1e-12


def test_extremal_config():
    assert ex.extremal_config(2.0).outer_tol == 1e-12
    assert ex.extremal_config(3.0).outer_tol == SolveConfig().outer_tol
    assert ex.extremal_config(3.0, SolveConfig(metric="sobolev")).metric == "sobolev"
