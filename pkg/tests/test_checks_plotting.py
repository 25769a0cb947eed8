import numpy as np
import pytest

from heisenberg_singular import checks as ck
from heisenberg_singular.hgroup import ModelParams
from heisenberg_singular.mesh import MeshError, build_mesh
from heisenberg_singular.operator import assemble
from heisenberg_singular.plotting import plot_levels, plot_radial_profile, write_table
from heisenberg_singular.solver import SingularExponentField, SolveConfig, SourceField, monotone_solve

from conftest import unit_box


@pytest.fixture(scope="module")
def solved():
    mesh = build_mesh(unit_box(), 0.5, 0.5)
    g = assemble(mesh, ModelParams())
    f = SourceField.constant(mesh, 1.0)
    d = SingularExponentField.constant(mesh, 0.5)
    u, rep = monotone_solve(g, f, d)
    return mesh, g, f, d, u, rep


def test_check_result_line():
    r = ck.CheckResult("x", True, 1.5e-9, 1e-8, "note")
    assert r.line() == "PASS worst=1.500000e-09 limit=1.0e-08 (note)"
    assert ck.CheckResult("x", False, 2.0, 1.0).line().startswith("FAIL")


def test_solution_suites(solved, rng):
    mesh, g, f, d, u, rep = solved
    n = rep.levels[-1].n
    assert ck.euler_lagrange(g, f, d, n, u, 1e-8).passed
    assert not ck.euler_lagrange(g, f, d, n, 0.5 * u, 1e-8).passed
    assert ck.positivity(g, u, 0.25).passed
    assert not ck.positivity(g, -u, 0.25).passed
    with pytest.raises(MeshError):
        ck.positivity(g, u, 5.0)
    assert ck.prop1_suite(g, f, d, rep, rng, count=6).passed
    assert ck.uniqueness_paths(g, f, d, rng, n=16).passed
    res = ck.comparison_suite(g, f, d, rng, pairs=3, levels=4, base=SolveConfig())
    assert res.passed and "n=16" in res.note


def test_write_table(tmp_path):
    path = tmp_path / "t.dat"
    write_table(path, {"a": [1, 2], "b": np.array([0.1, 1 / 3])})
    lines = path.read_text().splitlines()
    assert lines[0] == "# a b"
    assert lines[2] == "2 0.33333333333333331"
    np.testing.assert_array_equal(np.loadtxt(path), [[1, 0.1], [2, 1 / 3]])


def test_figures_are_reproducible(tmp_path, solved):
    mesh, g, f, d, u, rep = solved
    blobs = []
    for k in range(2):
        p1, p2 = tmp_path / f"r{k}.png", tmp_path / f"l{k}.png"
        plot_radial_profile(p1, mesh.radial_distance(), u, mesh.roles)
        plot_levels(p2, [lv.n for lv in rep.levels], rep.norms,
                    [lv.min_interior for lv in rep.levels])
        blobs.append((p1.read_bytes(), p2.read_bytes()))
    assert blobs[0] == blobs[1]
    assert blobs[0][0][:8] == b"\x89PNG\r\n\x1a\n"
