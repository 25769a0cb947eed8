import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from heisenberg_singular import cli
from heisenberg_singular.config import (ConfigError, build_config, parse_config, read_grid,
                                        read_grid_values, read_pairs, write_solution_csv)
from heisenberg_singular.mesh import build_mesh
from heisenberg_singular.solver import MonotonicityError

SMALL = """\
seed = 0
domain.shape = box
domain.bounds = -1 1 -1 1 -1 1
mesh.h = 0.5
mesh.collar_width = 0.5
model.s = 0.5
model.p = 2
delta.value = 0.5
verify.lemma_samples = 2000
verify.comparison_pairs = 3
verify.trial_fields = 20
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def summary(outdir):
    lines = (Path(outdir) / "summary.txt").read_text().splitlines()
    return dict(line.split(": ", 1) for line in lines)


def run_main(tmp_path, mode, text=SMALL, *extra):
    out = tmp_path / f"out-{mode}"
    code = cli.main([mode, "--config", str(write_cfg(tmp_path, text)), "--out", str(out), *extra])
    return code, out


# -- parsing -------------------------------------------------------------------

def test_read_pairs():
    d = read_pairs("# comment\nseed = 4  # trailing\n\nmodel.p = 3\n")
    assert d == {"seed": 4, "model.p": "3"}


@pytest.mark.parametrize("text,msg", [
    ("seed = 0\nbogus.key = 1\n", "line 2"),
    ("seed = 0\nseed = 1\n", "duplicate"),
    ("mesh.h 0.5\n", "line 1"),
    ("mesh.h = fast\n", "mesh.h"),
])
def test_read_pairs_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        read_pairs(text)


@pytest.mark.parametrize("extra,msg", [
    ("model.N = 2", "coordinates"),
    ("source.value = 0", "identically zero"),
    ("mesh.h = 0", "mesh.h"),
    ("solver.metric = newton", "solver.metric"),
    ("delta.kind = radial", "delta.profile"),
    ("delta.star = 0.5", "delta.star"),
    ("source.m = 0.5", "source.m"),
    ("domain.shape = torus", "domain.shape"),
])
def test_constraint_violations(extra, msg):
    # SMALL fixes model.s, model.p and delta.value, so those are tested below
    with pytest.raises(ConfigError, match=msg):
        build_config(read_pairs(SMALL + extra + "\n"))


def test_defaults_and_exact_values():
    cfg = build_config({})
    assert cfg.h == 0.25 and cfg.collar_width == 1.0 and cfg.seed == 0
    assert cfg.exact_params.s == Fraction(1, 2) and cfg.delta_exact == Fraction(1, 2)
    assert cfg.m == float("inf")
    assert cfg.solver.n_schedule[-1] == 2 ** 40
    default = parse_config(cli.default_config_path())
    assert default.echo == cfg.echo | {"domain.bounds": [-1.0, 1.0] * 3}


@pytest.mark.parametrize("pairs,msg", [
    ({"model.s": "1.2"}, r"s must lie in \(0,1\) \(got 1.2\)"),
    ({"model.s": "0.9", "model.p": "5"}, r"sp < Q violated \(4.5 ≥ 4\)"),
    ({"delta.value": "-1"}, "delta > 0"),
    ({"delta.value": "1/0"}, "delta.value"),
])
def test_spec_error_messages(pairs, msg):
    with pytest.raises(ConfigError, match=msg):
        build_config(pairs)


def test_radial_fields():
    cfg = build_config(read_pairs(SMALL + "delta.kind = radial\ndelta.profile = 0:2 1:0.5\n"))
    mesh = build_mesh(cfg.domain, cfg.h, cfg.collar_width)
    f, d = cfg.build_fields(mesh)
    r = mesh.radial_distance(mesh.interior_idx)
    np.testing.assert_allclose(d.values, np.interp(r, [0, 1], [2, 0.5]))
    assert d.values[np.argmin(r)] == 2.0


def test_grid_round_trip(tmp_path, rng):
    cfg = build_config(read_pairs(SMALL))
    mesh = build_mesh(cfg.domain, cfg.h, cfg.collar_width)
    u = mesh.extend(rng.uniform(0.1, 2, mesh.n_interior))
    path = tmp_path / "grid.csv"
    write_solution_csv(path, mesh, u)
    P, cols = read_grid(path)
    np.testing.assert_array_equal(P, mesh.points)
    np.testing.assert_array_equal(cols["u"], u)
    assert set(cols) == {"node_id", "volume", "u"}
    # re-ingested as a source grid the file reproduces the same values
    cfg2 = parse_config(write_cfg(tmp_path, SMALL + "source.kind = file\nsource.file = grid.csv\n"))
    f, _ = cfg2.build_fields(mesh)
    np.testing.assert_array_equal(f.values, u[:mesh.n_interior])


def test_grid_missing_nodes(tmp_path):
    coarse = build_mesh(build_config({}).domain, 0.5, 0.5)
    fine = build_mesh(build_config({}).domain, 0.25, 0.5)
    path = tmp_path / "grid.csv"
    write_solution_csv(path, coarse, np.ones(coarse.n_nodes))
    with pytest.raises(ConfigError, match="misses"):
        read_grid_values(path, fine)
    with pytest.raises(ConfigError, match="no column"):
        read_grid_values(path, coarse, "w")


# -- modes and exit codes ---------------------------------------------------------

def test_mesh_info(tmp_path):
    code, out = run_main(tmp_path, "mesh-info")
    s = summary(out)
    n = int(s["mesh.nodes"])
    assert code == 0 and s["status"] == "ok"
    assert int(s["mesh.pairs"]) == n * (n - 1) // 2
    assert int(s["mesh.interior"]) + int(s["mesh.collar"]) == n


def test_exponents(tmp_path):
    code, out = run_main(tmp_path, "exponents")
    s = summary(out)
    assert code == 0
    assert s["prediction.required_m"].startswith("16/13")
    assert s["exponents.sobolev_exponent"].startswith("8/3")
    assert any(k.startswith("table.") for k in s)
    assert (out / "exponents.dat").exists() and (out / "exponents.png").exists()


def test_solve_outputs(tmp_path):
    code, out = run_main(tmp_path, "solve")
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"summary.txt", "solution.csv", "radial_profile.dat", "radial_profile.png",
            "levels.dat", "levels.png"} <= names
    header = (out / "solution.csv").read_text().splitlines()[0]
    assert header == "node_id,role,x1,y1,t,volume,u"
    assert (out / "levels.dat").read_text().startswith(
        "# n iterations residual norm min_interior energy\n")
    data = np.loadtxt(out / "levels.dat")
    assert data.ndim == 2 and np.all(np.diff(data[:, 3]) >= -1e-10)


def test_figures_can_be_disabled(tmp_path):
    code, out = run_main(tmp_path, "solve", SMALL + "outputs.figures = false\n")
    assert code == 0 and not list(out.glob("*.png"))


def test_extremal_mode(tmp_path):
    code, out = run_main(tmp_path, "extremal")
    s = summary(out)
    assert code == 0
    assert float(s["extremal.theta"]) > 0


def test_verify_small(tmp_path):
    code, out = run_main(tmp_path, "verify")
    s = summary(out)
    assert code == 0, s
    flags = [v for v in s.values() if v.startswith(("PASS", "FAIL"))]
    assert flags and all(v.startswith("PASS") for v in flags)


def test_seed_override(tmp_path):
    _, out = run_main(tmp_path, "mesh-info", SMALL, "--seed", "7")
    assert summary(out)["config.seed"] == "7"


def test_solve_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["solve", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]


@pytest.mark.parametrize("text", [SMALL + "model.s = 1.2\n", SMALL + "nonsense = 1\n"])
def test_config_error_exit(tmp_path, text, capsys):
    code, _ = run_main(tmp_path, "solve", text)
    assert code == 3
    assert "config error" in capsys.readouterr().err


def test_extremal_needs_delta_below_one(tmp_path):
    code, out = run_main(tmp_path, "extremal", SMALL.replace("delta.value = 0.5",
                                                             "delta.value = 2"))
    assert code == 3 and "constant delta" in summary(out)["error"]


def test_nonconvergence_exit(tmp_path):
    code, out = run_main(tmp_path, "solve", SMALL + "solver.levels = 2\n")
    assert code == 1 and summary(out)["status"] == "not converged"


def test_invariant_violation_exit(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise MonotonicityError("monotonicity violated between n=1 and n=2")
    monkeypatch.setattr(cli, "monotone_solve", broken)
    code, out = run_main(tmp_path, "solve")
    assert code == 2 and summary(out)["status"] == "invariant violation"


def test_missing_config_file(tmp_path):
    assert cli.main(["solve", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path / "o")]) == 3


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "heisenberg_singular.cli", "mesh-info",
                          "--config", str(write_cfg(tmp_path, SMALL)),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
