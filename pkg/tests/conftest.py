import numpy as np
import pytest

from heisenberg_singular import (DomainSpec, ModelParams, SingularExponentField, SourceField,
                                 assemble, build_mesh, monotone_solve)
from heisenberg_singular.extremal import compute_extremal

# criterion number -> (title, passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record():
    def _record(num: int, title: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE[num] = (title, bool(passed), detail)
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[num]
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {num:2d}. {title}: {detail}")


def unit_box():
    return DomainSpec.box([[-1, 1]] * 3)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def box_problem():
    """Default instance pieces at h = 0.25 and h = 0.4, p = 2, keyed by h."""
    out = {}
    for h in (0.4, 0.25):
        mesh = build_mesh(unit_box(), h, 1.0)
        graph = assemble(mesh, ModelParams())
        f = SourceField.constant(mesh, 1.0)
        delta = SingularExponentField.constant(mesh, 0.5)
        out[h] = (mesh, graph, f, delta)
    return out


@pytest.fixture(scope="session")
def default_solution(box_problem):
    mesh, graph, f, delta = box_problem[0.25]
    u, report = monotone_solve(graph, f, delta)
    return u, report


@pytest.fixture(scope="session")
def default_extremal(box_problem):
    mesh, graph, f, delta = box_problem[0.25]
    return compute_extremal(graph, f, delta)


@pytest.fixture(scope="session")
def tiny_box():
    """Box [-1,1]^3 at h = 1: a single interior node at the origin."""
    mesh = build_mesh(unit_box(), 1.0, 1.0)
    return mesh
