import numpy as np
import pytest

from pdsopt.fem import FemModel, ShellMaterial
from pdsopt.grid import BaseSurfaceSpec, build_base_surface, quad_connectivity


def plate_model(n: int, L: float = 10.0, t: float = 0.1, nu: float = 0.2, q: float = 1.0) -> FemModel:
    """Flat n x n plate with hard simple supports on all edges."""
    xs = np.linspace(0.0, L, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    a, b = np.divmod(np.arange(len(nodes)), n + 1)
    on_x = (a == 0) | (a == n)
    on_y = (b == 0) | (b == n)
    sup = np.zeros((len(nodes), 6), dtype=bool)
    sup[on_x | on_y, 2] = True
    sup[on_x, 3] = True
    sup[on_y, 4] = True
    sup[0, :2] = True
    sup[n * (n + 1), 1] = True
    return FemModel(nodes, quad_connectivity(n + 1, n + 1), sup, ShellMaterial(20e6, nu, t), q=q)


@pytest.fixture(scope="session")
def dome7():
    return build_base_surface(BaseSurfaceSpec(nu=7, nv=7, h=2.0, jitter=0.03, seed=1))


@pytest.fixture(scope="session")
def dome15():
    return build_base_surface(BaseSurfaceSpec(nu=15, nv=15, h=2.0))


_CRITERIA: dict[str, list[bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA.setdefault(mark.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s[1:])):
        ok = all(_CRITERIA[name])
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")
