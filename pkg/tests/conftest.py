import numpy as np
import pytest

from suolson_dlra import AngularBasis, SpatialMesh, build_stencils


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_setup():
    """An 8 x 4 problem on [0, 1]: mesh plus operators."""
    mesh = SpatialMesh(8, 0.0, 1.0)
    return mesh, build_stencils(mesh), AngularBasis.build(4)


def positive_state(rng, n_cells, n_moments):
    v = rng.normal(size=(n_cells, n_moments))
    v[:, 0] += 3.0
    B = 1.0 + rng.uniform(0.2, 1.0, size=n_cells)
    return v, B


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for outcome in sorted(results, key=lambda o: o.criterion):
            terminalreporter.write_line(outcome.line())
