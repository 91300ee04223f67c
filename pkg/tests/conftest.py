from __future__ import annotations

import numpy as np
import pytest

from cfoie.surfaces import SurfaceSpec, discretize, make_surface, two_tori


@pytest.fixture(scope="session")
def sphere6():
    """Unit sphere, 6 patches, p=6 (N=216)."""
    return discretize(make_surface(SurfaceSpec.sphere(), 1), 6)


@pytest.fixture(scope="session")
def sphere24():
    """Unit sphere, 24 patches, p=6 (N=864)."""
    return discretize(make_surface(SurfaceSpec.sphere(), 2), 6)


@pytest.fixture(scope="session")
def torus16():
    """torus(1, 1/2), 16 patches, p=5 (N=400)."""
    return discretize(make_surface(SurfaceSpec.torus(), 4), 5)


@pytest.fixture(scope="session")
def tori_pair():
    return discretize(make_surface(two_tori("interlocking"), 3), 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance summary
# ---------------------------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in lines:
            terminalreporter.write_line(ln)
