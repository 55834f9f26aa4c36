import numpy as np
import pytest

from fracheat import FracParams, assemble, build_mesh

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def coarse():
    """N=52, s=0.8 mesh/assembly shared by the cheaper tests."""
    params = FracParams(0.8)
    mesh = build_mesh(52)
    return params, mesh, assemble(mesh, params)


@pytest.fixture(scope="session")
def reference():
    """N=210, s=0.8: the reference experiment resolution."""
    params = FracParams(0.8)
    mesh = build_mesh(210)
    return params, mesh, assemble(mesh, params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
