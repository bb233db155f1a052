import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from besovns.spectral import Grid3, SpectralVectorField, _project

settings.register_profile(
    "default", max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion number -> one-line verdict, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def random_field(grid: Grid3, seed: int, kmax: float = None, solenoidal: bool = True) -> SpectralVectorField:
    """Random real band-limited field (numpy RNG, independent of the package generators)."""
    rng = np.random.default_rng(seed)
    kmax = grid.n / 6 if kmax is None else kmax
    phys = rng.normal(size=(3, grid.n, grid.n, grid.n))
    half = grid.to_spectral(phys)
    half[:, grid.radius > kmax] = 0
    half[:, 0, 0, 0] = 0
    if solenoidal:
        half = _project(grid, half)
    return SpectralVectorField(grid, half)


def mode_field(grid: Grid3, m, component: int = 0, func=np.cos) -> SpectralVectorField:
    """``func(k.x) e_component`` for integer mode vector ``m``."""
    x = grid.points()
    phase = sum(grid.k0 * mi * xi for mi, xi in zip(m, x))
    values = np.zeros((3, grid.n, grid.n, grid.n))
    values[component] = np.broadcast_to(func(phase), values.shape[1:])
    return SpectralVectorField.from_physical(grid, values)


@pytest.fixture
def grid16():
    return Grid3(16)


@pytest.fixture
def grid32():
    return Grid3(32)


@pytest.fixture(autouse=True)
def _quiet_diagnostics():
    from besovns.errors import DiagnosticWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiagnosticWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
