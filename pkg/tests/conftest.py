import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fddmimo.channel import ArrayConfig, UserGeometry

settings.register_profile('default', deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile('default')

F_UL, F_DL = 10e9, 12e9          # default carriers, kappa = 1.2


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_hermitian(rng, n, psd=False):
    X = crandn(rng, n, n)
    return X @ X.conj().T if psd else (X + X.conj().T) / 2


def separated_angles(rng, L, min_sep_deg=10.0, lim_deg=60.0):
    """L angles in (-lim, lim) pairwise at least min_sep apart."""
    while True:
        th = np.sort(rng.uniform(-lim_deg, lim_deg, L))
        if L == 1 or np.min(np.diff(th)) >= min_sep_deg:
            return np.deg2rad(th)


def random_geometry(rng, L, b=None, min_sep_deg=10.0):
    theta = separated_angles(rng, L, min_sep_deg)
    b = rng.uniform(0.5, 1.5, L) if b is None else np.broadcast_to(b, (L,))
    r = rng.uniform(50.0, 300.0, L)
    phi = rng.uniform(0.0, 2 * np.pi, L)
    return UserGeometry(theta, b, r, phi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg32():
    return ArrayConfig.from_frequencies(32, F_UL, F_DL)


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section('acceptance criteria')
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
