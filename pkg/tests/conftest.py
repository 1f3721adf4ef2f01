import numpy as np
import pytest

from stochdmd.noise_sim import QubitConfig, TimeGrid, TrajectoryEnsemble


def cosine_ensemble(n=6, m=80, dt=0.05, f=1.0, seed=0, decay=0.0):
    """Noise-free rows ``a_j cos(2 pi f t + p_j) e^{-decay t}``: exactly rank 2 (rank 2 with decay too)."""
    rng = np.random.default_rng(seed)
    grid = TimeGrid(0.0, dt, m)
    amp = rng.uniform(0.5, 1.5, n)
    phase = rng.uniform(0, 2 * np.pi, n)
    t = grid.times
    data = amp[:, None] * np.cos(2 * np.pi * f * t[None, :] + phase[:, None]) * np.exp(-decay * t)
    return TrajectoryEnsemble(data, grid)


@pytest.fixture
def qubit():
    return QubitConfig(f0=1.0)


@pytest.fixture
def short_grid():
    return TimeGrid.from_span(0.0, 2.0, 0.02)


@pytest.fixture
def cosine():
    return cosine_ensemble()


def make_decomp(eigenvalues, modes=None, amplitudes=None, dt=1.0, t_start=0.0):
    """Hand-built decomposition; ``modes`` defaults to the identity."""
    from stochdmd.dmd import DmdDecomposition

    lam = np.asarray(eigenvalues, dtype=np.complex128)
    r = lam.size
    modes = np.eye(r, dtype=np.complex128) if modes is None else np.asarray(modes, dtype=np.complex128)
    amplitudes = np.ones(r, dtype=np.complex128) if amplitudes is None else np.asarray(amplitudes, dtype=np.complex128)
    return DmdDecomposition(r, lam, modes, amplitudes, dt, np.ones(r), t_start)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
