import numpy as np
import pytest

from shlab.config import load_config
from shlab.glsolver import GLSystem, initial_amplitude, simulate_gl
from shlab.kernel import KernelMeasure
from shlab.spectral import PeriodicGrid, TorusGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    """M=16, N=256: kappa spacing 1/16, |kappa| up to 8."""
    return TorusGrid(16, 256)


@pytest.fixture
def slow_grid():
    return PeriodicGrid(4, 64)


@pytest.fixture
def local_cubic():
    """(Q, K) = (0, delta_0): the classical cubic case, gamma = 3."""
    return KernelMeasure.zero(), KernelMeasure.dirac()


@pytest.fixture
def quick_config():
    return load_config(None, {
        "P": 4,
        "M_list": [40, 80, 160],
        "T_star": 0.25,
        "slow_points": 64,
        "snapshots": 10,
        "gl_substeps": 10,
        "dt": 0.2,
    })


@pytest.fixture
def modulated_trajectory(slow_grid):
    """GL trajectory of a band-limited modulated roll with gamma = 3 on [0, 0.25]."""
    A0 = initial_amplitude("modulated", slow_grid, 3.0, band=2, modulation=0.2)
    return simulate_gl(GLSystem(3.0, slow_grid, A0, T_end=0.25, dT=0.0025), snapshot_stride=10, n_steps=100)
