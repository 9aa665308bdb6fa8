import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from shlab.errors import BlowUpError, ConfigError, GridError, TrajectoryError
from shlab.kernel import KernelMeasure, fourier_symbol
from shlab.shsolver import (
    ETDRK4Integrator,
    SHProblem,
    etdrk4_step,
    linear_symbol,
    local_nonlinearity,
    nonlinearity,
    nonlinearity_coeffs,
    simulate_sh,
    step_count,
)
from shlab.spectral import SpectralField, TorusGrid, conjugate_asymmetry, random_field

from experiments.harness import fit_slope


def test_linear_symbol_examples():
    assert linear_symbol(1.0, 0.1) == pytest.approx(0.01)
    assert linear_symbol(0.0, 0.0) == -1.0
    assert linear_symbol(2.0, 0.05) == pytest.approx(-8.9975)
    assert_allclose(linear_symbol(np.array([1.0, -1.0]), 0.2), [0.04, 0.04])


# ======== Nonlinearity ========

def test_nonlinearity_of_zero(small_grid):
    out = nonlinearity(SpectralField.zeros(small_grid), KernelMeasure.gaussian(), KernelMeasure.dirac())
    assert out.sup() == 0.0


def test_local_quadratic_on_constant(small_grid):
    c = 0.7
    out = nonlinearity(SpectralField.constant(small_grid, c), KernelMeasure.dirac(), KernelMeasure.zero())
    assert_allclose(out.values, -c ** 2, atol=1e-14)


@pytest.mark.numerical
def test_local_cubic_on_cosine(small_grid, local_cubic):
    u = SpectralField.from_function(small_grid, np.cos)
    out = nonlinearity(u, *local_cubic)
    assert np.max(np.abs(out.values + np.cos(small_grid.x) ** 3)) <= 1e-10


def test_local_kernels_reduce_to_pointwise(small_grid, rng):
    u = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 1.5)
    q, k = 0.4, 1.3
    nonlocal_ = nonlinearity(u, KernelMeasure.dirac(q), KernelMeasure.dirac(k))
    assert_allclose(nonlocal_.values, local_nonlinearity(u, q, k).values, atol=1e-12 * u.sup() ** 3 + 1e-13)


def test_nonlinearity_rejects_non_finite(small_grid):
    bad = SpectralField(small_grid, np.full(small_grid.N, np.nan), real=True)
    with pytest.raises(BlowUpError):
        nonlinearity(bad, KernelMeasure.zero(), KernelMeasure.dirac())


# ======== ETDRK4 ========

def test_linear_propagation_is_exact(small_grid):
    eps, dt = 0.1, 0.5
    e = SpectralField.mode(small_grid, 1.0)
    symbol = linear_symbol(small_grid.kappa, eps)
    out = etdrk4_step(e.coeffs, dt, symbol, lambda v: np.zeros_like(v))
    assert_allclose(out, math.exp(0.005) * e.coeffs, atol=1e-15)


def test_zero_is_fixed(small_grid):
    symbol = linear_symbol(small_grid.kappa, 0.1)
    zero = np.zeros(small_grid.N, dtype=complex)
    assert np.all(etdrk4_step(zero, 0.3, symbol, lambda v: -v ** 3) == 0)


def test_coefficients_real_for_real_symbol(small_grid):
    integrator = ETDRK4Integrator(linear_symbol(small_grid.kappa, 0.1), 0.1, lambda v: v)
    assert np.isrealobj(integrator.E) and np.isrealobj(integrator.f1)
    # contour means and direct formulas meet smoothly near |z| = threshold
    assert np.all(np.isfinite(integrator.Q))


def test_nonpositive_step_rejected(small_grid):
    with pytest.raises(GridError):
        ETDRK4Integrator(linear_symbol(small_grid.kappa, 0.1), 0.0, lambda v: v)


@pytest.mark.numerical
def test_scalar_ode_matches_closed_form():
    # v' = -v + 1 from v = 0: v(t) = 1 - e^{-t}, exact for a constant forcing
    integrator = ETDRK4Integrator(np.array([-1.0]), 0.25, lambda v: np.ones_like(v))
    v = integrator.advance(np.zeros(1), 8)
    assert_allclose(v[0], 1.0 - math.exp(-2.0), rtol=1e-13)


@pytest.mark.numerical
def test_linear_run_is_exact_over_long_times(small_grid):
    eps = 0.1
    u0 = SpectralField.from_function(small_grid, lambda x: 0.1 * np.cos(x) + 0.05 * np.cos(x / 2))
    problem = SHProblem(small_grid, eps, KernelMeasure.zero(), KernelMeasure.zero(), u0, t_end=10.0, dt=0.5)
    traj = simulate_sh(problem)
    x = small_grid.x
    decay = math.exp(10.0 * (-(1 - 0.25) ** 2 + eps ** 2))
    expected = 0.1 * math.exp(10.0 * eps ** 2) * np.cos(x) + 0.05 * decay * np.cos(x / 2)
    assert_allclose(traj.final.values, expected, atol=1e-13)


def test_state_stays_real(small_grid, rng):
    Q, K = KernelMeasure.gaussian(1.0, 1.0), KernelMeasure.laplace(0.5, 2.0)
    q_hat, k_hat = fourier_symbol(Q, small_grid.kappa), fourier_symbol(K, small_grid.kappa)
    integrator = ETDRK4Integrator(linear_symbol(small_grid.kappa, 0.1), 0.2,
                                  lambda v: nonlinearity_coeffs(v, q_hat, k_hat))
    u0 = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 1.5) * 0.2
    v = integrator.advance(u0.coeffs, 50)
    assert np.all(np.isfinite(v))
    assert conjugate_asymmetry(v) <= 1e-12


@pytest.mark.numerical
def test_doubling_points_changes_nothing(local_cubic):
    Q = KernelMeasure.gaussian(1.0, 1.0)

    def final(N):
        grid = TorusGrid(4, N)
        u0 = SpectralField.from_function(grid, lambda x: 0.2 * np.cos(x))
        return simulate_sh(SHProblem(grid, 0.1, Q, local_cubic[1], u0, t_end=20.0, dt=0.1)).final

    coarse, fine = final(64), final(128)
    assert_allclose(fine.values[::2], coarse.values, atol=1e-12)


def test_repeated_runs_are_identical(small_grid, local_cubic):
    def run():
        u0 = random_field(small_grid, np.random.default_rng(7), mask=np.abs(small_grid.kappa) <= 1.5) * 0.1
        return simulate_sh(SHProblem(small_grid, 0.1, *local_cubic, u0, t_end=5.0, dt=0.1)).final

    assert np.array_equal(run().values, run().values)


@pytest.mark.numerical
def test_self_convergence_is_fourth_order(local_cubic):
    grid = TorusGrid(1, 16)
    u0 = SpectralField.from_function(grid, lambda x: np.cos(x) + 0.3 * np.cos(2 * x))

    def final(dt):
        problem = SHProblem(grid, 0.1, *local_cubic, u0, t_end=2.0, dt=dt)
        return simulate_sh(problem).final

    reference = final(0.2 / 64)
    points = [(dt, (final(dt) - reference).sup()) for dt in (0.2, 0.1, 0.05)]
    assert fit_slope(points).slope == pytest.approx(4.0, abs=0.3)


# ======== Problems and trajectories ========

def test_problem_validation(small_grid):
    u0 = SpectralField.zeros(small_grid)
    with pytest.raises(ConfigError):
        SHProblem(small_grid, 1.5, KernelMeasure.zero(), KernelMeasure.zero(), u0, 1.0)
    with pytest.raises(ConfigError):
        SHProblem(small_grid, 0.1, KernelMeasure.zero(), KernelMeasure.zero(),
                  SpectralField.mode(small_grid, 1.0), 1.0)


def test_zero_initial_stays_zero(small_grid):
    problem = SHProblem(small_grid, 0.1, KernelMeasure.gaussian(), KernelMeasure.dirac(),
                        SpectralField.zeros(small_grid), t_end=2.0, dt=0.5)
    traj = simulate_sh(problem)
    assert traj.completed
    assert traj.times == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert max(traj.sup_norms) == 0.0


def test_step_count_lands_on_end():
    assert step_count(2.0, 0.5) == 4
    assert step_count(1.0, 0.3) == 4
    assert step_count(0.0, 0.1) == 0


def test_snapshot_stride_and_lookup(small_grid, local_cubic):
    u0 = SpectralField.from_function(small_grid, lambda x: 0.1 * np.cos(x))
    problem = SHProblem(small_grid, 0.1, *local_cubic, u0, t_end=3.0, dt=0.25)
    traj = simulate_sh(problem, snapshot_stride=4)
    assert_allclose(traj.times, [0.0, 1.0, 2.0, 3.0])
    assert traj.at(2.0) is traj.fields[2]
    with pytest.raises(TrajectoryError):
        traj.index_of(1.5)
    frame = traj.to_frame()
    assert list(frame.columns) == ["t", "sup", "c4"]
    assert len(frame) == 4


def test_blowup_is_recorded_not_raised(small_grid):
    # a negative cubic coefficient makes the cubic term destabilizing
    u0 = SpectralField.from_function(small_grid, lambda x: 2.0 * np.cos(x))
    problem = SHProblem(small_grid, 0.1, KernelMeasure.zero(), KernelMeasure.dirac(-1.0), u0, t_end=50.0, dt=0.1)
    with np.errstate(all="ignore"):
        traj = simulate_sh(problem)
    assert not traj.completed
    assert isinstance(traj.blowup, BlowUpError)
    assert traj.times[-1] < 50.0
    assert np.all(np.isfinite(traj.final.values))


@pytest.mark.slow
def test_roll_amplitude_stays_near_stationary_value(slow_grid, local_cubic):
    from shlab.approx import build_psi

    eps = 0.1
    grid = TorusGrid.for_M(40)
    A = SpectralField.constant(slow_grid, 1.0 / math.sqrt(3.0))
    u0 = build_psi(A, eps, grid)
    problem = SHProblem(grid, eps, *local_cubic, u0, t_end=1.0 / eps ** 2, dt=0.1)
    traj = simulate_sh(problem, snapshot_stride=100)
    assert traj.completed
    target = 2 * eps / math.sqrt(3.0)
    assert max(abs(s - target) for s in traj.sup_norms) <= 5 * eps ** 2
