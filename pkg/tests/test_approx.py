import numpy as np
import pytest
from numpy.testing import assert_allclose

from shlab.approx import (
    Ansatz,
    build_phi,
    build_psi,
    convolution_approx_gap,
    critical_cancellation,
    error_components,
    error_equation_check,
    linear_operator_bounds,
    nonlinear_increment,
    residual,
    split_forcings,
)
from shlab.errors import GridError
from shlab.glsolver import GLSystem, correctors, gl_cubic_coefficient, initial_amplitude, simulate_gl
from shlab.kernel import KernelMeasure
from shlab.shsolver import SHProblem, nonlinearity, simulate_sh
from shlab.spectral import (
    SPECTRAL_FLOOR,
    SpectralField,
    TorusGrid,
    apply_filter,
    make_cutoff,
    random_field,
    relative_energy,
)

from experiments.harness import fine_window, fit_slope


@pytest.fixture
def fast40():
    return TorusGrid.for_M(40)


def _near_critical(grid):
    return (np.abs(grid.kappa - 1) <= 0.25) | (np.abs(grid.kappa + 1) <= 0.25)


# ======== psi / phi ========

def test_psi_of_unit_amplitude(slow_grid, fast40):
    psi = build_psi(SpectralField.constant(slow_grid, 1.0), 0.1, fast40)
    assert_allclose(psi.values, 0.2 * np.cos(fast40.x), atol=1e-14)


def test_psi_of_imaginary_amplitude(slow_grid, fast40):
    psi = build_psi(SpectralField.constant(slow_grid, 1j), 0.1, fast40)
    assert_allclose(psi.values, -0.2 * np.sin(fast40.x), atol=1e-14)


def test_psi_rejects_inconsistent_eps(slow_grid, fast40):
    with pytest.raises(GridError):
        build_psi(SpectralField.constant(slow_grid, 1.0), 0.2, fast40)


def test_phi_critical_part_is_psi_over_eps(modulated_trajectory, fast40):
    # band-limited amplitudes pass E_0 unchanged
    A = modulated_trajectory.fields[0]
    pair = correctors(A, 0.5)
    phi, phi_c, phi_s = build_phi(A, pair.A0, pair.A2, 0.1, fast40)
    psi = build_psi(A, 0.1, fast40)
    assert_allclose(phi_c.values, psi.values / 0.1, atol=1e-12)
    assert_allclose(phi.values, (0.1 * phi_c + 0.01 * phi_s).values, atol=1e-15)


def test_phi_without_q1_equals_psi(slow_grid, fast40):
    A = SpectralField.constant(slow_grid, 0.6)
    pair = correctors(A, 0.0)
    phi, _, phi_s = build_phi(A, pair.A0, pair.A2, 0.1, fast40)
    assert phi_s.sup() == 0.0
    assert_allclose(phi.values, build_psi(A, 0.1, fast40).values, atol=1e-14)


# ======== Ansatz ========

@pytest.fixture
def cubic_ansatz(modulated_trajectory, fast40, local_cubic):
    return Ansatz(0.1, fast40, modulated_trajectory, *local_cubic)


def test_ansatz_slow_time(cubic_ansatz):
    assert cubic_ansatz.slow_time(10.0) == pytest.approx(0.1)
    assert cubic_ansatz.gamma == 3.0
    assert cubic_ansatz.q1 == 0.0


def test_ansatz_rejects_mismatched_grid(modulated_trajectory, local_cubic):
    with pytest.raises(GridError):
        Ansatz(0.1, TorusGrid.for_M(50), modulated_trajectory, *local_cubic)


@pytest.mark.numerical
def test_time_derivative_matches_finite_differences(modulated_trajectory, fast40):
    ansatz = Ansatz(0.1, fast40, modulated_trajectory, KernelMeasure.gaussian(), KernelMeasure.dirac())
    t, h = 10.0, 1.0
    exact = ansatz.time_derivative(ansatz.snapshot(t))
    fd = (ansatz.snapshot(t + h).phi - ansatz.snapshot(t - h).phi) * (1.0 / (2 * h))
    assert (exact - fd).sup() <= 1e-2 * exact.sup()


# ======== Residual ========

def test_residual_of_zero_amplitude(slow_grid, fast40):
    A0 = initial_amplitude("zero", slow_grid, 3.0, band=2)
    traj = simulate_gl(GLSystem(3.0, slow_grid, A0, T_end=0.25, dT=0.025))
    report = residual(Ansatz(0.1, fast40, traj, KernelMeasure.gaussian(), KernelMeasure.dirac()), 0.0)
    assert report.res.sup() == 0.0
    assert report.pairing_defect() == 0.0
    delta_c, delta_s = split_forcings(report, 0.1)
    assert delta_c.sup() == 0.0 and delta_s.sup() == 0.0


def test_prefactors_pair_with_conjugates(modulated_trajectory, fast40):
    ansatz = Ansatz(0.1, fast40, modulated_trajectory, KernelMeasure.gaussian(), KernelMeasure.dirac())
    report = residual(ansatz, 10.0)
    assert set(report.prefactors) == {-3, -2, -1, 0, 1, 2, 3}
    assert report.pairing_defect() <= 1e-10


def test_split_forcings_scale(cubic_ansatz):
    report = residual(cubic_ansatz, 10.0)
    delta_c, delta_s = split_forcings(report, 0.1)
    assert_allclose(delta_c.values, report.ec_res.values * 1e4, rtol=1e-12, atol=1e-18)
    assert_allclose(delta_s.values, report.es_res.values * 1e3, rtol=1e-12, atol=1e-18)
    assert report.norms["delta_c_c1"] == pytest.approx(report.norms["ec_res_c1"] * 1e4)


def test_filtered_parts_add_up(cubic_ansatz):
    report = residual(cubic_ansatz, 10.0)
    assert_allclose((report.ec_res + report.es_res).values, report.res.values, atol=1e-15)


@pytest.mark.slow
def test_residual_orders(modulated_trajectory, local_cubic):
    es, ec = [], []
    for M in (40, 80, 160):
        eps = 4 / M
        ansatz = Ansatz(eps, TorusGrid.for_M(M), modulated_trajectory, *local_cubic)
        report = residual(ansatz, 0.1 / eps ** 2)
        es.append((eps, report.norms["es_res_c1"]))
        ec.append((eps, report.norms["ec_res_c1"]))
    assert fit_slope(es).slope == pytest.approx(3.0, abs=0.3)
    assert fit_slope(ec).slope == pytest.approx(4.0, abs=0.4)


def test_prefactors_live_near_zero_wavenumber(fast40, slow_grid):
    Q, K = KernelMeasure.gaussian(1.0, 1.0), KernelMeasure.dirac()
    gamma = gl_cubic_coefficient(Q, K)
    A0 = initial_amplitude("modulated", slow_grid, gamma, band=2, modulation=0.2)
    traj = simulate_gl(GLSystem(gamma, slow_grid, A0, T_end=0.25, dT=0.0025), snapshot_stride=10, n_steps=100)
    report = residual(Ansatz(0.1, fast40, traj, Q, K), 10.0)
    outside = np.abs(fast40.kappa) > 3 / 4 + 1 / 16
    for ell, a in report.prefactors.items():
        assert relative_energy(a.coeffs, outside) <= 1e-10, ell


def test_filtered_residual_parts_are_scale_separated(cubic_ansatz, fast40):
    report = residual(cubic_ansatz, 10.0)
    near_critical = (np.abs(fast40.kappa - 1) <= 1 / 8) | (np.abs(fast40.kappa + 1) <= 1 / 8)
    away = (np.abs(fast40.kappa - 1) > 1 / 4) & (np.abs(fast40.kappa + 1) > 1 / 4)
    assert relative_energy(report.es_res.coeffs, near_critical) <= SPECTRAL_FLOOR
    assert relative_energy(report.ec_res.coeffs, away) <= SPECTRAL_FLOOR


@pytest.mark.slow
def test_prefactor_remainder_and_phi_orders(slow_grid):
    Q, K = KernelMeasure.gaussian(1.0, 1.0), KernelMeasure.dirac()
    gamma = gl_cubic_coefficient(Q, K)
    A0 = initial_amplitude("modulated", slow_grid, gamma, band=2, modulation=0.2)
    traj = simulate_gl(GLSystem(gamma, slow_grid, A0, T_end=0.25, dT=0.0025), snapshot_stride=10, n_steps=100)
    remainder, phi_gap = [], []
    for M in (40, 80, 160):
        eps = 4 / M
        report = residual(Ansatz(eps, TorusGrid.for_M(M), traj, Q, K), 0.1 / eps ** 2)
        remainder.append((eps, report.norms["remainder_c1"]))
        phi_gap.append((eps, report.norms["phi_minus_psi_c4"]))
        outside = np.abs(report.res.grid.kappa) > 3 / 4 + 1 / 16
        assert max(relative_energy(a.coeffs, outside) for a in report.prefactors.values()) <= 1e-10
    assert fit_slope(remainder).slope >= 3.5
    assert fit_slope(phi_gap).slope >= 1.8


# ======== Error components ========

def test_error_components_vanish_on_phi(cubic_ansatz):
    phi = cubic_ansatz.snapshot(5.0).phi
    comps = error_components(phi, phi, 0.1)
    assert comps.R.sup() == 0.0
    assert comps.norms["D"] == 0.0


def test_critical_perturbation_goes_to_R_c(cubic_ansatz, fast40):
    eps = 0.1
    phi = cubic_ansatz.snapshot(5.0).phi
    bump = SpectralField.from_function(fast40, lambda x: 2 * np.cos(x))
    comps = error_components(phi + eps ** 2 * bump, phi, eps)
    assert_allclose(comps.R_c.values, bump.values, atol=1e-12)
    assert comps.R_s.sup() <= 1e-9
    assert comps.norms["D"] == pytest.approx(2.0, abs=1e-8)


def test_error_components_grid_mismatch(fast40):
    with pytest.raises(GridError):
        error_components(SpectralField.zeros(fast40), SpectralField.zeros(TorusGrid.for_M(80)), 0.1)


# ======== Error-equation operators ========

def test_nonlinear_increment_identity(small_grid, rng):
    Q, K = KernelMeasure.gaussian(1.0, 1.0), KernelMeasure.laplace(0.5, 2.0)
    eps = 0.1
    chi_c = make_cutoff("chi_c", small_grid)
    for _ in range(5):
        phi_c = random_field(small_grid, rng, mask=_near_critical(small_grid))
        phi_s = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 2.5)
        R_c = apply_filter(random_field(small_grid, rng), chi_c)
        R_s = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 3.0)
        phi = eps * phi_c + eps ** 2 * phi_s
        R = eps ** 2 * R_c + eps ** 3 * R_s
        direct = nonlinearity(phi + R, Q, K) - nonlinearity(phi, Q, K)
        expanded = nonlinear_increment(R_c, R_s, phi_c, phi_s, Q, K, eps)
        assert (direct - expanded).sup() <= 1e-10 * direct.sup()


def test_critical_cancellation(small_grid, rng):
    R_c = apply_filter(random_field(small_grid, rng), make_cutoff("chi_c", small_grid))
    phi_c = random_field(small_grid, rng, mask=_near_critical(small_grid))
    l2, n2 = critical_cancellation(R_c, phi_c, KernelMeasure.gaussian())
    assert l2 <= SPECTRAL_FLOOR and n2 <= SPECTRAL_FLOOR


def test_linear_operator_bounds_are_finite(small_grid, rng):
    R_c = apply_filter(random_field(small_grid, rng), make_cutoff("chi_c", small_grid))
    R_s = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 3.0)
    phi_c = random_field(small_grid, rng, mask=_near_critical(small_grid))
    phi_s = random_field(small_grid, rng, mask=np.abs(small_grid.kappa) <= 2.5)
    bounds = linear_operator_bounds(R_c, R_s, phi_c, phi_s, KernelMeasure.gaussian(), KernelMeasure.dirac())
    assert set(bounds) == {"L_c", "L_s"}
    assert all(np.isfinite(v) and v > 0 for v in bounds.values())
    zero = SpectralField.zeros(small_grid)
    assert linear_operator_bounds(zero, zero, phi_c, phi_s, KernelMeasure.gaussian(),
                                  KernelMeasure.dirac()) == {"L_c": 0.0, "L_s": 0.0}


@pytest.mark.slow
def test_error_equation_defect_shrinks_with_step(cubic_ansatz, fast40):
    eps = cubic_ansatz.eps
    u0 = cubic_ansatz.snapshot(0.0).phi
    warmup = simulate_sh(SHProblem(fast40, eps, cubic_ansatz.Q, cubic_ansatz.K, u0, t_end=5.0, dt=0.05),
                         snapshot_stride=100)
    defects = []
    for h in (0.2, 0.1):
        window = fine_window(cubic_ansatz, warmup.final, 5.0, h)
        defects.append(error_equation_check(window, cubic_ansatz, window.times[1]))
    assert defects[1] < defects[0]


# ======== Convolution approximation ========

def _slow_fields(slow_grid, rng):
    band = np.abs(slow_grid.index) <= 6
    return [random_field(slow_grid, rng, mask=band, decay=2.0) for _ in range(3)]


def test_dirac_gap_is_zero(slow_grid, rng):
    B1, B2, B3 = _slow_fields(slow_grid, rng)
    q_gap, c_gap = convolution_approx_gap(B1, B2, B3, KernelMeasure.dirac(), 1, 0.1)
    assert max(q_gap, c_gap) <= 1e-11 * max(1.0, B1.sup())


def test_constant_B2_gap_is_zero(slow_grid, rng):
    B1, _, _ = _slow_fields(slow_grid, rng)
    one = SpectralField.constant(slow_grid, 1.0)
    q_gap, c_gap = convolution_approx_gap(B1, one, one, KernelMeasure.gaussian(), 2, 0.1)
    assert max(q_gap, c_gap) <= 1e-11 * max(1.0, B1.sup())


@pytest.mark.numerical
def test_gaussian_gap_scales_like_eps(slow_grid, rng):
    B1, B2, B3 = _slow_fields(slow_grid, rng)
    Q = KernelMeasure.gaussian(1.0, 1.0)
    coarse = convolution_approx_gap(B1, B2, B3, Q, 1, 0.1)
    fine = convolution_approx_gap(B1, B2, B3, Q, 1, 0.05)
    for a, b in zip(coarse, fine):
        assert 1.6 <= a / b <= 2.5


def test_gap_rejects_non_integer_domain(slow_grid, rng):
    B1, B2, B3 = _slow_fields(slow_grid, rng)
    with pytest.raises(GridError):
        convolution_approx_gap(B1, B2, B3, KernelMeasure.gaussian(), 1, 0.3)
