"""
Randomized property suite for the filter, convolution and semigroup estimates.

Every check returns a dict with at least {"passed": bool} and the measured quantities;
a failed check is a result, not an exception. All randomness comes from one
numpy Generator seeded from the run config.
"""
from __future__ import annotations

import logging
import time
from typing import Callable, Dict, Tuple

import numpy as np

from shlab.approx import (
    convolution_approx_gap,
    critical_cancellation,
    linear_operator_bounds,
    nonlinear_increment,
)
from shlab.config import RunConfig
from shlab.glsolver import gl_cubic_coefficient, time_derivative_bound_check, truncate_band
from shlab.kernel import KernelMeasure, fourier_symbol, total_variation
from shlab.shsolver import nonlinearity
from shlab.spectral import (
    SPECTRAL_FLOOR,
    PeriodicGrid,
    SpectralField,
    TorusGrid,
    apply_filter,
    apply_semigroup,
    c_norm,
    cutoff_values,
    derivative,
    lift_to_fast,
    make_cutoff,
    modulated_kernel_convolve,
    refine,
    relative_energy,
    random_field,
    semigroup_decay_rate,
    smoothing_constant,
)

from experiments.harness import fit_slope

logger = logging.getLogger(__name__)

INSTANCES = 100
SMALL_GRID = (16, 256)
LADDER = (0.1, 0.05, 0.025)
SCALING_LADDER = (0.2, 0.1, 0.05)
SEMIGROUP_GROWTH_MAX = 1.05


def _test_kernels(config: RunConfig) -> Tuple[KernelMeasure, KernelMeasure]:
    """Configured kernels, with a unit gaussian standing in for a zero kernel."""
    Q, K = config.kernel_Q(), config.kernel_K()
    if Q.is_zero():
        Q = KernelMeasure.gaussian(1.0, 1.0)
    if K.is_zero():
        K = KernelMeasure.gaussian(1.0, 1.0)
    return Q, K


def _near_critical(grid: PeriodicGrid) -> np.ndarray:
    return (np.abs(grid.kappa - 1) <= 0.25) | (np.abs(grid.kappa + 1) <= 0.25)


# ======== Cancellation / support ========

def check_ec_vanish(rng: np.random.Generator, grid: PeriodicGrid) -> dict:
    """E_c(d^r1 E_c u1 * d^r2 E_c u2) = 0"""
    chi_c = make_cutoff("chi_c", grid)
    worst = 0.0
    for _ in range(INSTANCES):
        u1 = apply_filter(random_field(grid, rng), chi_c)
        u2 = apply_filter(random_field(grid, rng), chi_c)
        r1, r2 = rng.integers(0, 3, size=2)
        prod = derivative(u1, int(r1)) * derivative(u2, int(r2))
        worst = max(worst, _energy_ratio(prod.coeffs * chi_c.values, prod.coeffs))
    return {"passed": worst <= SPECTRAL_FLOOR, "max_relative_energy": worst, "instances": INSTANCES}


def _energy_ratio(filtered: np.ndarray, total: np.ndarray) -> float:
    e_total = float(np.sum(np.abs(total) ** 2))
    return float(np.sum(np.abs(filtered) ** 2)) / e_total if e_total > 0 else 0.0


def check_cancel_critical(rng: np.random.Generator, grid: PeriodicGrid, Q: KernelMeasure) -> dict:
    """E_c(B1 (Q e^{in.}) * B2) = 0 for B1, B2 spectrally near +-1."""
    mask = _near_critical(grid)
    chi_c = cutoff_values("chi_c", grid.kappa)
    worst = 0.0
    for _ in range(INSTANCES):
        B1 = random_field(grid, rng, mask=mask)
        B2 = random_field(grid, rng, mask=mask)
        n = int(rng.integers(-2, 3))
        prod = B1 * modulated_kernel_convolve(B2, Q, n)
        worst = max(worst, _energy_ratio(prod.coeffs * chi_c, prod.coeffs))
    return {"passed": worst <= SPECTRAL_FLOOR, "max_relative_energy": worst, "instances": INSTANCES}


def check_support(rng: np.random.Generator, grid: PeriodicGrid, Q: KernelMeasure, K: KernelMeasure) -> dict:
    """Quadratic products of |kappa| <= 1/4 data live in |kappa| <= 1/2, cubic ones in |kappa| <= 3/4."""
    inner = np.abs(grid.kappa) <= 0.25
    outside_quad = np.abs(grid.kappa) > 0.5 + 1e-12
    outside_cubic = np.abs(grid.kappa) > 0.75 + 1e-12
    worst_q = worst_c = 0.0
    for _ in range(INSTANCES):
        B1, B2, B3 = (random_field(grid, rng, mask=inner) for _ in range(3))
        n = int(rng.integers(-2, 3))
        quad = B1 * modulated_kernel_convolve(B2, Q, n)
        cubic = B1 * modulated_kernel_convolve(B2 * B3, K, n)
        worst_q = max(worst_q, relative_energy(quad.coeffs, outside_quad))
        worst_c = max(worst_c, relative_energy(cubic.coeffs, outside_cubic))
    return {"passed": max(worst_q, worst_c) <= SPECTRAL_FLOOR,
            "quadratic_outside": worst_q, "cubic_outside": worst_c, "instances": INSTANCES}


# ======== Scaling filter ========

def smooth_slow_amplitude(rng: np.random.Generator, grid: PeriodicGrid, decay: float = 6.0) -> SpectralField:
    """Complex amplitude with coefficients ~ (1+|j|)^-decay and random phases."""
    phases = np.exp(2j * np.pi * rng.random(grid.N))
    c = phases * (1.0 + np.abs(grid.index)) ** (-decay)
    c[grid.nyquist] = 0.0
    return SpectralField(grid, np.fft.ifft(c) * grid.N)


def check_e0_scaling(rng: np.random.Generator, P: int = 4, slow_points: int = 64) -> dict:
    """||E_0^c A(eps .)||_{C^n} ~ eps^n for n = 1, 2."""
    slow = PeriodicGrid(P, slow_points)
    A = smooth_slow_amplitude(rng, slow)
    values: Dict[int, list] = {1: [], 2: []}
    for eps in SCALING_LADDER:
        grid = TorusGrid.for_M(int(round(P / eps)))
        lifted = lift_to_fast(A, grid)
        e0c = apply_filter(lifted, make_cutoff("chi_0c", grid))
        for n in values:
            values[n].append((eps, c_norm(e0c, n)))
    out: dict = {"passed": True}
    for n, pts in values.items():
        slope = fit_slope(pts).slope
        out[f"slope_C{n}"] = slope
        out["passed"] = out["passed"] and slope >= n - 0.2
    return out


# ======== Semigroup ========

def check_semigroup(rng: np.random.Generator, eps: float = 0.05, M: int = 64) -> dict:
    grid = TorusGrid.for_M(M)
    sigma = semigroup_decay_rate(grid, eps)
    v = random_field(grid, rng)
    ws = apply_filter(v, make_cutoff("chi_s_h", grid))
    chi_ch = make_cutoff("chi_c_h", grid)

    times = np.linspace(1.0, 200.0, 40)
    sup = np.array([apply_semigroup(ws, t, eps, make_cutoff("chi_s_h", grid)).sup() for t in times])
    rate = -float(np.polyfit(times, np.log(sup), 1)[0])

    # e^{Lt} E_c^h u against e^{eps^2 t} ||E_c^h u||
    growth = 0.0
    base = apply_semigroup(v, 0.0, eps, chi_ch).sup()
    for t in (0.0, 10.0, 50.0, 200.0):
        grown = apply_semigroup(v, t, eps, chi_ch).sup()
        growth = max(growth, grown / (base * np.exp(eps ** 2 * t)))
    return {"passed": rate >= 0.9 * sigma and growth <= SEMIGROUP_GROWTH_MAX,
            "sigma_grid": sigma, "measured_rate": rate, "growth_factor": growth}


# ======== Convolution estimates ========

def check_continuity(rng: np.random.Generator, grid: PeriodicGrid, Q: KernelMeasure) -> dict:
    """sup|B1 (Q e^{in.}) * B2| <= |Q| sup|B1| sup|B2|"""
    tv = total_variation(Q)
    worst = 0.0
    for _ in range(INSTANCES):
        B1, B2 = random_field(grid, rng), random_field(grid, rng)
        n = int(rng.integers(-2, 3))
        lhs = c_norm(B1 * modulated_kernel_convolve(B2, Q, n), 0)
        bound = tv * refine(B1, 16).sup() * refine(B2, 16).sup()
        worst = max(worst, lhs / bound if bound > 0 else 0.0)
    return {"passed": worst <= 1.0 + 1e-9, "max_ratio": worst, "total_variation": tv}


def check_convolution_approx(rng: np.random.Generator, P: int = 4, slow_points: int = 64) -> dict:
    """Gaps of the q_n-replacement scale like eps; exact for delta_0 and for constant B2."""
    Q = KernelMeasure.gaussian(1.0, 1.0)
    slow = PeriodicGrid(P, slow_points)
    band = np.abs(slow.index) <= 6
    B1, B2, B3 = (random_field(slow, rng, mask=band, decay=2.0) for _ in range(3))
    n = 1
    quad, cubic = [], []
    for eps in LADDER:
        q_gap, c_gap = convolution_approx_gap(B1, B2, B3, Q, n, eps)
        quad.append((eps, q_gap))
        cubic.append((eps, c_gap))
    slope_q, slope_c = fit_slope(quad).slope, fit_slope(cubic).slope
    dirac_gaps = convolution_approx_gap(B1, B2, B3, KernelMeasure.dirac(), n, LADDER[0])
    const = SpectralField.constant(slow, 1.0)
    const_gap = convolution_approx_gap(B1, const, const, Q, n, LADDER[0])[0]
    scale = max(1.0, c_norm(B1, 1))
    passed = (0.8 <= slope_q <= 1.3 and 0.8 <= slope_c <= 1.3
              and max(dirac_gaps) <= 1e-11 * scale and const_gap <= 1e-11 * scale)
    return {"passed": passed, "slope_quadratic": slope_q, "slope_cubic": slope_c,
            "dirac_gap": max(dirac_gaps), "constant_gap": const_gap, "n": n}


def check_smoothing(rng: np.random.Generator, grid: PeriodicGrid) -> dict:
    """Measured C_m in ||E_0 u||_{C^m} + ||E_c u||_{C^m} <= C_m ||u||_{C^0}."""
    constants = {m: 0.0 for m in range(5)}
    for _ in range(20):
        u = random_field(grid, rng)
        for m in constants:
            constants[m] = max(constants[m], smoothing_constant(u, m))
    return {"passed": all(np.isfinite(c) for c in constants.values()),
            **{f"C_{m}": c for m, c in constants.items()}}


# ======== Error-equation structure ========

def check_error_operators(rng: np.random.Generator, grid: PeriodicGrid, Q: KernelMeasure,
                          K: KernelMeasure, eps: float = 0.1) -> dict:
    """E_c L2 = E_c N2 = 0, operator constants, and the nonlinear increment identity."""
    mask = _near_critical(grid)
    chi_c = make_cutoff("chi_c", grid)
    worst_cancel = 0.0
    worst_identity = 0.0
    bounds = {"L_c": 0.0, "L_s": 0.0}
    for _ in range(20):
        phi_c = random_field(grid, rng, mask=mask)
        phi_s = random_field(grid, rng, mask=np.abs(grid.kappa) <= 2.5)
        R_c = apply_filter(random_field(grid, rng), chi_c)
        R_s = random_field(grid, rng, mask=np.abs(grid.kappa) <= 3.0)
        worst_cancel = max(worst_cancel, *critical_cancellation(R_c, phi_c, Q))
        for key, value in linear_operator_bounds(R_c, R_s, phi_c, phi_s, Q, K).items():
            bounds[key] = max(bounds[key], value)

        phi = eps * phi_c + eps ** 2 * phi_s
        R = eps ** 2 * R_c + eps ** 3 * R_s
        direct = nonlinearity(phi + R, Q, K) - nonlinearity(phi, Q, K)
        expanded = nonlinear_increment(R_c, R_s, phi_c, phi_s, Q, K, eps)
        worst_identity = max(worst_identity, (direct - expanded).sup() / max(direct.sup(), 1e-300))
    return {"passed": worst_cancel <= SPECTRAL_FLOOR and worst_identity <= 1e-10,
            "critical_cancellation": worst_cancel, "increment_identity": worst_identity,
            "L_c_constant": bounds["L_c"], "L_s_constant": bounds["L_s"]}


def check_time_derivative_bound(rng: np.random.Generator, Q: KernelMeasure, gamma: float, P: int = 10, slow_points: int = 128) -> dict:
    q1 = float(fourier_symbol(Q, 1.0))
    slow = PeriodicGrid(P, slow_points)
    worst = 0.0
    passed = True
    for _ in range(20):
        A = truncate_band(smooth_slow_amplitude(rng, slow, decay=3.0), 6)
        out = time_derivative_bound_check(A, q1, gamma)
        worst = max(worst, out["measured_constant"])
        passed = passed and out["passed"]
    return {"passed": passed, "max_measured_constant": worst, "q1": q1,
            "reference_constant": 10.0 * max(2.0 * abs(q1), 1.0)}


# ======== Suite ========

def run_lemma_suite(config: RunConfig) -> Tuple[dict, Dict[str, float]]:
    """Report {"passed", "checks", "seed"} and per-check wall-clock timings."""
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    Q, K = _test_kernels(config)
    small = TorusGrid(*SMALL_GRID)
    checks: Dict[str, Callable[[], dict]] = {
        "ec_vanish": lambda: check_ec_vanish(rng, small),
        "cancel_critical": lambda: check_cancel_critical(rng, small, Q),
        "support": lambda: check_support(rng, small, Q, K),
        "e0_scaling": lambda: check_e0_scaling(rng),
        "semigroup": lambda: check_semigroup(rng),
        "continuity": lambda: check_continuity(rng, small, Q),
        "convolution_approx": lambda: check_convolution_approx(rng),
        "smoothing": lambda: check_smoothing(rng, small),
        "error_operators": lambda: check_error_operators(rng, small, Q, K),
        "time_derivative_bound": lambda: check_time_derivative_bound(rng, Q, gl_cubic_coefficient(Q, K)),
    }
    results: Dict[str, dict] = {}
    timings: Dict[str, float] = {}
    for name, check in checks.items():
        t0 = time.perf_counter()
        try:
            results[name] = check()
        except Exception as e:  # a crashing check is reported as a failure
            logger.error("Проверка %s завершилась с ошибкой: %s", name, e)
            results[name] = {"passed": False, "error": str(e)}
        results[name]["passed"] = bool(results[name]["passed"])
        timings[name] = time.perf_counter() - t0
        level = logging.INFO if results[name]["passed"] else logging.WARNING
        logger.log(level, "Проверка %s: %s", name, "OK" if results[name]["passed"] else "FAIL")
    return {
        "passed": all(r["passed"] for r in results.values()),
        "checks": results,
        "seed": config.seed,
    }, {**timings, "total_s": time.perf_counter() - started}
