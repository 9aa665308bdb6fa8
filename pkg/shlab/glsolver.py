"""
Real Ginzburg–Landau amplitude equation on the slow torus

    d_T A = (1 + 4 d_X^2) A - gamma |A|^2 A,
    gamma = 2 k0 + k2 - q1 q2 / 9 - q1^2 / 9 - 2 q0 q1 - 2 q1^2,

plus the second-order corrector amplitudes A0 = -2 q1 |A|^2 and A2 = -(q1/9) A^2.
The slow grid is a PeriodicGrid with M = P, so its wavenumbers are the X-wavenumbers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from shlab.errors import BlowUpError, ConfigError, TrajectoryError
from shlab.kernel import KernelMeasure, coefficient_table
from shlab.shsolver import BLOWUP_THRESHOLD, ETDRK4Integrator, step_count
from shlab.spectral import (
    PeriodicGrid,
    SpectralField,
    c_norm,
    dealiased_product,
    derivative,
    from_fourier,
)

logger = logging.getLogger(__name__)

PRESETS = ("zero", "roll", "sech", "modulated")


# ======== Coefficient ========

def gl_cubic_coefficient(Q: KernelMeasure, K: KernelMeasure) -> float:
    q = coefficient_table(Q, 2)
    k = coefficient_table(K, 2)
    return float(2 * k[0] + k[2] - q[1] * q[2] / 9 - q[1] ** 2 / 9 - 2 * q[0] * q[1] - 2 * q[1] ** 2)


def gl_symbol(grid: PeriodicGrid) -> np.ndarray:
    """1 - 4 kappa_X^2"""
    return 1.0 - 4.0 * grid.kappa ** 2


def _conj_coeffs(c: np.ndarray) -> np.ndarray:
    """Coefficients of conj(A) from those of A."""
    return np.conj(np.roll(c[::-1], 1))


def gl_nonlinear_coeffs(c: np.ndarray, gamma: float) -> np.ndarray:
    if gamma == 0.0:
        return np.zeros_like(c)
    return -gamma * dealiased_product(dealiased_product(c, c), _conj_coeffs(c))


def gl_rhs(A: SpectralField, gamma: float) -> SpectralField:
    if not np.all(np.isfinite(A.samples)):
        raise BlowUpError(step=0, time=0.0, reason="non-finite amplitude")
    c = A.coeffs
    rhs = gl_symbol(A.grid) * c + gl_nonlinear_coeffs(c, gamma)
    return from_fourier(rhs, A.grid, real=A.real)


# ======== System and trajectory ========

@dataclass
class GLSystem:
    gamma: float
    grid: PeriodicGrid
    A: SpectralField
    T_end: float = 1.0
    dT: float = 1e-3

    def __post_init__(self):
        if self.A.grid != self.grid:
            raise ConfigError(f"amplitude lives on {self.A.grid}, system grid is {self.grid}")
        if self.T_end < 0 or not self.dT > 0:
            raise ConfigError(f"need T_end >= 0 and dT > 0, got T_end={self.T_end}, dT={self.dT}")
        if self.gamma <= 0:
            logger.warning("gamma=%.6g <= 0: the amplitude equation may blow up before T_end", self.gamma)

    def slow_length_matches(self, eps: float, M: int) -> bool:
        """L_X = eps * 2 pi M"""
        return abs(self.grid.length - eps * 2.0 * math.pi * M) <= 1e-12 * self.grid.length


@dataclass
class GLTrajectory:
    times: List[float] = field(default_factory=list)
    fields: List[SpectralField] = field(default_factory=list)
    gamma: float = 0.0
    dT: float = 0.0
    blowup: Optional[BlowUpError] = None

    @property
    def final(self) -> SpectralField:
        return self.fields[-1]

    @property
    def completed(self) -> bool:
        return self.blowup is None

    def index_at_or_before(self, T: float, tol: float = 1e-9) -> int:
        times = np.asarray(self.times)
        if times.size == 0 or T < times[0] - tol or T > times[-1] + tol * max(1.0, abs(T)):
            raise TrajectoryError(f"T={T:.6g} outside the amplitude trajectory "
                                  f"[{times[0] if times.size else float('nan'):.6g}, "
                                  f"{times[-1] if times.size else float('nan'):.6g}]")
        i = int(np.searchsorted(times, T + tol * max(1.0, abs(T)), side="right")) - 1
        return max(i, 0)

    def at(self, T: float, tol: float = 1e-9) -> SpectralField:
        """Amplitude at slow time T; advanced from the nearest earlier snapshot when needed."""
        i = self.index_at_or_before(T, tol)
        gap = T - self.times[i]
        if abs(gap) <= tol * max(1.0, abs(T)):
            return self.fields[i]
        return advance_gl(self.fields[i], self.gamma, gap, self.dT)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "T": self.times,
            "sup_abs_A": [f.sup() for f in self.fields],
            "c4_A": [c_norm(f, 4) for f in self.fields],
        })


def _integrator(grid: PeriodicGrid, gamma: float, dT: float) -> ETDRK4Integrator:
    return ETDRK4Integrator(gl_symbol(grid), dT, lambda c: gl_nonlinear_coeffs(c, gamma))


def _blown_up(c: np.ndarray, grid: PeriodicGrid) -> Optional[str]:
    if not np.all(np.isfinite(c)):
        return "non-finite amplitude"
    if np.sum(np.abs(c)) > BLOWUP_THRESHOLD:
        sup = from_fourier(c, grid).sup()
        if sup > BLOWUP_THRESHOLD:
            return f"sup|A| {sup:.3g} > {BLOWUP_THRESHOLD:.0e}"
    return None


def simulate_gl(system: GLSystem, snapshot_stride: int = 1, n_steps: Optional[int] = None) -> GLTrajectory:
    steps = step_count(system.T_end, system.dT) if n_steps is None else int(n_steps)
    dT = system.T_end / steps if steps else system.dT
    grid = system.grid
    integrator = _integrator(grid, system.gamma, dT)

    traj = GLTrajectory(gamma=system.gamma, dT=dT)
    c = system.A.coeffs.copy()
    c[grid.nyquist] = 0.0
    traj.times.append(0.0)
    traj.fields.append(from_fourier(c, grid, real=system.A.real))

    for step in range(1, steps + 1):
        c_next = integrator.step(c)
        reason = _blown_up(c_next, grid)
        if reason is not None:
            traj.blowup = BlowUpError(step, step * dT, last_finite=c.copy(), reason=reason)
            logger.warning("GL gamma=%.4g: %s", system.gamma, traj.blowup)
            return traj
        c = c_next
        if step % snapshot_stride == 0 or step == steps:
            traj.times.append(step * dT)
            traj.fields.append(from_fourier(c, grid, real=system.A.real))
    return traj


def advance_gl(A: SpectralField, gamma: float, dT_total: float, dT: float) -> SpectralField:
    """A after slow time dT_total, using steps no longer than dT."""
    if dT_total < 0:
        raise TrajectoryError(f"cannot advance the amplitude backwards (dT_total={dT_total})")
    if dT_total == 0:
        return A
    n = max(1, int(math.ceil(dT_total / dT - 1e-9)))
    integrator = _integrator(A.grid, gamma, dT_total / n)
    c = A.coeffs
    for step in range(1, n + 1):
        c = integrator.step(c)
        reason = _blown_up(c, A.grid)
        if reason is not None:
            raise BlowUpError(step, step * dT_total / n, reason=reason)
    return from_fourier(c, A.grid, real=A.real)


# ======== Correctors ========

@dataclass(frozen=True)
class CorrectorPair:
    A0: SpectralField
    A2: SpectralField


def correctors(A: SpectralField, q1: float) -> CorrectorPair:
    A0 = A.abs2() * (-2.0 * q1)
    A2 = SpectralField(A.grid, -(q1 / 9.0) * A.samples ** 2, real=A.real)
    return CorrectorPair(A0, A2)


def corrector_time_derivatives(A: SpectralField, dA: SpectralField, q1: float) -> Tuple[SpectralField, SpectralField]:
    """(d_T A0, d_T A2) by the chain rule from d_T A."""
    a, da = A.samples, dA.samples
    dA0 = SpectralField(A.grid, -2.0 * q1 * 2.0 * np.real(da * np.conj(a)), real=True)
    dA2 = SpectralField(A.grid, -(2.0 / 9.0) * q1 * a * da, real=A.real and dA.real)
    return dA0, dA2


def time_derivative_bound_check(A: SpectralField, q1: float, gamma: float) -> dict:
    """Both sides of ||d_T A0||_{C1} + ||d_T A2||_{C1} <= C (||A||_{C3} + ||A||_{C1}^3) ||A||_{C1}."""
    dA = gl_rhs(A, gamma)
    dA0, dA2 = corrector_time_derivatives(A, dA, q1)
    lhs = c_norm(dA0, 1) + c_norm(dA2, 1)
    a1 = c_norm(A, 1)
    shape = (c_norm(A, 3) + a1 ** 3) * a1
    # product rule on sup norms plus ||d_T A||_{C1} <= 5||A||_{C3} + 3|gamma| ||A||_{C1}^3
    constant = 9.0 * max(abs(q1), 1.0) * max(5.0, 3.0 * abs(gamma))
    measured = lhs / shape if shape > 0 else 0.0
    return {
        "lhs": lhs,
        "shape": shape,
        "measured_constant": measured,
        "bound_constant": constant,
        "reference_constant": 10.0 * max(2.0 * abs(q1), 1.0),
        "passed": lhs <= constant * shape * (1 + 1e-9) + 1e-14,
    }


# ======== Initial amplitudes ========

def band_limit(P: int, eps_max: float) -> int:
    """Largest slow mode j with eps_max * j / P <= 1/16."""
    return max(0, int(math.floor(P / (16.0 * eps_max) + 1e-9)))


def truncate_band(A: SpectralField, band: int) -> SpectralField:
    c = A.coeffs.copy()
    c[np.abs(A.grid.index) > band] = 0.0
    return from_fourier(c, A.grid, real=A.real)


def initial_amplitude(preset: str, grid: PeriodicGrid, gamma: float, band: int,
                      amplitude: float = 1.0, width: float = 0.5, modulation: float = 0.2) -> SpectralField:
    """zero | roll (1/sqrt(gamma)) | sech | modulated, spectrally truncated to |j| <= band."""
    preset = preset.strip().lower()
    X = grid.x
    if preset == "zero":
        return SpectralField(grid, np.zeros(grid.N, dtype=complex))
    if preset == "roll":
        if gamma <= 0:
            raise ConfigError(f"roll preset needs gamma > 0, got {gamma:.6g}")
        return SpectralField(grid, np.full(grid.N, 1.0 / math.sqrt(gamma), dtype=complex))
    if preset == "sech":
        profile = amplitude / np.cosh(width * (X - grid.length / 2.0))
        return truncate_band(SpectralField(grid, profile.astype(complex)), band)
    if preset == "modulated":
        base = amplitude / math.sqrt(gamma) if gamma > 0 else amplitude
        profile = base * (1.0 + modulation * np.cos(X / grid.M))
        return truncate_band(SpectralField(grid, profile.astype(complex)), band)
    raise ConfigError(f"unknown initial preset '{preset}', expected one of {PRESETS}")
