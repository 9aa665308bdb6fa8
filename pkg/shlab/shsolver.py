"""
Time integration of the nonlocal Swift–Hohenberg equation

    d_t u = -(1 + d_x^2)^2 u + eps^2 u - u Q*u - u K*u^2

on the fast torus. The diagonal linear part is propagated exactly by ETDRK4;
products are dealiased by zero padding (factor 2) and truncated after each product.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from shlab.errors import BlowUpError, ConfigError, GridError, TrajectoryError
from shlab.kernel import KernelMeasure, fourier_symbol
from shlab.spectral import (
    PeriodicGrid,
    SpectralField,
    c_norm,
    conjugate_asymmetry,
    dealiased_product,
    from_fourier,
    linear_symbol,
    require_same_grid,
)

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e6
CONTOUR_POINTS = 32
CONTOUR_THRESHOLD = 0.5

__all__ = [
    "BLOWUP_THRESHOLD",
    "ETDRK4Integrator",
    "SHProblem",
    "SHTrajectory",
    "etdrk4_step",
    "linear_symbol",
    "local_nonlinearity",
    "nonlinearity",
    "nonlinearity_coeffs",
    "simulate_sh",
    "step_count",
]


# ======== ETDRK4 ========

def _phi_direct(z: np.ndarray, h: float):
    ez = np.exp(z)
    q = h * (np.exp(z / 2) - 1.0) / z
    f1 = h * (-4.0 - z + ez * (4.0 - 3.0 * z + z ** 2)) / z ** 3
    f2 = h * (2.0 + z + ez * (z - 2.0)) / z ** 3
    f3 = h * (-4.0 - 3.0 * z - z ** 2 + ez * (4.0 - z)) / z ** 3
    return q, f1, f2, f3


def _phi_contour(z: np.ndarray, h: float, points: int):
    """Mean over a full unit circle around each z (Cauchy integral), no cancellation near z = 0."""
    roots = np.exp(2j * np.pi * (np.arange(points) + 0.5) / points)
    r = z[:, None] + roots[None, :]
    er = np.exp(r)
    q = h * ((np.exp(r / 2) - 1.0) / r).mean(axis=1)
    f1 = h * ((-4.0 - r + er * (4.0 - 3.0 * r + r ** 2)) / r ** 3).mean(axis=1)
    f2 = h * ((2.0 + r + er * (r - 2.0)) / r ** 3).mean(axis=1)
    f3 = h * ((-4.0 - 3.0 * r - r ** 2 + er * (4.0 - r)) / r ** 3).mean(axis=1)
    return q, f1, f2, f3


class ETDRK4Integrator:
    """Four-stage exponential integrator for v' = L v + N(v) with diagonal L.

    Shared by the Swift–Hohenberg and Ginzburg–Landau solvers; coefficients are
    precomputed once per (symbol, dt).
    """

    def __init__(self, symbol: np.ndarray, dt: float,
                 nonlinear: Callable[[np.ndarray], np.ndarray],
                 contour_points: int = CONTOUR_POINTS,
                 contour_threshold: float = CONTOUR_THRESHOLD):
        if not dt > 0:
            raise GridError(f"time step must be positive, got {dt}")
        self.dt = float(dt)
        self.nonlinear = nonlinear
        symbol = np.asarray(symbol)
        z = (symbol * self.dt).astype(complex)
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)

        q = np.empty_like(z)
        f1 = np.empty_like(z)
        f2 = np.empty_like(z)
        f3 = np.empty_like(z)
        small = np.abs(z) < contour_threshold
        if np.any(~small):
            q[~small], f1[~small], f2[~small], f3[~small] = _phi_direct(z[~small], self.dt)
        if np.any(small):
            q[small], f1[small], f2[small], f3[small] = _phi_contour(z[small], self.dt, contour_points)

        if np.isrealobj(symbol):
            self.E, self.E2 = self.E.real, self.E2.real
            q, f1, f2, f3 = q.real, f1.real, f2.real, f3.real
        self.Q, self.f1, self.f2, self.f3 = q, f1, f2, f3

    def step(self, v: np.ndarray) -> np.ndarray:
        Nv = self.nonlinear(v)
        a = self.E2 * v + self.Q * Nv
        Na = self.nonlinear(a)
        b = self.E2 * v + self.Q * Na
        Nb = self.nonlinear(b)
        c = self.E2 * a + self.Q * (2.0 * Nb - Nv)
        Nc = self.nonlinear(c)
        return self.E * v + self.f1 * Nv + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc

    def advance(self, v: np.ndarray, n_steps: int) -> np.ndarray:
        for _ in range(n_steps):
            v = self.step(v)
        return v


def etdrk4_step(u_hat: np.ndarray, dt: float, symbol: np.ndarray,
                nonlinear: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """One ETDRK4 step on coefficient arrays; raises BlowUpError on a non-finite result."""
    out = ETDRK4Integrator(symbol, dt, nonlinear).step(u_hat)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step=1, time=dt, last_finite=np.asarray(u_hat).copy())
    return out


# ======== Nonlinearity ========

def nonlinearity_coeffs(v: np.ndarray, q_hat: np.ndarray, k_hat: np.ndarray) -> np.ndarray:
    """Coefficients of -u (Q*u) - u (K*u^2) from the coefficients of u."""
    out = np.zeros_like(v, dtype=complex)
    if np.any(q_hat):
        out -= dealiased_product(v, q_hat * v)
    if np.any(k_hat):
        out -= dealiased_product(v, k_hat * dealiased_product(v, v))
    return out


def _kernel_symbols(grid: PeriodicGrid, Q: KernelMeasure, K: KernelMeasure):
    q_hat = np.asarray(fourier_symbol(Q, grid.kappa))
    k_hat = np.asarray(fourier_symbol(K, grid.kappa))
    return q_hat, k_hat


def _require_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise BlowUpError(step=0, time=0.0, reason=f"non-finite {what}")


def nonlinearity(u: SpectralField, Q: KernelMeasure, K: KernelMeasure) -> SpectralField:
    _require_finite(u.samples, "input field")
    q_hat, k_hat = _kernel_symbols(u.grid, Q, K)
    return from_fourier(nonlinearity_coeffs(u.coeffs, q_hat, k_hat), u.grid, real=u.real)


def local_nonlinearity(u: SpectralField, q: float, k: float) -> SpectralField:
    """Pointwise -q u^2 - k u^3 of the local quadratic-cubic equation."""
    _require_finite(u.samples, "input field")
    s = u.samples
    return SpectralField(u.grid, -q * s ** 2 - k * s ** 3, real=u.real)


# ======== Problem and trajectory ========

@dataclass
class SHProblem:
    grid: PeriodicGrid
    eps: float
    Q: KernelMeasure
    K: KernelMeasure
    initial: SpectralField
    t_end: float
    dt: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if self.t_end < 0 or not self.dt > 0:
            raise ConfigError(f"need t_end >= 0 and dt > 0, got t_end={self.t_end}, dt={self.dt}")
        require_same_grid(self.initial, SpectralField.zeros(self.grid))
        if not self.initial.real:
            raise ConfigError("initial condition must be real-valued")


@dataclass
class SHTrajectory:
    times: List[float] = field(default_factory=list)
    fields: List[SpectralField] = field(default_factory=list)
    sup_norms: List[float] = field(default_factory=list)
    c4_norms: List[float] = field(default_factory=list)
    dt: float = 0.0
    blowup: Optional[BlowUpError] = None

    def append(self, t: float, u: SpectralField) -> None:
        self.times.append(float(t))
        self.fields.append(u)
        self.sup_norms.append(u.sup())
        self.c4_norms.append(c_norm(u, 4))

    @property
    def final(self) -> SpectralField:
        return self.fields[-1]

    @property
    def completed(self) -> bool:
        return self.blowup is None

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        times = np.asarray(self.times)
        if times.size == 0:
            raise TrajectoryError("empty trajectory")
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > tol * max(1.0, abs(t)):
            raise TrajectoryError(f"no snapshot at t={t:.6g} (nearest {times[i]:.6g})")
        return i

    def at(self, t: float, tol: float = 1e-9) -> SpectralField:
        return self.fields[self.index_of(t, tol)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "sup": self.sup_norms, "c4": self.c4_norms})


def step_count(t_end: float, dt: float) -> int:
    """Number of steps of size close to dt that land exactly on t_end."""
    if t_end == 0:
        return 0
    n = t_end / dt
    return max(1, int(round(n)) if abs(n - round(n)) < 1e-9 * max(1.0, n) else int(math.ceil(n)))


def simulate_sh(problem: SHProblem, snapshot_stride: int = 1, n_steps: Optional[int] = None) -> SHTrajectory:
    """Integrate to t_end; blow-up stops the run and is recorded on the trajectory."""
    if snapshot_stride < 1:
        raise ConfigError(f"snapshot_stride must be >= 1, got {snapshot_stride}")
    steps = step_count(problem.t_end, problem.dt) if n_steps is None else int(n_steps)
    dt = problem.t_end / steps if steps else problem.dt
    if abs(dt - problem.dt) > 1e-12 * problem.dt:
        logger.debug("dt adjusted %.6g -> %.6g to land on t_end=%.6g", problem.dt, dt, problem.t_end)

    grid = problem.grid
    q_hat, k_hat = _kernel_symbols(grid, problem.Q, problem.K)
    integrator = ETDRK4Integrator(linear_symbol(grid.kappa, problem.eps), dt,
                                  lambda v: nonlinearity_coeffs(v, q_hat, k_hat))

    traj = SHTrajectory(dt=dt)
    v = problem.initial.coeffs.copy()
    v[grid.nyquist] = 0.0
    traj.append(0.0, from_fourier(v, grid, real=True))

    for step in range(1, steps + 1):
        v_next = integrator.step(v)
        t = step * dt
        reason = None
        if not np.all(np.isfinite(v_next)):
            reason = "non-finite state"
        elif np.sum(np.abs(v_next)) > BLOWUP_THRESHOLD:
            sup = from_fourier(v_next, grid, real=True).sup()
            if sup > BLOWUP_THRESHOLD:
                reason = f"sup-norm {sup:.3g} > {BLOWUP_THRESHOLD:.0e}"
        if reason is not None:
            traj.blowup = BlowUpError(step, t, last_finite=v.copy(), reason=reason)
            logger.warning("SH eps=%.4g: %s", problem.eps, traj.blowup)
            if traj.times[-1] != (step - 1) * dt:
                traj.append((step - 1) * dt, from_fourier(v, grid, real=True))
            return traj
        v = v_next
        if step % snapshot_stride == 0 or step == steps:
            u = from_fourier(v, grid, real=True)
            traj.append(t, u)
            logger.debug("SH eps=%.4g t=%.6g sup=%.4e asym=%.1e", problem.eps, t, traj.sup_norms[-1],
                         conjugate_asymmetry(v))
    return traj
