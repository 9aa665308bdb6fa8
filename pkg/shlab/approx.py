"""
Approximations psi and phi built from an amplitude trajectory, the residual Res(phi)
with its prefactor decomposition, the split forcings and the error components.

Conventions on the fast grid (x-scale):

  B = E_0 A(eps .),  C = E_0 A2(eps .),  D = E_0 A0(eps .)
  psi   = eps (A e^{ix} + conj)
  phi_c = B e^{ix} + conj,  phi_s = C e^{2ix} + conj + D,  phi = eps phi_c + eps^2 phi_s
  Conv(Q, n, f) = (Q e^{i n .}) * f, i.e. the multiplier q(kappa - n)
  d_X = eps^{-1} d_x on fast-grid fields
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from shlab.errors import GridError, TrajectoryError
from shlab.glsolver import GLTrajectory, corrector_time_derivatives, correctors, gl_rhs
from shlab.kernel import KernelMeasure, fourier_symbol
from shlab.shsolver import SHTrajectory, nonlinearity
from shlab.spectral import (
    PeriodicGrid,
    SpectralField,
    TorusGrid,
    apply_filter,
    c_norm,
    dealiased_multiply,
    derivative,
    kernel_convolve,
    lift_to_fast,
    linear_symbol,
    make_cutoff,
    modulated_kernel_convolve,
    multiply_symbol,
)

logger = logging.getLogger(__name__)


# ======== Helpers ========

def _check_eps(slow: PeriodicGrid, fast: PeriodicGrid, eps: float) -> None:
    """eps * 2 pi M must equal the slow length 2 pi P."""
    if abs(eps * fast.M - slow.M) > 1e-9 * slow.M:
        raise GridError(f"eps={eps} inconsistent with slow M={slow.M} and fast M={fast.M}")


def _carrier(grid: PeriodicGrid, ell: int) -> np.ndarray:
    return np.exp(1j * ell * grid.x)


def _with_carrier(amplitude: SpectralField, ell: int) -> SpectralField:
    """amplitude e^{i ell x} + conj, a real field."""
    s = amplitude.samples * _carrier(amplitude.grid, ell)
    return SpectralField(amplitude.grid, 2.0 * s.real, real=True)


def _conv(kernel: KernelMeasure, n: int, f: SpectralField) -> SpectralField:
    return modulated_kernel_convolve(f, kernel, n)


def _e0_lift(slow: SpectralField, grid: PeriodicGrid) -> SpectralField:
    return apply_filter(lift_to_fast(slow, grid), make_cutoff("chi_0", grid))


def linear_operator(field_: SpectralField, eps: float) -> SpectralField:
    """L v = -(1 + d_x^2)^2 v + eps^2 v"""
    return multiply_symbol(field_, linear_symbol(field_.grid.kappa, eps))


# ======== psi / phi ========

def build_psi(A: SpectralField, eps: float, grid: PeriodicGrid) -> SpectralField:
    _check_eps(A.grid, grid, eps)
    return eps * _with_carrier(lift_to_fast(A, grid), 1)


def build_phi(A: SpectralField, A0: SpectralField, A2: SpectralField, eps: float,
              grid: PeriodicGrid) -> Tuple[SpectralField, SpectralField, SpectralField]:
    """(phi, phi_c, phi_s) with E_0 applied to the lifted amplitudes."""
    _check_eps(A.grid, grid, eps)
    B = _e0_lift(A, grid)
    C = _e0_lift(A2, grid)
    D = _e0_lift(A0, grid).real_part()
    phi_c = _with_carrier(B, 1)
    phi_s = _with_carrier(C, 2) + D
    return eps * phi_c + eps ** 2 * phi_s, phi_c, phi_s


@dataclass
class AnsatzSnapshot:
    t: float
    A: SpectralField                 # slow grid
    B: SpectralField                 # E_0 A on the fast grid
    C: SpectralField                 # E_0 A2
    D: SpectralField                 # E_0 A0
    dB: SpectralField                # E_0 d_T A
    dC: SpectralField                # E_0 d_T A2
    dD: SpectralField                # E_0 d_T A0
    psi: SpectralField
    phi: SpectralField
    phi_c: SpectralField
    phi_s: SpectralField


@dataclass
class Ansatz:
    """phi(t) = eps phi_c + eps^2 phi_s from an amplitude trajectory in T = eps^2 t."""

    eps: float
    grid: PeriodicGrid
    amplitude: GLTrajectory
    Q: KernelMeasure
    K: KernelMeasure
    q1: float = field(init=False)

    def __post_init__(self):
        if not self.amplitude.fields:
            raise TrajectoryError("empty amplitude trajectory")
        _check_eps(self.amplitude.fields[0].grid, self.grid, self.eps)
        self.q1 = float(fourier_symbol(self.Q, 1.0))

    @property
    def gamma(self) -> float:
        return self.amplitude.gamma

    def slow_time(self, t: float) -> float:
        return self.eps ** 2 * t

    def snapshot(self, t: float) -> AnsatzSnapshot:
        A = self.amplitude.at(self.slow_time(t))
        pair = correctors(A, self.q1)
        dA = gl_rhs(A, self.gamma)
        dA0, dA2 = corrector_time_derivatives(A, dA, self.q1)

        grid = self.grid
        B, C = _e0_lift(A, grid), _e0_lift(pair.A2, grid)
        D = _e0_lift(pair.A0, grid).real_part()
        dB, dC = _e0_lift(dA, grid), _e0_lift(dA2, grid)
        dD = _e0_lift(dA0, grid).real_part()

        phi_c = _with_carrier(B, 1)
        phi_s = _with_carrier(C, 2) + D
        phi = self.eps * phi_c + self.eps ** 2 * phi_s
        psi = build_psi(A, self.eps, grid)
        return AnsatzSnapshot(t, A, B, C, D, dB, dC, dD, psi, phi, phi_c, phi_s)

    def time_derivative(self, snap: AnsatzSnapshot) -> SpectralField:
        """d_t phi by the chain rule: eps^3 (dB e^{ix} + c.c.) + eps^4 (dC e^{2ix} + c.c. + dD)."""
        eps = self.eps
        return eps ** 3 * _with_carrier(snap.dB, 1) + eps ** 4 * (_with_carrier(snap.dC, 2) + snap.dD)


# ======== Residual ========

def _prefactors(snap: AnsatzSnapshot, eps: float, Q: KernelMeasure, K: KernelMeasure,
                conjugate: bool) -> Dict[int, SpectralField]:
    """a_0..a_3 (conjugate=False) or a_0, a_-1..a_-3 (conjugate=True).

    The conjugate role swaps A and conj(A), n and -n, i and -i.
    """
    s = -1 if conjugate else 1
    B, C, D, dB = snap.B, snap.C, snap.D, snap.dB
    if conjugate:
        B, C, dB = B.conj(), C.conj(), dB.conj()
    Bb = B.conj()
    BB = B * B

    def dx(f: SpectralField, k: int) -> SpectralField:
        return derivative(f, k) * (1.0 / eps ** k)

    a0 = -eps ** 2 * (D + B * _conv(Q, s, Bb) + Bb * _conv(Q, -s, B))
    a1 = eps ** 3 * (
        -dB + 4.0 * dx(B, 2) + B
        - Bb * _conv(Q, -2 * s, C)
        - C * _conv(Q, s, Bb)
        - B * _conv(Q, 0, D)
        - D * _conv(Q, -s, B)
        - 2.0 * B * _conv(K, 0, B * Bb)
        - Bb * _conv(K, -2 * s, BB)
    )
    a2 = -9.0 * eps ** 2 * C + (24j * s) * eps ** 3 * dx(C, 1) - eps ** 2 * B * _conv(Q, -s, B)
    a3 = -eps ** 3 * (B * _conv(Q, -2 * s, C) + C * _conv(Q, -s, B) + B * _conv(K, -2 * s, BB))
    return {0: a0, s * 1: a1, s * 2: a2, s * 3: a3}


@dataclass
class ResidualReport:
    t: float
    eps: float
    res: SpectralField
    ec_res: SpectralField
    es_res: SpectralField
    prefactors: Dict[int, SpectralField]
    remainder: SpectralField
    norms: Dict[str, float] = field(default_factory=dict)

    def reconstruction(self) -> SpectralField:
        total = SpectralField.zeros(self.res.grid)
        for ell, a in self.prefactors.items():
            total = total + SpectralField(a.grid, a.samples * _carrier(a.grid, ell))
        return total.real_part()

    def pairing_defect(self) -> float:
        """max over l of |a_{-l} - conj(a_l)| relative to |a_l|."""
        worst = 0.0
        for ell in (1, 2, 3):
            a, b = self.prefactors[ell], self.prefactors[-ell]
            scale = max(a.sup(), 1e-300)
            worst = max(worst, (b - a.conj()).sup() / scale)
        a0 = self.prefactors[0]
        if a0.sup() > 0:
            worst = max(worst, float(np.max(np.abs(a0.samples.imag))) / a0.sup())
        return worst


def residual(ansatz: Ansatz, t: float) -> ResidualReport:
    """Res(phi) = -d_t phi + L phi + N(phi), filtered parts and prefactors."""
    eps = ansatz.eps
    snap = ansatz.snapshot(t)
    grid = ansatz.grid
    phi = snap.phi

    res = -ansatz.time_derivative(snap) + linear_operator(phi, eps) + nonlinearity(phi, ansatz.Q, ansatz.K)
    ec_res = apply_filter(res, make_cutoff("chi_c", grid))
    es_res = apply_filter(res, make_cutoff("chi_s", grid))

    prefactors = _prefactors(snap, eps, ansatz.Q, ansatz.K, conjugate=False)
    prefactors.update({k: v for k, v in _prefactors(snap, eps, ansatz.Q, ansatz.K, conjugate=True).items() if k < 0})
    report = ResidualReport(t, eps, res, ec_res, es_res, prefactors, SpectralField.zeros(grid))
    report.remainder = res - report.reconstruction()

    a = prefactors
    report.norms = {
        "res_c1": c_norm(res, 1),
        "ec_res_c1": c_norm(ec_res, 1),
        "es_res_c1": c_norm(es_res, 1),
        "a0_c1": c_norm(a[0], 1),
        "a1_c1": c_norm(a[1], 1),
        "a2_c1": c_norm(a[2], 1),
        "a3_c1": c_norm(a[3], 1),
        "remainder_c1": c_norm(report.remainder, 1),
        "delta_c_c1": c_norm(ec_res, 1) / eps ** 4,
        "delta_s_c1": c_norm(es_res, 1) / eps ** 3,
        "phi_s_c4": c_norm(snap.phi_s, 4),
        "phi_minus_psi_c4": c_norm(snap.phi - snap.psi, 4),
    }
    report.norms["a023_c1"] = report.norms["a0_c1"] + report.norms["a2_c1"] + report.norms["a3_c1"]
    logger.debug("residual eps=%.4g t=%.6g: %s", eps, t, report.norms)
    return report


def split_forcings(report: ResidualReport, eps: float) -> Tuple[SpectralField, SpectralField]:
    """(delta_c, delta_s) = (eps^-4 E_c Res, eps^-3 E_s Res)"""
    return report.ec_res * (1.0 / eps ** 4), report.es_res * (1.0 / eps ** 3)


# ======== Error components ========

@dataclass
class ErrorComponents:
    R: SpectralField
    R_c: SpectralField
    R_s: SpectralField
    norms: Dict[str, float]


def error_components(u: SpectralField, phi: SpectralField, eps: float) -> ErrorComponents:
    """R = u - phi, R_c = E_c R / eps^2, R_s = E_s R / eps^3."""
    if u.grid != phi.grid:
        raise GridError(f"grid mismatch: {u.grid} vs {phi.grid}")
    R = u - phi
    R_c = apply_filter(R, make_cutoff("chi_c", R.grid)) * (1.0 / eps ** 2)
    R_s = apply_filter(R, make_cutoff("chi_s", R.grid)) * (1.0 / eps ** 3)
    norms: Dict[str, float] = {}
    for m in range(5):
        norms[f"R_norm{m}"] = c_norm(R, m)
        norms[f"Rc_norm{m}"] = c_norm(R_c, m)
        norms[f"Rs_norm{m}"] = c_norm(R_s, m)
    norms["D"] = norms["Rc_norm4"] + eps * norms["Rs_norm4"]
    return ErrorComponents(R, R_c, R_s, norms)


# ======== Error-equation operators ========

def _mul(a: SpectralField, b: SpectralField) -> SpectralField:
    return dealiased_multiply(a, b)


def _qk(kernel: KernelMeasure, f: SpectralField) -> SpectralField:
    return kernel_convolve(f, kernel)


def op_L2(R_c: SpectralField, phi_c: SpectralField, Q: KernelMeasure) -> SpectralField:
    """R_c Q*phi_c + phi_c Q*R_c"""
    return _mul(R_c, _qk(Q, phi_c)) + _mul(phi_c, _qk(Q, R_c))


def op_N2(R_c: SpectralField, Q: KernelMeasure) -> SpectralField:
    return _mul(R_c, _qk(Q, R_c))


def op_L1(R_c: SpectralField, R_s: SpectralField, phi_c: SpectralField, phi_s: SpectralField,
          Q: KernelMeasure, K: KernelMeasure) -> SpectralField:
    return (_mul(R_c, _qk(Q, phi_s)) + _mul(R_s, _qk(Q, phi_c)) + _mul(phi_s, _qk(Q, R_c))
            + _mul(phi_c, _qk(Q, R_s)) + _mul(R_c, _qk(K, _mul(phi_c, phi_c)))
            + 2.0 * _mul(phi_c, _qk(K, _mul(R_c, phi_c))))


def op_N1(R_c: SpectralField, R_s: SpectralField, phi_c: SpectralField, phi_s: SpectralField,
          Q: KernelMeasure, K: KernelMeasure, eps: float) -> SpectralField:
    """Order eps^5 part of N(phi + R) - N(phi), with W = R_c + eps R_s, Phi = phi_c + eps phi_s."""
    W = R_c + eps * R_s
    Phi = phi_c + eps * phi_s
    WPhi = _mul(W, Phi)
    quad = (_mul(R_s, _qk(Q, phi_s)) + _mul(phi_s, _qk(Q, R_s))
            + _mul(R_c, _qk(Q, R_s)) + _mul(R_s, _qk(Q, W)))
    cubic = (eps * _mul(W, _qk(K, _mul(W, W)))
             + 2.0 * _mul(W, _qk(K, WPhi))
             + _mul(Phi, _qk(K, _mul(W, W)))
             + _mul(R_c, _qk(K, 2.0 * _mul(phi_c, phi_s) + eps * _mul(phi_s, phi_s)))
             + _mul(R_s, _qk(K, _mul(Phi, Phi)))
             + 2.0 * _mul(phi_c, _qk(K, _mul(R_c, phi_s) + _mul(R_s, phi_c) + eps * _mul(R_s, phi_s)))
             + 2.0 * _mul(phi_s, _qk(K, WPhi)))
    return -(quad + cubic)


def nonlinear_increment(R_c: SpectralField, R_s: SpectralField, phi_c: SpectralField, phi_s: SpectralField,
                        Q: KernelMeasure, K: KernelMeasure, eps: float) -> SpectralField:
    """-eps^3 L2 - eps^4 N2 - eps^4 L1 + eps^5 N1, which equals N(phi + R) - N(phi)."""
    return (-eps ** 3 * op_L2(R_c, phi_c, Q) - eps ** 4 * op_N2(R_c, Q)
            - eps ** 4 * op_L1(R_c, R_s, phi_c, phi_s, Q, K)
            + eps ** 5 * op_N1(R_c, R_s, phi_c, phi_s, Q, K, eps))


def error_equation_rhs(R_c: SpectralField, R_s: SpectralField, snap: AnsatzSnapshot, report: ResidualReport,
                       Q: KernelMeasure, K: KernelMeasure, eps: float) -> Tuple[SpectralField, SpectralField]:
    """Right sides of

        d_t R_c = L R_c - eps^2 E_c L1 + eps^3 E_c N1 + eps^2 delta_c
        d_t R_s = L R_s - E_s L2 - eps E_s (L1 + N2 - eps N1) + delta_s
    """
    grid = R_c.grid
    ec, es = make_cutoff("chi_c", grid), make_cutoff("chi_s", grid)
    L1 = op_L1(R_c, R_s, snap.phi_c, snap.phi_s, Q, K)
    N1 = op_N1(R_c, R_s, snap.phi_c, snap.phi_s, Q, K, eps)
    L2 = op_L2(R_c, snap.phi_c, Q)
    N2 = op_N2(R_c, Q)
    delta_c, delta_s = split_forcings(report, eps)

    rhs_c = (linear_operator(R_c, eps) - eps ** 2 * apply_filter(L1, ec)
             + eps ** 3 * apply_filter(N1, ec) + eps ** 2 * delta_c)
    rhs_s = (linear_operator(R_s, eps) - apply_filter(L2, es)
             - eps * apply_filter(L1 + N2 - eps * N1, es) + delta_s)
    return rhs_c, rhs_s


def error_equation_check(u_traj: SHTrajectory, ansatz: Ansatz, t: float, eps: Optional[float] = None) -> float:
    """Max C^0 defect between centered differences of R_c, R_s and the assembled right sides."""
    eps = ansatz.eps if eps is None else eps
    i = u_traj.index_of(t)
    if i == 0 or i + 1 >= len(u_traj.times):
        raise TrajectoryError(f"need snapshots on both sides of t={t:.6g}")
    h_minus = u_traj.times[i] - u_traj.times[i - 1]
    h_plus = u_traj.times[i + 1] - u_traj.times[i]
    if abs(h_minus - h_plus) > 1e-9 * max(h_plus, 1.0):
        raise TrajectoryError(f"snapshots around t={t:.6g} are not equally spaced")
    h = h_plus

    comps = []
    for j in (i - 1, i + 1):
        snap_j = ansatz.snapshot(u_traj.times[j])
        comps.append(error_components(u_traj.fields[j], snap_j.phi, eps))
    snap = ansatz.snapshot(u_traj.times[i])
    here = error_components(u_traj.fields[i], snap.phi, eps)
    report = residual(ansatz, u_traj.times[i])

    dRc = (comps[1].R_c - comps[0].R_c) * (1.0 / (2 * h))
    dRs = (comps[1].R_s - comps[0].R_s) * (1.0 / (2 * h))
    rhs_c, rhs_s = error_equation_rhs(here.R_c, here.R_s, snap, report, ansatz.Q, ansatz.K, eps)
    defect = max((dRc - rhs_c).sup(), (dRs - rhs_s).sup())
    logger.debug("error equation t=%.6g h=%.3g defect=%.3e", t, h, defect)
    return float(defect)


def critical_cancellation(R_c: SpectralField, phi_c: SpectralField, Q: KernelMeasure) -> Tuple[float, float]:
    """Relative sup of E_c L2(R_c) and E_c N2(R_c); both vanish for critical R_c and phi_c."""
    ec = make_cutoff("chi_c", R_c.grid)
    L2, N2 = op_L2(R_c, phi_c, Q), op_N2(R_c, Q)
    def rel(f: SpectralField) -> float:
        return apply_filter(f, ec).sup() / f.sup() if f.sup() > 0 else 0.0

    return rel(L2), rel(N2)


def linear_operator_bounds(R_c: SpectralField, R_s: SpectralField, phi_c: SpectralField, phi_s: SpectralField,
                           Q: KernelMeasure, K: KernelMeasure) -> Dict[str, float]:
    """Measured constants in ||L_c||_{C1} <= C (||R_c||_{C1} + ||R_s||_{C1}) and ||L_s||_{C1} <= C ||R_c||_{C1}."""
    grid = R_c.grid
    Lc = apply_filter(op_L1(R_c, R_s, phi_c, phi_s, Q, K), make_cutoff("chi_c", grid))
    Ls = apply_filter(op_L2(R_c, phi_c, Q), make_cutoff("chi_s", grid))
    denom_c = c_norm(R_c, 1) + c_norm(R_s, 1)
    denom_s = c_norm(R_c, 1)
    return {
        "L_c": c_norm(Lc, 1) / denom_c if denom_c > 0 else 0.0,
        "L_s": c_norm(Ls, 1) / denom_s if denom_s > 0 else 0.0,
    }


# ======== Convolution approximation ========

def convolution_approx_gap(B1: SpectralField, B2: SpectralField, B3: SpectralField,
                           kernel: KernelMeasure, n: int, eps: float,
                           fast_grid: Optional[PeriodicGrid] = None) -> Tuple[float, float]:
    """C^1 gaps of B1 (Q e^{in.})*B2 - q_n B1 B2 and B1 (Q e^{in.})*(B2 B3) - q_n B1 B2 B3, all at eps x."""
    P = B1.grid.M
    M = int(round(P / eps))
    if abs(M * eps - P) > 1e-9 * P:
        raise GridError(f"eps={eps} does not give an integer fast domain for P={P}")
    grid = fast_grid or TorusGrid.for_M(M)
    if grid.N < B1.grid.N:
        grid = grid.with_points(B1.grid.N)
    b1, b2, b3 = (lift_to_fast(B, grid) for B in (B1, B2, B3))
    qn = float(fourier_symbol(kernel, float(n)))
    quad = b1 * _conv(kernel, n, b2) - qn * (b1 * b2)
    b23 = b2 * b3
    cubic = b1 * _conv(kernel, n, b23) - qn * (b1 * b23)
    return c_norm(quad, 1), c_norm(cubic, 1)

