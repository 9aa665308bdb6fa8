"""
Periodic grids, Fourier transforms, multipliers and mode filters.

Coefficients are normalized (fft / N), so the field e^{i kappa x} has the single
coefficient 1 at wavenumber kappa. The fast domain has length 2*pi*M, hence the
wavenumbers kappa_j = j / M put the critical modes +-1, +-2, +-3 exactly on the grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from shlab.errors import GridError
from shlab.kernel import KernelMeasure, fourier_symbol

logger = logging.getLogger(__name__)

Scalar = Union[int, float, complex]

CUTOFF_NAMES = ("chi_c", "chi_0", "chi_s", "chi_0c", "chi_c_h", "chi_s_h")
MAX_DERIVATIVE_ORDER = 8
MAX_NORM_ORDER = 4
# relative spectral energy treated as zero by every cancellation check
SPECTRAL_FLOOR = 1e-12


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


# ======== Grids ========

@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on [0, 2*pi*M) with N points; no resolution requirement."""

    M: int
    N: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M <= 0:
            raise GridError(f"M must be a positive integer, got {self.M}")
        if not _is_power_of_two(int(self.N)):
            raise GridError(f"N must be a power of two, got {self.N}")

    @property
    def length(self) -> float:
        return 2.0 * math.pi * self.M

    @property
    def spacing(self) -> float:
        """Wavenumber spacing 1/M."""
        return 1.0 / self.M

    @property
    def kappa_max(self) -> float:
        return self.N / (2.0 * self.M)

    @cached_property
    def x(self) -> np.ndarray:
        return self.length * np.arange(self.N) / self.N

    @cached_property
    def index(self) -> np.ndarray:
        """Integer mode numbers j in FFT order (-N/2 sits at position N/2)."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(int)

    @cached_property
    def kappa(self) -> np.ndarray:
        return self.index / self.M

    @property
    def nyquist(self) -> int:
        return self.N // 2

    def mode_position(self, j: int) -> int:
        """Array position of integer mode j."""
        if not (-self.N // 2 <= j < self.N // 2):
            raise GridError(f"mode {j} not resolved on N={self.N}")
        return j % self.N

    def with_points(self, N: int) -> "PeriodicGrid":
        return type(self)(self.M, N)


@dataclass(frozen=True)
class TorusGrid(PeriodicGrid):
    """Fast grid: resolves |kappa| up to at least 4 (residual harmonics plus headroom)."""

    def __post_init__(self):
        super().__post_init__()
        if self.N < 8 * self.M:
            raise GridError(f"N/(2M) = {self.N / (2 * self.M):.3g} < 4 (M={self.M}, N={self.N})")

    @classmethod
    def for_M(cls, M: int, points_per_period: int = 8, N_override: Optional[int] = None) -> "TorusGrid":
        """Smallest power of two with N/(2M) >= points_per_period, unless N is given."""
        if N_override is not None:
            return cls(M, int(N_override))
        target = 2 * M * max(int(points_per_period), 4)
        N = 1 << int(math.ceil(math.log2(target)))
        return cls(M, N)


# ======== Fields ========

@dataclass(frozen=True, eq=False)
class SpectralField:
    """Grid samples; `real` fields keep a zero imaginary part."""

    grid: PeriodicGrid
    samples: np.ndarray
    real: bool = False

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 1 or arr.shape[0] != self.grid.N:
            raise GridError(f"expected {self.grid.N} samples, got shape {arr.shape}")
        arr = arr.real.astype(complex) if self.real else arr.astype(complex)
        object.__setattr__(self, "samples", arr)

    # --- constructors ---
    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.N), real=True)

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: Scalar) -> "SpectralField":
        value = complex(value)
        return cls(grid, np.full(grid.N, value), real=value.imag == 0.0)

    @classmethod
    def mode(cls, grid: PeriodicGrid, kappa: float, amplitude: Scalar = 1.0) -> "SpectralField":
        """amplitude * e^{i kappa x}"""
        return cls(grid, complex(amplitude) * np.exp(1j * kappa * grid.x))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func: Callable[[np.ndarray], np.ndarray],
                      real: bool = True) -> "SpectralField":
        return cls(grid, np.asarray(func(grid.x)), real=real)

    # --- views ---
    @cached_property
    def coeffs(self) -> np.ndarray:
        return np.fft.fft(self.samples) / self.grid.N

    @property
    def values(self) -> np.ndarray:
        return self.samples.real if self.real else self.samples

    def sup(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.grid.N else 0.0

    def conj(self) -> "SpectralField":
        return SpectralField(self.grid, np.conj(self.samples), self.real)

    def real_part(self) -> "SpectralField":
        return SpectralField(self.grid, self.samples.real, real=True)

    def abs2(self) -> "SpectralField":
        return SpectralField(self.grid, np.abs(self.samples) ** 2, real=True)

    # --- arithmetic (pointwise) ---
    def _combine(self, other, op) -> "SpectralField":
        if isinstance(other, SpectralField):
            require_same_grid(self, other)
            return SpectralField(self.grid, op(self.samples, other.samples), self.real and other.real)
        value = complex(other)
        return SpectralField(self.grid, op(self.samples, value), self.real and value.imag == 0.0)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __radd__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    def __rmul__(self, other):
        return self._combine(other, np.multiply)

    def __truediv__(self, other):
        if isinstance(other, SpectralField):
            raise TypeError("division by a field is not supported")
        return self._combine(other, np.divide)

    def __neg__(self):
        return SpectralField(self.grid, -self.samples, self.real)


def require_same_grid(a: SpectralField, b: Union[SpectralField, "CutoffProfile"]) -> None:
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


# ======== Transforms ========

def to_fourier(field: SpectralField) -> np.ndarray:
    if not _is_power_of_two(field.samples.shape[0]):
        raise GridError(f"transform length {field.samples.shape[0]} is not a power of two")
    return field.coeffs.copy()


def from_fourier(coeffs: np.ndarray, grid: PeriodicGrid, real: bool = False) -> SpectralField:
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (grid.N,):
        raise GridError(f"expected {grid.N} coefficients, got shape {coeffs.shape}")
    return SpectralField(grid, np.fft.ifft(coeffs) * grid.N, real=real)


def conjugate_asymmetry(coeffs: np.ndarray) -> float:
    """max |c_j - conj(c_{-j})| relative to max |c|; zero for real fields."""
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale == 0.0:
        return 0.0
    mirrored = np.roll(coeffs[::-1], 1)
    return float(np.max(np.abs(coeffs - np.conj(mirrored)))) / scale


def multiply_symbol(field: SpectralField, symbol: np.ndarray, real: Optional[bool] = None) -> SpectralField:
    real = field.real if real is None else real
    return from_fourier(field.coeffs * symbol, field.grid, real=real)


def derivative(field: SpectralField, order: int) -> SpectralField:
    if not (0 <= int(order) <= MAX_DERIVATIVE_ORDER) or int(order) != order:
        raise GridError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}, got {order}")
    if order == 0:
        return field
    symbol = (1j * field.grid.kappa) ** order
    if order % 2 == 1:
        symbol = symbol.copy()
        symbol[field.grid.nyquist] = 0.0
    return multiply_symbol(field, symbol)


def kernel_convolve(field: SpectralField, kernel: KernelMeasure) -> SpectralField:
    return modulated_kernel_convolve(field, kernel, 0)


def modulated_kernel_convolve(field: SpectralField, kernel: KernelMeasure, n: int) -> SpectralField:
    """(Q e^{i n .}) * u, i.e. the multiplier q(kappa - n)."""
    if kernel.is_zero():
        return SpectralField.zeros(field.grid) if field.real else SpectralField(field.grid, np.zeros(field.grid.N))
    symbol = np.asarray(fourier_symbol(kernel, field.grid.kappa - n))
    return multiply_symbol(field, symbol, real=field.real and n == 0)


# ======== Cutoff profiles ========

def smooth_step(t: np.ndarray) -> np.ndarray:
    """s(t) = f(t) / (f(t) + f(1-t)), f(t) = exp(-1/t) for t > 0 and 0 otherwise."""
    t = np.asarray(t, dtype=float)

    def f(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a = f(t)
    b = f(1.0 - t)
    return a / (a + b)


def bump(distance: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """1 for distance <= inner, 0 for distance >= outer, smooth monotone in between."""
    d = np.asarray(distance, dtype=float)
    return smooth_step((outer - d) / (outer - inner))


def _twin_bump(kappa: np.ndarray, inner: float, outer: float) -> np.ndarray:
    return bump(np.abs(kappa - 1.0), inner, outer) + bump(np.abs(kappa + 1.0), inner, outer)


def cutoff_values(name: str, kappa: np.ndarray) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    if name == "chi_c":
        return _twin_bump(kappa, 1 / 8, 1 / 4)
    if name == "chi_0":
        return bump(np.abs(kappa), 1 / 8, 1 / 4)
    if name == "chi_s":
        return 1.0 - _twin_bump(kappa, 1 / 8, 1 / 4)
    if name == "chi_0c":
        return bump(np.abs(kappa), 1 / 8, 1 / 4) - 1.0
    if name == "chi_c_h":
        return _twin_bump(kappa, 1 / 4, 3 / 8)
    if name == "chi_s_h":
        return 1.0 - _twin_bump(kappa, 1 / 16, 1 / 8)
    raise GridError(f"unknown cutoff '{name}', expected one of {CUTOFF_NAMES}")


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    name: str
    grid: PeriodicGrid
    values: np.ndarray


def make_cutoff(name: str, grid: PeriodicGrid) -> CutoffProfile:
    return CutoffProfile(name, grid, cutoff_values(name, grid.kappa))


def apply_filter(field: SpectralField, profile: CutoffProfile) -> SpectralField:
    require_same_grid(field, profile)
    return multiply_symbol(field, profile.values)


def linear_symbol(kappa, eps: float):
    """lambda(kappa) = -(1 - kappa^2)^2 + eps^2"""
    kappa_arr = np.asarray(kappa, dtype=float)
    value = -(1.0 - kappa_arr ** 2) ** 2 + eps ** 2
    return float(value) if np.ndim(kappa) == 0 else value


def apply_semigroup(field: SpectralField, t: float, eps: float, heat_profile: CutoffProfile) -> SpectralField:
    """e^{L t} applied after the profile multiplier."""
    if t < 0:
        raise GridError(f"semigroup time must be >= 0, got {t}")
    require_same_grid(field, heat_profile)
    symbol = np.exp(linear_symbol(field.grid.kappa, eps) * t) * heat_profile.values
    return multiply_symbol(field, symbol)


def semigroup_decay_rate(grid: PeriodicGrid, eps: float) -> float:
    """sigma_grid = min over {chi_s_h > 0} of (1 - kappa^2)^2 - eps^2."""
    chi = cutoff_values("chi_s_h", grid.kappa)
    damping = -linear_symbol(grid.kappa, eps)
    return float(np.min(damping[chi > 0]))


# ======== Norms ========

def c_norm(field: SpectralField, m: int) -> float:
    """max over orders 0..m of the grid sup-norm of the derivative."""
    if not (0 <= int(m) <= MAX_NORM_ORDER) or int(m) != m:
        raise GridError(f"norm order must be in 0..{MAX_NORM_ORDER}, got {m}")
    best = field.sup()
    for j in range(1, m + 1):
        best = max(best, derivative(field, j).sup())
    return float(best)


def relative_energy(coeffs: np.ndarray, mask: np.ndarray) -> float:
    """Share of spectral energy on the masked modes (0 for the zero field)."""
    energy = np.abs(np.asarray(coeffs)) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    return float(np.sum(energy[np.asarray(mask, dtype=bool)])) / total


def smoothing_constant(field: SpectralField, m: int) -> float:
    """(||E_0 u||_{C^m} + ||E_c u||_{C^m}) / ||u||_{C^0}"""
    base = field.sup()
    if base == 0.0:
        return 0.0
    e0 = apply_filter(field, make_cutoff("chi_0", field.grid))
    ec = apply_filter(field, make_cutoff("chi_c", field.grid))
    return (c_norm(e0, m) + c_norm(ec, m)) / base


# ======== Dealiasing and grid transfer ========

def _pad(coeffs: np.ndarray, size: int) -> np.ndarray:
    """Embed normalized coefficients (FFT order, Nyquist dropped) into a longer spectrum."""
    n = coeffs.shape[0]
    half = n // 2
    out = np.zeros(size, dtype=complex)
    out[:half] = coeffs[:half]
    out[size - half + 1:] = coeffs[half + 1:]
    return out


def _truncate(coeffs: np.ndarray, size: int) -> np.ndarray:
    half = size // 2
    out = np.zeros(size, dtype=complex)
    out[:half] = coeffs[:half]
    out[half + 1:] = coeffs[coeffs.shape[0] - half + 1:]
    return out


def dealiased_product(a_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """Coefficients of the product, formed on a grid padded by factor 2 and truncated back."""
    n = a_hat.shape[0]
    if b_hat.shape[0] != n:
        raise GridError(f"coefficient length mismatch: {n} vs {b_hat.shape[0]}")
    size = 2 * n
    a = np.fft.ifft(_pad(a_hat, size)) * size
    b = np.fft.ifft(_pad(b_hat, size)) * size
    return _truncate(np.fft.fft(a * b) / size, n)


def dealiased_multiply(a: SpectralField, b: SpectralField) -> SpectralField:
    require_same_grid(a, b)
    return from_fourier(dealiased_product(a.coeffs, b.coeffs), a.grid, real=a.real and b.real)


def lift_to_fast(slow: SpectralField, fast_grid: PeriodicGrid) -> SpectralField:
    """B(eps x) on the fast grid for B on the slow grid, eps = slow.M / fast.M.

    Slow mode j has wavenumber eps*j/P = j/M, so it lands on fast mode j unchanged.
    """
    if slow.grid.N > fast_grid.N:
        raise GridError(f"slow grid N={slow.grid.N} exceeds fast grid N={fast_grid.N}")
    return from_fourier(_pad(slow.coeffs, fast_grid.N), fast_grid, real=slow.real)


def refine(field: SpectralField, factor: int) -> SpectralField:
    """Trigonometric interpolation onto factor * N points of the same domain."""
    if factor < 1 or not _is_power_of_two(int(factor)):
        raise GridError(f"refinement factor must be a power of two, got {factor}")
    if factor == 1:
        return field
    fine = field.grid.with_points(field.grid.N * factor)
    return from_fourier(_pad(field.coeffs, fine.N), fine, real=field.real)


# ======== Random test fields ========

def random_field(grid: PeriodicGrid, rng: np.random.Generator, mask: Optional[np.ndarray] = None,
                 real: bool = True, decay: float = 0.0) -> SpectralField:
    """Random coefficients on the masked modes with |c_j| ~ (1 + |j|)^-decay."""
    mask = np.ones(grid.N, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
    mask[grid.nyquist] = False
    c = (rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)) * mask
    if decay:
        c = c * (1.0 + np.abs(grid.index)) ** (-decay)
    if real:
        c = 0.5 * (c + np.conj(np.roll(c[::-1], 1)))
    return from_fourier(c, grid, real=real)
