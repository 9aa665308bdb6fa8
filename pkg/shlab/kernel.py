"""
Finite symmetric measures Q and K of the nonlocal Swift–Hohenberg equation.

A kernel is a finite list of Dirac atoms plus an optional even density from a
named family with a closed-form Fourier transform:

  gaussian(mass, width)     mass * N(0, width^2) density,    symbol mass*exp(-(width*k)^2/2)
  laplace(mass, rate)       mass * (rate/2) exp(-rate|x|),   symbol mass*rate^2/(rate^2+k^2)
  uniform(mass, half_width) mass / (2h) on [-h, h],          symbol mass*sin(kh)/(kh)

Fourier convention: q(k) = int e^{ikx} Q(dx). For symmetric kernels the value is
real and even in k, so the sign of the exponent never matters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from shlab.errors import KernelError

ArrayLike = Union[float, np.ndarray]

# position / weight tolerance for the symmetry check of user-supplied atom lists
SYMMETRY_TOL = 1e-12

FAMILIES = {
    "gaussian": "width",
    "laplace": "rate",
    "uniform": "half_width",
}


# ======== Smooth even densities ========

@dataclass(frozen=True)
class SmoothDensity:
    family: str     # gaussian | laplace | uniform
    mass: float     # total (signed) mass of the density
    scale: float    # width / rate / half_width, depending on the family

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(f"unknown smooth family '{self.family}', expected one of {sorted(FAMILIES)}")
        if not (math.isfinite(self.mass) and math.isfinite(self.scale)):
            raise KernelError(f"{self.family}: non-finite parameters mass={self.mass}, scale={self.scale}")
        if self.scale <= 0:
            raise KernelError(f"{self.family}: {FAMILIES[self.family]} must be positive, got {self.scale}")

    def symbol(self, k: ArrayLike) -> ArrayLike:
        k = np.asarray(k, dtype=float)
        if self.family == "gaussian":
            return self.mass * np.exp(-0.5 * (self.scale * k) ** 2)
        if self.family == "laplace":
            return self.mass * self.scale ** 2 / (self.scale ** 2 + k ** 2)
        # np.sinc(t) = sin(pi t)/(pi t)
        return self.mass * np.sinc(k * self.scale / np.pi)

    def density(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        if self.family == "gaussian":
            w = self.scale
            return self.mass * np.exp(-0.5 * (x / w) ** 2) / (w * math.sqrt(2.0 * math.pi))
        if self.family == "laplace":
            r = self.scale
            return self.mass * 0.5 * r * np.exp(-r * np.abs(x))
        h = self.scale
        return np.where(np.abs(x) <= h, self.mass / (2.0 * h), 0.0)

    def support_bound(self) -> float:
        """Half-line cut beyond which the density is below double precision."""
        if self.family == "gaussian":
            return 40.0 * self.scale
        if self.family == "laplace":
            return 60.0 / self.scale
        return self.scale

    def first_moment(self) -> float:
        m = abs(self.mass)
        if self.family == "gaussian":
            return m * self.scale * math.sqrt(2.0 / math.pi)
        if self.family == "laplace":
            return m / self.scale
        return m * self.scale / 2.0

    def to_config(self) -> dict:
        return {"family": self.family, "mass": self.mass, FAMILIES[self.family]: self.scale}

    @classmethod
    def from_config(cls, data: dict) -> "SmoothDensity":
        family = str(data.get("family", "")).strip().lower()
        if family not in FAMILIES:
            raise KernelError(f"unknown smooth family '{family}'")
        key = FAMILIES[family]
        if key not in data:
            raise KernelError(f"{family}: missing parameter '{key}'")
        return cls(family=family, mass=float(data.get("mass", 1.0)), scale=float(data[key]))


# ======== Kernel measure ========

@dataclass(frozen=True)
class KernelMeasure:
    """Dirac atoms (position, weight) plus an optional smooth even part."""

    atoms: Tuple[Tuple[float, float], ...] = ()
    smooth: Optional[SmoothDensity] = None

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        check_symmetry(self)

    # --- constructors ---
    @classmethod
    def zero(cls) -> "KernelMeasure":
        return cls()

    @classmethod
    def dirac(cls, weight: float = 1.0) -> "KernelMeasure":
        return cls(atoms=((0.0, weight),))

    @classmethod
    def gaussian(cls, mass: float = 1.0, width: float = 1.0) -> "KernelMeasure":
        return cls(smooth=SmoothDensity("gaussian", mass, width))

    @classmethod
    def laplace(cls, mass: float = 1.0, rate: float = 1.0) -> "KernelMeasure":
        return cls(smooth=SmoothDensity("laplace", mass, rate))

    @classmethod
    def uniform(cls, mass: float = 1.0, half_width: float = 1.0) -> "KernelMeasure":
        return cls(smooth=SmoothDensity("uniform", mass, half_width))

    @classmethod
    def from_half_line(cls, atoms: Iterable[Sequence[float]] = (),
                       smooth: Optional[SmoothDensity] = None) -> "KernelMeasure":
        """Mirror half-line atoms: (x, w) with x > 0 becomes (x, w) and (-x, w); x = 0 stays single."""
        full: List[Tuple[float, float]] = []
        for item in atoms:
            if len(item) != 2:
                raise KernelError(f"atom must be [position, weight], got {item!r}")
            x, w = float(item[0]), float(item[1])
            if not (math.isfinite(x) and math.isfinite(w)):
                raise KernelError(f"non-finite atom ({x}, {w})")
            if x < 0:
                raise KernelError(f"half-line atoms need x >= 0, got {x}")
            if x == 0.0:
                full.append((0.0, w))
            else:
                full.extend([(x, w), (-x, w)])
        return cls(atoms=tuple(full), smooth=smooth)

    @classmethod
    def from_config(cls, data: Optional[dict]) -> "KernelMeasure":
        data = data or {}
        smooth_cfg = data.get("smooth")
        smooth = SmoothDensity.from_config(smooth_cfg) if smooth_cfg else None
        return cls.from_half_line(data.get("atoms") or [], smooth)

    def to_config(self) -> dict:
        half = [[x, w] for x, w in self.atoms if x >= 0]
        return {"atoms": half, "smooth": self.smooth.to_config() if self.smooth else None}

    # --- local special case ---
    def is_local(self) -> bool:
        """True for q*delta_0: the convolution reduces to pointwise multiplication."""
        return self.smooth is None and all(abs(x) <= SYMMETRY_TOL for x, _ in self.atoms)

    def local_weight(self) -> float:
        if not self.is_local():
            raise KernelError("kernel is not a multiple of delta_0")
        return float(sum(w for _, w in self.atoms))

    def is_zero(self) -> bool:
        return all(w == 0.0 for _, w in self.atoms) and (self.smooth is None or self.smooth.mass == 0.0)


def check_symmetry(kernel: KernelMeasure, tol: float = SYMMETRY_TOL) -> None:
    """Every atom (x, w) with x != 0 needs a partner (-x, w)."""
    pending = [a for a in kernel.atoms if abs(a[0]) > tol]
    used = [False] * len(pending)
    for i, (x, w) in enumerate(pending):
        if used[i]:
            continue
        for j in range(len(pending)):
            if j == i or used[j]:
                continue
            xj, wj = pending[j]
            if abs(xj + x) <= tol and abs(wj - w) <= tol:
                used[i] = used[j] = True
                break
        else:
            raise KernelError(f"asymmetric kernel: atom ({x}, {w}) has no mirror partner")
    for x, w in kernel.atoms:
        if not (math.isfinite(x) and math.isfinite(w)):
            raise KernelError(f"non-finite atom ({x}, {w})")


# ======== Symbols and coefficients ========

def fourier_symbol(kernel: KernelMeasure, k: ArrayLike) -> ArrayLike:
    """q(k) = sum_atoms w cos(k x) + closed-form transform of the smooth part."""
    check_symmetry(kernel)
    k_arr = np.asarray(k, dtype=float)
    value = np.zeros_like(k_arr)
    for x, w in kernel.atoms:
        value = value + w * np.cos(k_arr * x)
    if kernel.smooth is not None:
        value = value + kernel.smooth.symbol(k_arr)
    if np.ndim(k) == 0:
        return float(value)
    return value


def quadrature_symbol(kernel: KernelMeasure, k: float) -> float:
    """Independent evaluation of the symbol by adaptive quadrature of the smooth density."""
    value = float(sum(w * math.cos(k * x) for x, w in kernel.atoms))
    s = kernel.smooth
    if s is None:
        return value
    upper = s.support_bound()
    if k == 0.0:
        part, _ = integrate.quad(lambda x: float(s.density(x)), 0.0, upper,
                                 epsabs=1e-14, epsrel=1e-12, limit=200)
    else:
        # QAWO on a finite interval; the infinite-interval cosine rule fails on these tails
        part, _ = integrate.quad(lambda x: float(s.density(x)), 0.0, upper,
                                 weight="cos", wvar=abs(k), epsabs=1e-13, epsrel=1e-12, limit=200)
    return value + 2.0 * part


@dataclass(frozen=True)
class FourierCoefficientTable:
    values: Dict[int, float] = field(default_factory=dict)

    def __getitem__(self, n: int) -> float:
        return self.values[n]

    @property
    def n_max(self) -> int:
        return max(self.values) if self.values else -1

    def as_dict(self) -> Dict[str, float]:
        return {str(n): v for n, v in sorted(self.values.items())}


def coefficient_table(kernel: KernelMeasure, n_max: int) -> FourierCoefficientTable:
    if n_max < 0:
        raise KernelError(f"n_max must be >= 0, got {n_max}")
    ns = np.arange(0, n_max + 1)
    vals = np.atleast_1d(fourier_symbol(kernel, ns.astype(float)))
    table: Dict[int, float] = {}
    for n, v in zip(ns, vals):
        table[int(n)] = float(v)
        table[-int(n)] = float(v)
    return FourierCoefficientTable(table)


def total_variation(kernel: KernelMeasure) -> float:
    tv = sum(abs(w) for _, w in kernel.atoms)
    if kernel.smooth is not None:
        tv += abs(kernel.smooth.mass)
    return float(tv)


def first_moment(kernel: KernelMeasure) -> float:
    """int |x| |Q|(dx); finite for every supported family."""
    m = sum(abs(x) * abs(w) for x, w in kernel.atoms)
    if kernel.smooth is not None:
        m += kernel.smooth.first_moment()
    value = float(m)
    if not math.isfinite(value):
        raise KernelError("kernel has infinite first moment")
    return value
