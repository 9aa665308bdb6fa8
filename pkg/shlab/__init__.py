"""Nonlocal Swift–Hohenberg laboratory: kernels, spectral filters, SH/GL solvers, residual machinery."""

__version__ = "0.3.0"
