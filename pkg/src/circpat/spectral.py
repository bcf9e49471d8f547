"""Discrete transforms used by the stage-1 reconstructions.

Frequency convention: the z-DFT uses the kernel ``exp(-2 pi i m j / N_z)`` and
bin ``m`` stands for the continuous wavenumber ``k = 2 pi m / H`` of the
transform ``int phi(z) exp(-i k z) dz``. Arrays are kept in numpy FFT order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .special import BesselZerosTable, DomainError, bessel_j0

__all__ = [
    "SpectralSlice",
    "FourierBesselCoefficients",
    "TrigKernel",
    "wavenumbers",
    "dft_z",
    "idft_z",
    "trapezoid_weights",
    "trig_matrix",
    "trig_transform_at",
    "fourier_bessel_synthesis",
]


def wavenumbers(n_z: int, H: float) -> np.ndarray:
    """``k_m = 2 pi m / H`` in FFT order (``m = 0, 1, ..., -1``)."""
    return 2.0 * np.pi * np.fft.fftfreq(n_z, d=H / n_z)


@dataclass
class SpectralSlice:
    k: np.ndarray
    values: np.ndarray = field(repr=False)

    def centered(self):
        """Return ``(m, k, values)`` ordered ``m = -N_z/2, ..., N_z/2 - 1``."""
        n = self.k.size
        m = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / n)).astype(int)
        return m, np.fft.fftshift(self.k), np.fft.fftshift(self.values, axes=-2)


def dft_z(grid, H: float) -> SpectralSlice:
    """Unnormalised DFT along the height axis (second to last axis)."""
    grid = np.asarray(grid)
    n_z = grid.shape[-2]
    if n_z % 2:
        raise ValueError("N_z must be even")
    return SpectralSlice(wavenumbers(n_z, H), np.fft.fft(grid, axis=-2))


def idft_z(spec: SpectralSlice) -> np.ndarray:
    """Inverse of :func:`dft_z` (``1/N_z`` normalisation, conjugate kernel)."""
    return np.fft.ifft(spec.values, axis=-2)


class TrigKernel(str, enum.Enum):
    SINE = "sine"
    SINE_T = "sine_t"
    COSINE = "cosine"
    FOURIER_CAUSAL = "fourier"


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    if n < 2:
        raise ValueError("at least two time samples are required")
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def trig_matrix(t, omega, kind: TrigKernel, dt: float) -> np.ndarray:
    """Quadrature matrix ``M[..., n, j]`` with ``sum_n phi(t_n) M[..., n, j]``
    approximating ``int phi(t) kernel(omega[..., j] t) dt`` by the trapezoid rule.

    ``omega`` of shape ``(..., n_omega)`` gives a stack of shape
    ``(..., N_t, n_omega)``.
    """
    kind = TrigKernel(kind)
    t = np.asarray(t, dtype=float)
    w = trapezoid_weights(t.size, dt)[:, None]
    omega = np.asarray(omega, dtype=float)
    phase = t[:, None] * omega[..., None, :]
    if kind is TrigKernel.SINE:
        return w * np.sin(phase)
    if kind is TrigKernel.SINE_T:
        return (w * t[:, None]) * np.sin(phase)
    if kind is TrigKernel.COSINE:
        return w * np.cos(phase)
    return w * np.cos(phase) - 1j * (w * np.sin(phase))


def trig_transform_at(samples, kind: TrigKernel, omega: float, dt: float):
    """Trapezoid approximation of ``int_0^T phi(t) kernel(omega t) dt`` for
    uniformly sampled ``phi`` starting at ``t = 0``."""
    samples = np.asarray(samples, dtype=float)
    if omega < 0:
        raise ValueError("omega must be non-negative")
    t = dt * np.arange(samples.size)
    kind = TrigKernel(kind)
    if kind is TrigKernel.FOURIER_CAUSAL:
        c = samples @ trig_matrix(t, [omega], TrigKernel.COSINE, dt)[:, 0]
        s = samples @ trig_matrix(t, [omega], TrigKernel.SINE, dt)[:, 0]
        return complex(c - 1j * s)
    return float(samples @ trig_matrix(t, [omega], kind, dt)[:, 0])


@dataclass
class FourierBesselCoefficients:
    """Coefficients ``c_n`` (trailing axis) of a Fourier-Bessel series on ``[0, r_det]``."""

    zeros_table: BesselZerosTable
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.shape[-1] != len(self.zeros_table):
            raise ValueError("coefficient count does not match the zeros table")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")


def synthesis_matrix(table: BesselZerosTable, r_grid) -> np.ndarray:
    """``B[n, j] = (2 / r_det^2) J0(r_j v_n) / J1(r_det v_n)^2``."""
    r_grid = np.asarray(r_grid, dtype=float)
    scale = 2.0 / (table.r_det**2 * table.j1_at_zeros**2)
    return scale[:, None] * bessel_j0(np.outer(table.zeros, r_grid))


def fourier_bessel_synthesis(coeffs: FourierBesselCoefficients, r_grid) -> np.ndarray:
    """Evaluate ``(2/r_det^2) sum_n c_n J0(r v_n) / J1(r_det v_n)^2`` on ``r_grid``."""
    r_grid = np.atleast_1d(np.asarray(r_grid, dtype=float))
    table = coeffs.zeros_table
    if np.any(r_grid >= table.r_det) or np.any(r_grid < 0):
        raise DomainError("Fourier-Bessel synthesis is only valid for 0 <= r < r_det")
    return coeffs.coeffs @ synthesis_matrix(table, r_grid)
