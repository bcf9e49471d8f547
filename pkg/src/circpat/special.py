"""Bessel-family special functions of order 0 and 1 and tables of J0 zeros.

Evaluation is delegated to :mod:`scipy.special` (Cephes); this module adds
argument validation and the zeros table shared by every stage-1 method.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

__all__ = [
    "DomainError",
    "BesselZerosTable",
    "bessel_j0",
    "bessel_j1",
    "bessel_y0",
    "hankel2_0",
    "j0_zeros",
]


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


def _as_real(x, name: str, positive: bool = False):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite argument")
    if positive and np.any(arr <= 0.0):
        raise DomainError(f"{name}: argument must be > 0 (logarithmic singularity at 0)")
    return arr


def _unwrap(arr):
    return arr.item() if arr.ndim == 0 else arr


def bessel_j0(x):
    """Bessel function of the first kind, order 0. Accepts scalars or arrays."""
    return _unwrap(_sp.j0(_as_real(x, "bessel_j0")))


def bessel_j1(x):
    """Bessel function of the first kind, order 1."""
    return _unwrap(_sp.j1(_as_real(x, "bessel_j1")))


def bessel_y0(x):
    """Bessel function of the second kind, order 0 (``x > 0``)."""
    return _unwrap(_sp.y0(_as_real(x, "bessel_y0", positive=True)))


def hankel2_0(x):
    """Order-zero Hankel function of the second kind, ``J0(x) - i*Y0(x)``."""
    arr = _as_real(x, "hankel2_0", positive=True)
    return _unwrap(_sp.j0(arr) - 1j * _sp.y0(arr))


@dataclass(frozen=True)
class BesselZerosTable:
    """Scaled zeros ``v_n = j_{0,n} / r_det`` of ``v -> J0(r_det * v)``.

    Attributes
    ----------
    r_det : float
        Radius used for the scaling.
    zeros : ndarray
        ``v_1 < v_2 < ... < v_N``.
    j1_at_zeros : ndarray
        ``J1(r_det * v_n)``; never zero because the roots are simple.
    """

    r_det: float
    zeros: np.ndarray = field(repr=False)
    j1_at_zeros: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.zeros)

    def truncated(self, count: int) -> "BesselZerosTable":
        if count > len(self):
            raise ValueError(f"table holds {len(self)} zeros, asked for {count}")
        return BesselZerosTable(self.r_det, self.zeros[:count], self.j1_at_zeros[:count])


def _unit_j0_zeros(count: int) -> np.ndarray:
    # One root of J0 lies in each ((n-1)pi, n pi); bisect all brackets at once.
    n = np.arange(1, count + 1, dtype=float)
    lo = (n - 1.0) * np.pi
    hi = n * np.pi
    f_lo = _sp.j0(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = _sp.j0(mid)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
        if np.all(hi - lo <= 1e-13 * np.maximum(1.0, hi)):
            break
    root = 0.5 * (lo + hi)
    # one Newton polish (J0' = -J1) removes the residual bracket width
    return root + _sp.j0(root) / _sp.j1(root)


def j0_zeros(r_det: float, count: int) -> BesselZerosTable:
    """Return the first ``count`` zeros of ``v -> J0(r_det * v)``."""
    if not (np.isfinite(r_det) and r_det > 0):
        raise ValueError("r_det must be a positive finite length")
    if int(count) != count or count < 1:
        raise ValueError("count must be a positive integer")
    roots = _unit_j0_zeros(int(count))
    zeros = roots / r_det
    j1 = _sp.j1(r_det * zeros)
    zeros.setflags(write=False)
    j1.setflags(write=False)
    return BesselZerosTable(float(r_det), zeros, j1)
