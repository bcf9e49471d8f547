"""Stage 2: invert the circular mean transform slice by slice.

For centres ``R sigma`` on a circle of radius ``R`` and a function supported
in the disc of radius ``R``,

    f(x) = 1/(2 pi) int_{S^1} int_0^{2R} (d/dr r d/dr F_sigma)(r)
           log|r^2 - |x - R sigma|^2| dr dsigma.

The inner integral is computed once per detector on a uniform grid of
distances ``d`` by exact product integration of the logarithm against the
cell-wise constant filtered means; pixels pick it up by linear interpolation.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kernels import thread_count
from .forward import CircularMeansStack, ScanGeometry

__all__ = [
    "VolumeSpec",
    "VolumeGrid",
    "radial_filter",
    "log_kernel_weights",
    "circular_fbp",
    "reconstruct_volume",
    "thread_count",
]


@dataclass(frozen=True)
class VolumeSpec:
    """Pixel grid of every slice: ``nx * ny`` pixel centres covering ``[-R, R]^2``."""

    nx: int = 256
    ny: int = 256

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("pixel counts must be positive")

    def axes(self, R: float):
        x = R * (2.0 * np.arange(self.nx) + 1.0 - self.nx) / self.nx
        y = R * (2.0 * np.arange(self.ny) + 1.0 - self.ny) / self.ny
        return x, y


@dataclass
class VolumeGrid:
    """Reconstructed initial pressure, ``values[z][y][x]``."""

    extent: float
    z: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.values.ndim != 3 or self.values.shape[0] != self.z.size:
            raise ValueError("values must have shape (N_z, ny, nx)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("volume contains non-finite values")

    @property
    def nx(self) -> int:
        return self.values.shape[2]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def spec(self) -> VolumeSpec:
        return VolumeSpec(self.nx, self.ny)

    def axes(self):
        return self.spec.axes(self.extent)

    @property
    def inside(self) -> np.ndarray:
        """Boolean ``(ny, nx)`` mask of pixels within the reconstruction disc."""
        x, y = self.axes()
        return x[None, :] ** 2 + y[:, None] ** 2 <= self.extent**2


def radial_filter(F, dr: float) -> np.ndarray:
    """``D = d/dr (r dF/dr)`` along the last axis of ``F`` (samples at ``r = i dr``).

    Interior nodes use the conservative stencil
    ``[r_{i+1/2}(F_{i+1} - F_i) - r_{i-1/2}(F_i - F_{i-1})] / dr^2``, which is
    exact on quadratics. At ``r = 0`` the even extension gives ``D = 0``; the
    last node uses one-sided second-order differences.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[-1]
    if n < 3:
        raise ValueError("radial_filter needs at least 3 radial samples")
    if dr <= 0:
        raise ValueError("dr must be positive")
    r_half = dr * (np.arange(n - 1) + 0.5)
    flux = r_half * np.diff(F, axis=-1)
    D = np.empty_like(F)
    D[..., 0] = 0.0
    D[..., 1:-1] = np.diff(flux, axis=-1) / dr**2
    r_end = dr * (n - 1)
    # stencils in difference form so constants cancel exactly
    g = np.diff(F[..., -4:] if n >= 4 else F[..., -3:], axis=-1)
    d1 = (3.0 * g[..., -1] - g[..., -2]) / (2.0 * dr)
    if n >= 4:
        d2 = (2.0 * g[..., -1] - 3.0 * g[..., -2] + g[..., -3]) / dr**2
    else:
        d2 = (g[..., -1] - g[..., -2]) / dr**2
    D[..., -1] = d1 + r_end * d2
    return D


def _xlogx(x):
    ax = np.abs(x)
    return np.where(ax > 0, x * np.log(np.where(ax > 0, ax, 1.0)), 0.0)


def _log_antiderivative(r, d):
    """Antiderivative in ``r`` of ``log|r^2 - d^2|`` (for ``r, d >= 0``)."""
    return _xlogx(r - d) + _xlogx(r + d) - 2.0 * r


def log_kernel_weights(n_r: int, dr: float, r_cut: float, d) -> np.ndarray:
    """``W[j, i] = int_{cell_i} log|r^2 - d_j^2| dr`` over the cells
    ``[(i - 1/2) dr, (i + 1/2) dr]`` clipped to ``[0, r_cut]``.

    Exact, so the logarithmic singularity at ``r = d`` needs no special node.
    """
    d = np.asarray(d, dtype=float)
    edges = np.clip(dr * (np.arange(n_r + 1) - 0.5), 0.0, r_cut)
    P = _log_antiderivative(edges[None, :], d[:, None])
    return np.diff(P, axis=1)


class _Backprojector:
    """Geometry-dependent tables shared by every slice."""

    def __init__(self, geometry: ScanGeometry, n_r: int, r_max: float, spec: VolumeSpec):
        R = geometry.R
        self.n_sigma = geometry.N_sigma
        self.dr = r_max / n_r
        self.n_r = n_r
        self.r_cut = min(2.0 * R, r_max)
        # the filtered means vanish beyond 2R, so cells past it are dropped
        self.n_used = min(n_r, int(math.floor(self.r_cut / self.dr + 0.5)) + 1)
        x, y = spec.axes(R)
        X, Y = np.meshgrid(x, y)
        px, py = X.ravel(), Y.ravel()
        d_max = math.hypot(np.abs(x).max() + R, np.abs(y).max() + R)
        self.dd = self.dr / 2.0
        n_d = int(math.ceil(d_max / self.dd)) + 2
        self.d = self.dd * np.arange(n_d)
        self.W = log_kernel_weights(self.n_used, self.dr, self.r_cut, self.d)
        sig = geometry.sigmas
        dist = np.hypot(px[None, :] - R * np.cos(sig)[:, None], py[None, :] - R * np.sin(sig)[:, None])
        pos = dist / self.dd
        idx = np.minimum(np.floor(pos).astype(np.int64), n_d - 2)
        self.idx = np.ascontiguousarray(idx)
        self.frac = np.ascontiguousarray(pos - idx)
        self.shape = (spec.ny, spec.nx)

    def filtered(self, means):
        """``q[l, j, s]`` for means of shape ``(N_sigma, n_slices, N_r)``."""
        D = radial_filter(means, self.dr)[..., : self.n_used]
        q = np.empty((D.shape[0], self.d.size, D.shape[1]))
        # one product per slice keeps every slice's arithmetic identical
        for s in range(D.shape[1]):
            q[:, :, s] = D[:, s, :] @ self.W.T
        return q

    def __call__(self, means) -> np.ndarray:
        n_slices = means.shape[1]
        q = self.filtered(means)
        out = np.zeros((self.idx.shape[1], n_slices))
        # the prefactor 1/(2 pi) with the rule (2 pi / N_sigma) sum is a plain mean over sigma
        kernels.backproject(q, self.idx, self.frac, out)
        return out.T.reshape((n_slices,) + self.shape)


def _check_means(means, geometry: ScanGeometry):
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] != geometry.N_sigma:
        raise ValueError(f"means must have shape (N_sigma, N_r) with N_sigma={geometry.N_sigma}, got {means.shape}")
    return means


def circular_fbp(means, geometry: ScanGeometry, spec: VolumeSpec | None = None, r_max: float | None = None) -> np.ndarray:
    """Reconstruct one slice from means ``[l][n]`` sampled at ``r = r_max n / N_r``.

    Returns an image of shape ``(ny, nx)``.
    """
    means = _check_means(means, geometry)
    spec = spec or VolumeSpec()
    r_max = geometry.r_det if r_max is None else r_max
    bp = _Backprojector(geometry, means.shape[1], r_max, spec)
    return bp(means[:, None, :])[0]


def reconstruct_volume(stack: CircularMeansStack, spec: VolumeSpec | None = None, threads: int | None = None,
                       block: int = 16) -> VolumeGrid:
    """Apply :func:`circular_fbp` to every height of a means stack.

    Heights are processed in blocks of ``block`` slices, up to ``threads``
    blocks at a time.
    """
    g = stack.geometry
    spec = spec or VolumeSpec()
    data = np.asarray(stack.data, dtype=float)
    if data.ndim != 3 or data.shape[:2] != (g.N_sigma, g.N_z):
        raise ValueError(f"means stack shape {data.shape} inconsistent with geometry")
    bp = _Backprojector(g, data.shape[2], stack.r_max, spec)
    threads = thread_count() if threads is None else max(1, int(threads))
    jobs = [(a, min(a + block, g.N_z)) for a in range(0, g.N_z, block)]
    values = np.empty((g.N_z, spec.ny, spec.nx))

    def run(job):
        a, b = job
        return a, b, bp(data[:, a:b, :])

    if threads == 1:
        results = map(run, jobs)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    for a, b, block in results:
        values[a:b] = block
    return VolumeGrid(g.R, g.z, values)
