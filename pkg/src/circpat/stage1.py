"""Stage 1: recover the circular means ``F_sigma(z, r)`` from detector data.

All methods share one pipeline: DFT along ``z``, a trapezoid time transform
at the nonuniform frequencies ``omega = sqrt(k^2 + v^2)``, a per-method
spectral weight, Fourier-Bessel (or Hankel) synthesis in ``r`` and the
inverse DFT. Inputs may be a single slice ``(N_z, N_t)`` or any stack
``(..., N_z, N_t)``.
"""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .forward import CircularMeansStack, ScanGeometry, SinogramStack
from .spectral import (
    FourierBesselCoefficients,
    TrigKernel,
    synthesis_matrix,
    trig_matrix,
    wavenumbers,
)
from .special import BesselZerosTable, bessel_j0, bessel_j1, hankel2_0, j0_zeros

log = logging.getLogger(__name__)

__all__ = [
    "Method",
    "Stage1Config",
    "PreconditionError",
    "NaiveReport",
    "PointDetectorReport",
    "series_coefficients",
    "reconstruct_sine",
    "reconstruct_hankel",
    "reconstruct_naive",
    "reconstruct_point_detector",
    "reconstruct_stack",
]


class PreconditionError(ValueError):
    """A reconstruction method was asked to run outside its stability regime."""


class Method(str, enum.Enum):
    SINE = "sine"
    HANKEL = "hankel"
    NAIVE = "naive"
    POINT = "point"


@dataclass(frozen=True)
class Stage1Config:
    """Options for the stage-1 solvers.

    ``N_r`` defaults to the geometry's radial size. ``guard_eps`` only affects
    the quotient method, ``K``/``r1`` only the point-detector method.
    ``bandlimit`` drops spectral terms whose temporal frequency exceeds the
    Nyquist limit ``pi / dt`` of the time samples.
    """

    method: Method = Method.SINE
    N_r: int | None = None
    guard_eps: float = 0.05
    K: int | None = None
    r1: float | None = None
    bandlimit: bool = True
    chunk: int = 32

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.guard_eps <= 0:
            raise ValueError("guard_eps must be positive")
        if self.K is not None and (int(self.K) != self.K or self.K < 1):
            raise ValueError("K must be a positive integer")


@dataclass(frozen=True)
class NaiveReport:
    guarded_nodes: int
    max_amplification: float
    n_nodes: int


@dataclass(frozen=True)
class PointDetectorReport:
    r1: float
    K: int | None
    min_denominator: float


def _enclosing_or_raise(geometry: ScanGeometry, method: str):
    if geometry.r_det >= 2 * geometry.R:
        return
    verdict = "Outside" if geometry.r_det < geometry.R else "Invalid"
    raise PreconditionError(
        f"{method} series requires enclosing detectors (r_det >= 2R); "
        f"geometry check verdict is {verdict} (r_det={geometry.r_det}, R={geometry.R})"
    )


def _check_data(G, geometry: ScanGeometry) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim < 2 or G.shape[-2:] != (geometry.N_z, geometry.N_t):
        raise ValueError(f"data trailing shape {G.shape[-2:]} != (N_z, N_t) = {(geometry.N_z, geometry.N_t)}")
    return G


_BLOCK_ELEMENTS = 1 << 22


def _spectral_weights(geometry, nodes, kind, weight_fn, bandlimit):
    """Yield ``(bins, M)`` where ``M[b, n, j]`` maps time samples of DFT bin
    ``bins[b]`` to the spectral coefficient at node ``j``."""
    k = wavenumbers(geometry.N_z, geometry.H)
    t = geometry.t
    nyquist = math.pi / geometry.dt
    step = max(1, _BLOCK_ELEMENTS // (t.size * nodes.size))
    for start in range(0, k.size, step):
        bins = slice(start, min(start + step, k.size))
        kb = k[bins, None]
        omega = np.sqrt(kb * kb + nodes[None, :] * nodes[None, :])
        M = trig_matrix(t, omega, kind, geometry.dt) * weight_fn(omega)[:, None, :]
        if bandlimit:
            M *= (omega <= nyquist)[:, None, :]
        yield bins, M


def _project(G, geometry, nodes, kind, weight_fn, bandlimit, chunk):
    """Spectral coefficients ``c[..., m, j]`` in DFT units (no ``dz`` factor)."""
    batch = G.shape[:-2]
    flat = G.reshape((-1, geometry.N_z, geometry.N_t))
    out = np.empty((flat.shape[0], geometry.N_z, nodes.size), dtype=complex)
    for start in range(0, flat.shape[0], chunk):
        X = np.fft.fft(flat[start:start + chunk], axis=-2)
        for bins, M in _spectral_weights(geometry, nodes, kind, weight_fn, bandlimit):
            # (bins, items, N_t) @ (bins, N_t, nodes) -> (bins, items, nodes)
            out[start:start + chunk, bins, :] = np.matmul(X[:, bins, :].transpose(1, 0, 2), M).transpose(1, 0, 2)
    return out.reshape(batch + (geometry.N_z, nodes.size))


def _synthesize(coef, basis):
    """Apply the radial basis and invert the z-DFT; returns the complex field."""
    field = coef @ basis
    return np.fft.ifft(field, axis=-2)


def _real_output(field, label):
    real = field.real
    peak = np.abs(real).max() if real.size else 0.0
    residue = np.abs(field.imag).max() if real.size else 0.0
    if peak > 0:
        log.debug("%s: discarded imaginary part %.3e of peak", label, residue / peak)
    return real


def _table(geometry, config) -> BesselZerosTable:
    n = geometry.N_r if config.N_r is None else config.N_r
    return j0_zeros(geometry.r_det, n)


def _sine_weight(table):
    v, j1 = table.zeros, table.j1_at_zeros
    scale = 2.0 / (math.pi * table.r_det) * v / j1
    return lambda omega: scale / omega**2


def _hankel_weight(table):
    h = hankel2_0(table.r_det * table.zeros)
    scale = 2.0 / (math.pi * h)
    return lambda omega: scale / omega


def series_coefficients(G, geometry: ScanGeometry, config: Stage1Config | None = None) -> FourierBesselCoefficients:
    """Hankel-transform values ``H_r{F_z F}(k_m, v_n)`` recovered from the data.

    Shape of ``coeffs`` is ``(..., N_z, N_r)`` with ``m`` in FFT order; the
    ``dz`` factor of the continuous z-transform is included.
    """
    config = config or Stage1Config()
    G = _check_data(G, geometry)
    if config.method is Method.SINE:
        _enclosing_or_raise(geometry, "sine")
        table = _table(geometry, config)
        coef = _project(G, geometry, table.zeros, TrigKernel.SINE_T, _sine_weight(table), config.bandlimit, config.chunk)
    elif config.method is Method.HANKEL:
        _enclosing_or_raise(geometry, "Hankel")
        table = _table(geometry, config)
        coef = _project(G, geometry, table.zeros, TrigKernel.FOURIER_CAUSAL, _hankel_weight(table), config.bandlimit, config.chunk)
    elif config.method is Method.POINT:
        table, denom, _ = _point_setup(geometry, config)
        coef = _project(G, geometry, table.zeros, TrigKernel.COSINE, _point_weight(table, denom), config.bandlimit, config.chunk)
    else:
        raise ValueError("the quotient method has no Fourier-Bessel coefficients")
    return FourierBesselCoefficients(table, coef * geometry.dz)


def reconstruct_sine(G, geometry: ScanGeometry, config: Stage1Config | None = None) -> np.ndarray:
    """Stable sine-series reconstruction (limit form of the quotient at the
    Bessel zeros). Requires ``r_det >= 2R``; returns ``(..., N_z, N_r)``."""
    config = config or Stage1Config(Method.SINE)
    G = _check_data(G, geometry)
    _enclosing_or_raise(geometry, "sine")
    table = _table(geometry, config)
    coef = _project(G, geometry, table.zeros, TrigKernel.SINE_T, _sine_weight(table), config.bandlimit, config.chunk)
    r = geometry.r_det * np.arange(len(table)) / len(table)
    return _real_output(_synthesize(coef, synthesis_matrix(table, r)), "sine")


def reconstruct_hankel(G, geometry: ScanGeometry, config: Stage1Config | None = None) -> np.ndarray:
    """Stable reconstruction dividing by the nonvanishing ``H0^(2)(r_det v_n)``.

    Data are taken as zero for ``t < 0`` so the causal Fourier transform in
    time is used. Requires ``r_det >= 2R``.
    """
    config = config or Stage1Config(Method.HANKEL)
    G = _check_data(G, geometry)
    _enclosing_or_raise(geometry, "Hankel")
    table = _table(geometry, config)
    coef = _project(G, geometry, table.zeros, TrigKernel.FOURIER_CAUSAL, _hankel_weight(table), config.bandlimit, config.chunk)
    r = geometry.r_det * np.arange(len(table)) / len(table)
    return _real_output(_synthesize(coef, synthesis_matrix(table, r)), "hankel")


def naive_grid(geometry: ScanGeometry, config: Stage1Config):
    """Uniform frequency grid ``(0, v_{N_r}]`` with ``4 N_r`` nodes and trapezoid weights."""
    table = _table(geometry, config)
    n_v = 4 * len(table)
    v_max = table.zeros[-1]
    nodes = v_max * np.arange(1, n_v + 1) / n_v
    w = np.full(n_v, v_max / n_v)
    w[-1] *= 0.5
    return nodes, w


def reconstruct_naive(G, geometry: ScanGeometry, config: Stage1Config | None = None):
    """Direct quotient formula dividing by ``J0(r_det v)`` on a uniform grid.

    Nodes where ``|J0(r_det v)| < guard_eps`` are zeroed. Works for any
    geometry but is unstable near the Bessel zeros.

    Returns
    -------
    means : ndarray, shape (..., N_z, N_r)
    report : NaiveReport
    """
    config = config or Stage1Config(Method.NAIVE)
    G = _check_data(G, geometry)
    nodes, w = naive_grid(geometry, config)
    j0 = bessel_j0(geometry.r_det * nodes)
    guard = np.abs(j0) < config.guard_eps
    with np.errstate(divide="ignore"):
        amplification = float(np.max(1.0 / np.abs(j0)))
    inv = np.where(guard, 0.0, 1.0 / np.where(guard, 1.0, j0))
    scale = 2.0 / math.pi * inv

    coef = _project(G, geometry, nodes, TrigKernel.COSINE, lambda omega: scale / omega, config.bandlimit, config.chunk)
    n_r = nodes.size // 4
    r = geometry.r_det * np.arange(n_r) / n_r
    # inverse Hankel transform int Fbar(v) J0(r v) v dv by the trapezoid rule
    basis = (w * nodes)[:, None] * bessel_j0(np.outer(nodes, r))
    means = _real_output(_synthesize(coef, basis), "naive")
    report = NaiveReport(int(guard.sum()), amplification, int(nodes.size))
    return means, report


def _point_setup(geometry: ScanGeometry, config: Stage1Config):
    R, r_det = geometry.R, geometry.r_det
    if r_det > R / 10:
        raise PreconditionError(
            f"point-detector formula needs r_det <= R/10 (r_det={r_det}, R={R}); for larger "
            "detectors the denominators J0(r_det v~_n) are no longer well bounded from below"
        )
    if r_det == 0:
        K = None
        r1 = 2 * R if config.r1 is None else float(config.r1)
        if r1 < 2 * R:
            raise PreconditionError(f"r1 = {r1} must be >= 2R = {2 * R} for point detectors")
    else:
        K = config.K if config.K is not None else math.ceil((2 * R - r_det) / r_det - 1e-12)
        r1 = K * r_det
        if r1 < 2 * R - r_det - 1e-12:
            raise PreconditionError(f"r1 = K r_det = {r1} must be >= 2R - r_det = {2 * R - r_det}")
    n = geometry.N_r if config.N_r is None else config.N_r
    table = j0_zeros(r1, n)
    denom = bessel_j0(r_det * table.zeros)
    return table, denom, K


def _point_weight(table, denom):
    scale = 2.0 / (math.pi * denom)
    return lambda omega: scale / omega


def reconstruct_point_detector(G, geometry: ScanGeometry, config: Stage1Config | None = None):
    """Truncated Fourier-Bessel series on ``[0, r1]`` for small or point detectors.

    The radial output grid is ``r1 * n / N_r``.

    Returns
    -------
    means : ndarray, shape (..., N_z, N_r)
    report : PointDetectorReport
    """
    config = config or Stage1Config(Method.POINT)
    G = _check_data(G, geometry)
    table, denom, K = _point_setup(geometry, config)
    coef = _project(G, geometry, table.zeros, TrigKernel.COSINE, _point_weight(table, denom), config.bandlimit, config.chunk)
    r = table.r_det * np.arange(len(table)) / len(table)
    means = _real_output(_synthesize(coef, synthesis_matrix(table, r)), "point")
    return means, PointDetectorReport(table.r_det, K, float(np.min(np.abs(denom))))


def _run(method, G, geometry, config):
    if method is Method.SINE:
        return reconstruct_sine(G, geometry, config), None
    if method is Method.HANKEL:
        return reconstruct_hankel(G, geometry, config), None
    if method is Method.NAIVE:
        return reconstruct_naive(G, geometry, config)
    return reconstruct_point_detector(G, geometry, config)


def reconstruct_stack(stack: SinogramStack, config: Stage1Config,
                      threads: int = 1) -> tuple[CircularMeansStack, dict]:
    """Run the configured method on every detector position.

    Detector positions are processed in fixed blocks of ``config.chunk``;
    ``threads`` only sets how many blocks run at once, so the output bytes do
    not depend on it.
    """
    g = stack.geometry
    method = config.method
    info: dict = {"method": method.value}
    threads = max(1, int(threads))
    blocks = [(a, min(a + config.chunk, g.N_sigma)) for a in range(0, g.N_sigma, config.chunk)]
    if threads == 1 or len(blocks) == 1:
        results = [_run(method, stack.data[a:b], g, config) for a, b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ab: _run(method, stack.data[ab[0]:ab[1]], g, config), blocks))
    data = np.concatenate([res[0] for res in results], axis=0)
    rep = results[0][1]
    r_max = g.r_det
    if method is Method.NAIVE:
        info.update(guarded_nodes=rep.guarded_nodes, max_amplification=rep.max_amplification)
    elif method is Method.POINT:
        r_max = rep.r1
        info.update(r1=rep.r1, min_denominator=rep.min_denominator)
    return CircularMeansStack(g, data, r_max=r_max, method=method.value), info
