"""Experiment orchestration: configuration, simulation, reconstruction,
metrics and the timing benchmark.

Output directory layout::

    sinogram.bin/.hdr          clean detector data
    sinogram_noisy.bin/.hdr    noisy data (noise > 0 only)
    means_exact.bin/.hdr       ground-truth circular means
    phantom.txt                copy of the phantom description
    means_<method>.bin/.hdr    stage-1 output
    volume.bin/.hdr            stage-2 output
    slices/slice_####.pgm      per-height images
    metrics.txt                key=value report
"""
from __future__ import annotations

import logging
import math
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .forward import (
    Absorber,
    CircularMeansStack,
    Phantom,
    Profile,
    ScanGeometry,
    SinogramStack,
    add_noise,
    circular_means_exact,
    exact_means_stack,
    geometry_check,
    parse_phantom,
    simulate_sinogram,
    simulate_slice,
)
from .kernels import thread_count
from .stage1 import Method, PreconditionError, Stage1Config, reconstruct_stack
from .stage2 import VolumeSpec, reconstruct_volume

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsReport",
    "load_config",
    "compute_metrics",
    "run_simulate",
    "run_reconstruct",
    "run_benchmark",
    "phantom_on_grid",
    "benchmark_phantom",
]


class ConfigError(ValueError):
    """Unusable configuration (unknown key, bad value, missing file)."""


_GEOMETRY_TYPES = {name: (int if name[0] in "Nn" else float) for name in ScanGeometry.FIELDS}
_OTHER_KEYS = {
    "phantom": str,
    "method": str,
    "noise": float,
    "seed": int,
    "out": str,
    "nx": int,
    "ny": int,
    "guard_eps": float,
    "K": int,
    "r1": float,
    "bandlimit": str,
    "pgm_every": int,
}


@dataclass
class ExperimentConfig:
    geometry: ScanGeometry = field(default_factory=ScanGeometry)
    phantom_path: Path | None = None
    method: Stage1Config = field(default_factory=Stage1Config)
    noise_level: float = 0.0
    seed: int = 0
    output_dir: Path = Path("out")
    volume_spec: VolumeSpec = field(default_factory=VolumeSpec)
    pgm_every: int = 1

    def phantom(self) -> Phantom:
        if self.phantom_path is None:
            raise ConfigError("no phantom file configured (key 'phantom')")
        try:
            text = Path(self.phantom_path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read phantom file {self.phantom_path}: {exc}") from None
        try:
            return parse_phantom(text.splitlines())
        except ValueError as exc:
            raise ConfigError(f"{self.phantom_path}: {exc}") from None


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a flat ``key=value`` file and apply overrides (``None`` values are ignored).

    Relative phantom paths are resolved against the config file's directory.
    """
    raw: dict[str, str] = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = io.parse_header(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except io.HeaderError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    values: dict[str, object] = {}
    for key, text in raw.items():
        kind = _GEOMETRY_TYPES.get(key) or _OTHER_KEYS.get(key)
        if kind is None:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if kind is int:
                number = float(text)
                if number != int(number):
                    raise ValueError
                values[key] = int(number)
            else:
                values[key] = kind(text)
        except ValueError:
            raise ConfigError(f"config key {key}: cannot parse {text!r}") from None
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if "phantom" in values and path is not None and "phantom" in raw:
        phantom = Path(str(values["phantom"]))
        values["phantom"] = phantom if phantom.is_absolute() else base / phantom
    try:
        geometry = ScanGeometry(**{k: values[k] for k in ScanGeometry.FIELDS if k in values})
        stage1 = Stage1Config(
            method=values.get("method", "sine"),
            guard_eps=values.get("guard_eps", 0.05),
            K=values.get("K"),
            r1=values.get("r1"),
            bandlimit=_parse_bool(str(values.get("bandlimit", "true"))),
        )
        noise = float(values.get("noise", 0.0))
        if noise < 0 or not math.isfinite(noise):
            raise ValueError("noise must be a non-negative number")
        spec = VolumeSpec(values.get("nx", 256), values.get("ny", 256))
        pgm_every = int(values.get("pgm_every", 1))
        if pgm_every < 0:
            raise ValueError("pgm_every must be non-negative")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    phantom = values.get("phantom")
    return ExperimentConfig(
        geometry=geometry,
        phantom_path=Path(phantom) if phantom is not None else None,
        method=stage1,
        noise_level=noise,
        seed=int(values.get("seed", 0)),
        output_dir=Path(str(values.get("out", "out"))),
        volume_spec=spec,
        pgm_every=pgm_every,
    )


# -- metrics -----------------------------------------------------------------

@dataclass
class MetricsReport:
    """Flat record of error metrics, counters and timings.

    ``None`` marks a metric that is undefined (zero reference).
    """

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def __contains__(self, key):
        return key in self.values

    def update(self, prefix: str = "", **items):
        for key, value in items.items():
            self.values[f"{prefix}{key}"] = value

    def to_text(self) -> str:
        lines = []
        for key, value in self.values.items():
            if value is None:
                value = "undefined"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}\n")
        return "".join(lines)


def compute_metrics(a, b, mask=None) -> dict:
    """``relative_l2 = |a - b| / |b|``, ``rmse`` and ``psnr = 20 log10(max|b| / rmse)``.

    ``psnr`` is ``inf`` for identical grids; relative metrics are ``None`` when
    the reference is identically zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
        a, b = a[mask], b[mask]
    diff = a - b
    n = diff.size
    rmse = math.sqrt(float(np.sum(diff * diff)) / n) if n else 0.0
    ref_norm = math.sqrt(float(np.sum(b * b)))
    peak = float(np.max(np.abs(b))) if n else 0.0
    if ref_norm == 0.0:
        return {"relative_l2": None, "rmse": rmse, "psnr": None, "undefined": True}
    rel = math.sqrt(float(np.sum(diff * diff))) / ref_norm
    psnr = math.inf if rmse == 0.0 else 20.0 * math.log10(peak / rmse)
    return {"relative_l2": rel, "rmse": rmse, "psnr": psnr, "undefined": False}


def phantom_on_grid(phantom: Phantom, geometry: ScanGeometry, spec: VolumeSpec) -> np.ndarray:
    """Initial pressure sampled at the volume's pixel centres, ``[z][y][x]``."""
    x, y = spec.axes(geometry.R)
    X, Y = np.meshgrid(x, y)
    out = np.empty((geometry.N_z, spec.ny, spec.nx))
    for m, zm in enumerate(geometry.z):
        pts = np.stack([X, Y, np.full_like(X, zm)], axis=-1)
        out[m] = phantom.initial_pressure(pts)
    return out


# -- commands ----------------------------------------------------------------

def _exact_means(phantom, geometry, r=None, threads=1):
    r = geometry.r if r is None else r
    if threads == 1:
        return exact_means_stack(phantom, geometry, r=r)
    from concurrent.futures import ThreadPoolExecutor

    out = np.zeros((geometry.N_sigma, geometry.N_z, np.size(r)))

    def fill(l):
        out[l] = circular_means_exact(phantom, geometry.sigmas[l], geometry.z, r, geometry.R)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fill, range(geometry.N_sigma)))
    return out


def run_simulate(cfg: ExperimentConfig, threads: int | None = None) -> dict:
    """Write clean (and noisy) sinograms plus ground-truth means to ``cfg.output_dir``."""
    threads = thread_count() if threads is None else threads
    phantom = cfg.phantom()
    g = cfg.geometry
    report = geometry_check(phantom, g)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    clean = simulate_sinogram(phantom, g, threads=threads)
    t_sim = time.perf_counter() - t0
    verdict = report.verdict.value
    written = {"sinogram": io.write_sinogram(out / "sinogram.bin", clean, verdict=verdict)}
    if cfg.noise_level > 0:
        noisy = add_noise(clean, cfg.noise_level, cfg.seed)
        written["noisy"] = io.write_sinogram(
            out / "sinogram_noisy.bin", noisy, verdict=verdict, noise=cfg.noise_level, seed=cfg.seed
        )
    t0 = time.perf_counter()
    truth = CircularMeansStack(g, _exact_means(phantom, g, threads=threads), method="exact")
    t_exact = time.perf_counter() - t0
    written["means_exact"] = io.write_means(out / "means_exact.bin", truth, verdict=verdict)
    copy = out / "phantom.txt"
    if Path(cfg.phantom_path).resolve() != copy.resolve():
        shutil.copyfile(cfg.phantom_path, copy)
    return {"verdict": verdict, "admissible": sorted(report.admissible), "files": written,
            "time_simulate": t_sim, "time_exact_means": t_exact}


def _same_geometry(a: ScanGeometry, b: ScanGeometry, what: str):
    if a != b:
        diff = [k for k in ScanGeometry.FIELDS if getattr(a, k) != getattr(b, k)]
        raise io.HeaderError(f"geometry header mismatch with {what}: fields {', '.join(diff)}")


def run_reconstruct(cfg: ExperimentConfig, data_dir=None, skip_stage1: bool = False,
                    threads: int | None = None) -> MetricsReport:
    """Stage 1 for every detector position, stage 2 for every height, then metrics.

    Reads the files written by :func:`run_simulate` from ``data_dir`` (default:
    the output directory) and writes results to the output directory.
    """
    threads = thread_count() if threads is None else threads
    out = Path(cfg.output_dir)
    data_dir = out if data_dir is None else Path(data_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = MetricsReport()
    truth_path = data_dir / "means_exact.bin"
    truth = io.read_means(truth_path) if truth_path.exists() else None
    phantom = None
    if cfg.phantom_path is not None:
        phantom = cfg.phantom()
    elif (data_dir / "phantom.txt").exists():
        phantom = parse_phantom((data_dir / "phantom.txt").read_text().splitlines())

    method = cfg.method.method
    if skip_stage1:
        if truth is None:
            raise ConfigError(f"--skip-stage1 needs ground-truth means at {truth_path}")
        g = truth.geometry
        means = truth
        metrics.update(method="exact", stage1_skipped=1)
    else:
        source = data_dir / ("sinogram_noisy.bin" if cfg.noise_level > 0 else "sinogram.bin")
        if not source.exists():
            raise ConfigError(f"missing sinogram {source}; run 'simulate' first")
        stack = io.read_sinogram(source)
        g = stack.geometry
        if truth is not None:
            _same_geometry(g, truth.geometry, truth_path.name)
        if phantom is not None:
            report = geometry_check(phantom, g)
            metrics.update(verdict=report.verdict.value)
            if method.value not in report.admissible:
                raise PreconditionError(
                    f"method {method.value} is not admissible for the {report.verdict.value} "
                    f"geometry (admissible: {', '.join(sorted(report.admissible))})"
                )
        t0 = time.perf_counter()
        means, info = reconstruct_stack(stack, cfg.method, threads=threads)
        metrics.update(wall_time_stage1=time.perf_counter() - t0)
        metrics.update(**info)
        io.write_means(out / f"means_{method.value}.bin", means)
        ref = None
        if truth is not None and means.r_max == truth.r_max and means.data.shape == truth.data.shape:
            ref = truth.data
        elif phantom is not None:
            ref = _exact_means(phantom, g, r=means.r, threads=threads)
        if ref is not None:
            metrics.update("means_", **_metric_fields(means.data, ref))

    t0 = time.perf_counter()
    volume = reconstruct_volume(means, cfg.volume_spec, threads=threads)
    metrics.update(wall_time_stage2=time.perf_counter() - t0)
    io.write_volume(out / "volume.bin", volume, g)
    if cfg.pgm_every > 0:
        io.write_pgm_slices(out / "slices", volume, range(0, g.N_z, cfg.pgm_every))
    if phantom is not None:
        ref = phantom_on_grid(phantom, g, cfg.volume_spec)
        metrics.update("volume_", **_metric_fields(volume.values, ref, volume.inside))
    (out / "metrics.txt").write_text(metrics.to_text())
    return metrics


def _metric_fields(a, b, mask=None) -> dict:
    m = compute_metrics(a, b, mask)
    fields = {"relative_l2": m["relative_l2"], "rmse": m["rmse"], "psnr": m["psnr"]}
    if m["undefined"]:
        fields["undefined"] = 1
    return fields


def benchmark_phantom(geometry: ScanGeometry) -> Phantom:
    """Smooth ball on the rotation axis, so every detector sees the same data."""
    return Phantom((Absorber((0.0, 0.0, 0.5 * geometry.H), 0.5 * geometry.R, 1.0, Profile.SMOOTH_BUMP),))


def run_benchmark(base_n: int = 24, steps: int = 3, method: str = "sine", threads: int = 1,
                  base: ScanGeometry | None = None, repeats: int = 3) -> MetricsReport:
    """Time the two reconstruction stages at ``N = base_n * 2^i`` for ``i < steps``
    with ``N_sigma = N_z = N_t = N_r = N`` and ``N x N`` pixels per slice.

    Only the reconstruction is timed, best of ``repeats`` runs. The fitted
    log-log slope of time against ``N`` is reported as
    ``flop_scaling_exponent`` (``None`` for a single size).
    """
    if base_n < 16:
        raise ConfigError("benchmark base N must be at least 16")
    if steps < 1:
        raise ConfigError("benchmark needs at least one size")
    base = base or ScanGeometry()
    report = MetricsReport()
    sizes, times = [], []
    for i in range(steps):
        n = base_n * 2**i
        g = base.replace(N_sigma=n, N_z=n + n % 2, N_t=n, N_r=n)
        phantom = benchmark_phantom(g)
        row = simulate_slice(phantom, g, 0)
        stack = SinogramStack(g, np.broadcast_to(row, (g.N_sigma,) + row.shape).copy())
        exact = circular_means_exact(phantom, 0.0, g.z, g.r, g.R)
        best1 = best2 = math.inf
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            means, _ = reconstruct_stack(stack, Stage1Config(Method(method)), threads=threads)
            t1 = time.perf_counter()
            reconstruct_volume(means, VolumeSpec(n, n), threads=threads)
            t2 = time.perf_counter()
            best1, best2 = min(best1, t1 - t0), min(best2, t2 - t1)
        sizes.append(n)
        times.append(best1 + best2)
        rel = compute_metrics(means.data[0], exact)["relative_l2"]
        report.update(f"N{n}_", time_stage1=best1, time_stage2=best2, time_total=best1 + best2,
                      means_relative_l2=rel)
        log.info("N=%d stage1 %.3fs stage2 %.3fs", n, best1, best2)
    slope = None
    if len(sizes) > 1:
        slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    report.update(sizes=",".join(map(str, sizes)), flop_scaling_exponent=slope, threads=threads)
    return report
