"""Synthetic phantoms and the analytic forward model.

Sound speed is 1 throughout. The detector circle for angle ``sigma`` and
height ``z`` is centred at ``(R cos sigma, R sin sigma, z)`` and lies in the
horizontal plane.
"""
from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Profile",
    "Absorber",
    "Phantom",
    "ScanGeometry",
    "SinogramStack",
    "CircularMeansStack",
    "Verdict",
    "GeometryReport",
    "GeometryError",
    "SingularEvaluationError",
    "TruncationWarning",
    "geometry_check",
    "pressure_point",
    "circular_detector_signal",
    "simulate_slice",
    "simulate_sinogram",
    "circular_means_exact",
    "exact_means_stack",
    "add_noise",
]


class GeometryError(ValueError):
    """Phantom/geometry combination violates the admissible configurations."""

    def __init__(self, constraint: str):
        super().__init__(constraint)
        self.constraint = constraint


class SingularEvaluationError(ValueError):
    """Pressure requested at the centre of a discontinuous absorber."""


class TruncationWarning(RuntimeWarning):
    """Recorded signal has not decayed by the end of the time window."""


class Profile(str, enum.Enum):
    UNIFORM_BALL = "UniformBall"
    SMOOTH_BUMP = "SmoothBump"

    @property
    def code(self) -> int:
        return 0 if self is Profile.UNIFORM_BALL else 1


@dataclass(frozen=True)
class Absorber:
    center: tuple[float, float, float]
    radius: float
    amplitude: float = 1.0
    profile: Profile = Profile.UNIFORM_BALL

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "profile", Profile(self.profile))
        if len(self.center) != 3:
            raise ValueError("absorber centre must be a 3-vector")
        if not self.radius > 0:
            raise ValueError("absorber radius must be positive")

    def value(self, rho):
        """Radial profile ``f_n(rho)``."""
        rho = np.asarray(rho, dtype=float)
        inside = rho < self.radius
        if self.profile is Profile.UNIFORM_BALL:
            return np.where(inside, self.amplitude, 0.0)
        q = 1.0 - (rho / self.radius) ** 2
        return np.where(inside, self.amplitude * q * q, 0.0)

    def derivative(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.profile is Profile.UNIFORM_BALL:
            return np.zeros_like(rho)
        q = 1.0 - (rho / self.radius) ** 2
        return np.where(rho < self.radius, -4.0 * self.amplitude * rho * q / self.radius**2, 0.0)


@dataclass(frozen=True)
class Phantom:
    absorbers: tuple[Absorber, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "absorbers", tuple(self.absorbers))

    def __len__(self):
        return len(self.absorbers)

    def shifted(self, dz: float) -> "Phantom":
        return Phantom(
            tuple(
                Absorber((a.center[0], a.center[1], a.center[2] + dz), a.radius, a.amplitude, a.profile)
                for a in self.absorbers
            )
        )

    def initial_pressure(self, x):
        """Evaluate ``f`` at points ``x`` of shape ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for a in self.absorbers:
            out = out + a.value(np.linalg.norm(x - np.asarray(a.center), axis=-1))
        return out

    def as_arrays(self):
        n = len(self.absorbers)
        centers = np.array([a.center for a in self.absorbers], dtype=float).reshape(n, 3)
        radii = np.array([a.radius for a in self.absorbers], dtype=float)
        amps = np.array([a.amplitude for a in self.absorbers], dtype=float)
        kinds = np.array([a.profile.code for a in self.absorbers], dtype=np.int64)
        return centers, radii, amps, kinds


@dataclass(frozen=True)
class ScanGeometry:
    """Physical and discretisation parameters of a scan.

    Sample grids follow ``sigma_l = 2 pi l / N_sigma``, ``z_m = H m / N_z``,
    ``t_n = T n / N_t`` and ``r_n = r_det n / N_r`` (zero-based ``l, m, n``).
    """

    R: float = 0.4
    r_det: float = 0.8
    H: float = 3.75
    T: float = 4.0
    N_sigma: int = 200
    N_z: int = 300
    N_t: int = 320
    N_r: int = 130
    n_alpha: int = 512

    FIELDS = ("R", "r_det", "H", "T", "N_sigma", "N_z", "N_t", "N_r", "n_alpha")

    def __post_init__(self):
        for name in ("R", "H", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.r_det < 0:
            raise ValueError("r_det must be non-negative")
        for name in ("N_sigma", "N_z", "N_t", "N_r", "n_alpha"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))

    @property
    def sigmas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.N_sigma) / self.N_sigma

    @property
    def z(self) -> np.ndarray:
        return self.H * np.arange(self.N_z) / self.N_z

    @property
    def t(self) -> np.ndarray:
        return self.T * np.arange(self.N_t) / self.N_t

    @property
    def r(self) -> np.ndarray:
        return self.r_det * np.arange(self.N_r) / self.N_r

    @property
    def dz(self) -> float:
        return self.H / self.N_z

    @property
    def dt(self) -> float:
        return self.T / self.N_t

    def detector_origin(self, sigma: float) -> np.ndarray:
        return np.array([self.R * math.cos(sigma), self.R * math.sin(sigma), 0.0])

    def replace(self, **changes) -> "ScanGeometry":
        values = {name: getattr(self, name) for name in self.FIELDS}
        values.update(changes)
        return ScanGeometry(**values)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


@dataclass
class SinogramStack:
    """Detector data ``G[l, m, n]`` on the (sigma, z, t) grid."""

    geometry: ScanGeometry
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        g = self.geometry
        expected = (g.N_sigma, g.N_z, g.N_t)
        if self.data.shape != expected:
            raise ValueError(f"sinogram shape {self.data.shape} != {expected}")


@dataclass
class CircularMeansStack:
    """Circular means ``F[l, m, n]`` on the (sigma, z, r) grid.

    ``r_max`` is the radius spanned by the radial grid; it equals ``r_det``
    except for the point-detector method where the expansion radius is used.
    """

    geometry: ScanGeometry
    data: np.ndarray = field(repr=False)
    r_max: float | None = None
    method: str = "exact"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.r_max is None:
            self.r_max = self.geometry.r_det
        g = self.geometry
        if self.data.ndim != 3 or self.data.shape[:2] != (g.N_sigma, g.N_z):
            raise ValueError(f"means shape {self.data.shape} incompatible with geometry")

    @property
    def r(self) -> np.ndarray:
        n = self.data.shape[2]
        return self.r_max * np.arange(n) / n


class Verdict(str, enum.Enum):
    ENCLOSING = "Enclosing"
    OUTSIDE = "Outside"
    INVALID = "Invalid"


@dataclass(frozen=True)
class GeometryReport:
    verdict: Verdict
    admissible: frozenset
    detail: str = ""


def _support_radius(phantom: Phantom) -> float:
    """Largest horizontal distance from the rotation axis reached by any support."""
    radius = 0.0
    for a in phantom.absorbers:
        radius = max(radius, math.hypot(a.center[0], a.center[1]) + a.radius)
    return radius


def geometry_check(phantom: Phantom, geometry: ScanGeometry) -> GeometryReport:
    """Classify the configuration as enclosing or outside.

    Raises
    ------
    GeometryError
        If neither admissible configuration applies; the message names the
        violated constraint.
    """
    R, r_det = geometry.R, geometry.r_det
    reach = _support_radius(phantom)
    if r_det >= 2 * R:
        if reach > R:
            raise GeometryError(
                f"support reaches radius {reach:.6g} > R = {R:.6g}; "
                "enclosing detectors require supp f inside B_R x IR"
            )
        return GeometryReport(
            Verdict.ENCLOSING,
            frozenset({"sine", "hankel", "naive"}),
            "object enclosed by the detector circles",
        )
    if r_det < R:
        if reach > R - r_det:
            raise GeometryError(
                f"support reaches radius {reach:.6g} > R - r_det = {R - r_det:.6g}; "
                "detectors outside the object require supp f inside B_(R - r_det) x IR"
            )
        # the point-detector smallness condition r_det <= R/10 is checked by stage 1
        return GeometryReport(
            Verdict.OUTSIDE, frozenset({"naive", "point"}), "detector circles outside the object"
        )
    raise GeometryError(
        f"r_det = {r_det:.6g} with R = {R:.6g} satisfies neither r_det < R nor r_det >= 2R"
    )


def _radial_pressure(absorber: Absorber, d, t):
    """Radial d'Alembert solution ``[(d-t) f(|d-t|) + (d+t) f(d+t)] / (2d)``."""
    d, t = np.broadcast_arrays(np.asarray(d, dtype=float), np.asarray(t, dtype=float))
    minus = d - t
    plus = d + t
    numer = minus * absorber.value(np.abs(minus)) + plus * absorber.value(plus)
    at_centre = d == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        p = numer / (2.0 * d)
    # at t = 0 both terms equal d f(d); return f itself rather than the rounded quotient
    p = np.where(t == 0.0, absorber.value(d), p)
    if np.any(at_centre):
        if absorber.profile is Profile.UNIFORM_BALL:
            raise SingularEvaluationError(
                "pressure at the centre of a UniformBall is undefined (discontinuous profile)"
            )
        tc = t[at_centre]
        p = np.where(at_centre, 0.0, p)
        p[at_centre] = absorber.value(tc) + tc * absorber.derivative(tc)
    return p


def pressure_point(phantom: Phantom, x, t):
    """Acoustic pressure at points ``x`` (``(..., 3)``) and times ``t`` >= 0."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    total = np.zeros(np.broadcast_shapes(x.shape[:-1], t.shape))
    for a in phantom.absorbers:
        d = np.linalg.norm(x - np.asarray(a.center), axis=-1)
        total = total + _radial_pressure(a, d, t)
    return total.item() if total.ndim == 0 else total


def circular_detector_signal(phantom: Phantom, sigma: float, z, t, geometry: ScanGeometry, n_alpha=None):
    """Detector reading ``G_sigma(z, t)``: mean pressure over the detector circle
    by the periodic trapezoid rule with ``n_alpha`` nodes."""
    n_alpha = geometry.n_alpha if n_alpha is None else int(n_alpha)
    alpha = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    origin = geometry.detector_origin(sigma)
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(z.shape, t.shape)
    zb, tb = np.broadcast_to(z, shape)[..., None], np.broadcast_to(t, shape)[..., None]
    pts = np.stack(
        np.broadcast_arrays(
            origin[0] + geometry.r_det * np.cos(alpha),
            origin[1] + geometry.r_det * np.sin(alpha),
            zb,
        ),
        axis=-1,
    )
    p = pressure_point(phantom, pts, tb)
    value = np.mean(p, axis=-1)
    return value.item() if np.ndim(value) == 0 else value


def simulate_slice(phantom: Phantom, geometry: ScanGeometry, index: int) -> np.ndarray:
    """Detector data ``G[index]`` of shape ``(N_z, N_t)`` via the compiled kernel."""
    sigma = geometry.sigmas[index]
    centers, radii, amps, kinds = phantom.as_arrays()
    try:
        return kernels.circle_pressure_mean(
            centers, radii, amps, kinds, geometry.detector_origin(sigma), geometry.r_det,
            geometry.z, geometry.t, geometry.n_alpha,
        )
    except ZeroDivisionError as exc:
        raise SingularEvaluationError(str(exc)) from None


def simulate_sinogram(phantom: Phantom, geometry: ScanGeometry, indices: Iterable[int] | None = None,
                      check: bool = True, threads: int | None = None) -> SinogramStack:
    """Fill the sinogram stack; detector positions outside ``indices`` stay zero.

    Detector positions are simulated concurrently on up to ``threads``
    workers (default: :func:`circpat.kernels.thread_count`).
    """
    if check:
        geometry_check(phantom, geometry)
    data = np.zeros((geometry.N_sigma, geometry.N_z, geometry.N_t))
    if len(phantom):
        idx = list(range(geometry.N_sigma) if indices is None else indices)
        threads = kernels.thread_count() if threads is None else max(1, int(threads))

        def fill(l):
            data[l] = simulate_slice(phantom, geometry, l)

        if threads == 1:
            for l in idx:
                fill(l)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(fill, idx))
        peak = np.abs(data).max()
        tail = np.abs(data[..., -1]).max()
        if peak > 0 and tail > 1e-9 * peak:
            warnings.warn(
                f"signal at t = {geometry.t[-1]:.4g} is {tail / peak:.2e} of the peak; "
                "T is too short for the phantom",
                TruncationWarning,
                stacklevel=2,
            )
    return SinogramStack(geometry, data)


def _gauss_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def circular_means_exact(phantom: Phantom, sigma: float, z, r, R: float, n_alpha: int = 64):
    """Circular means ``F_sigma(z, r)`` of the initial pressure.

    Each absorber meets a circle in a single arc; the arc end points are found
    in closed form and the profile is integrated over the arc with an
    ``n_alpha``-point Gauss-Legendre rule, so discontinuous profiles are handled
    without quadrature error. Returns an array of shape ``(len(z), len(r))``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    out = np.zeros((z.size, r.size))
    xg, wg = _gauss_nodes(n_alpha)
    cx, cy = R * math.cos(sigma), R * math.sin(sigma)
    for a in phantom.absorbers:
        dz = z[:, None] - a.center[2]
        D = math.hypot(cx - a.center[0], cy - a.center[1])
        sec2 = a.radius**2 - dz**2  # squared radius of the planar section
        rr = np.broadcast_to(r[None, :], out.shape)
        with np.errstate(invalid="ignore", divide="ignore"):
            gamma = (D**2 + rr**2 - sec2) / (2.0 * D * rr)
        theta = np.arccos(np.clip(gamma, -1.0, 1.0))
        if D == 0.0:
            theta = np.where(rr**2 < sec2, np.pi, 0.0)
        theta = np.where(sec2 > 0, theta, 0.0)
        phi = theta[..., None] * xg
        rho2 = dz[..., None] ** 2 + D**2 + rr[..., None] ** 2 - 2.0 * D * rr[..., None] * np.cos(phi)
        vals = a.value(np.sqrt(np.maximum(rho2, 0.0)))
        # every Gauss node is interior to the arc; skip the round-off-prone test
        if a.profile is Profile.UNIFORM_BALL:
            vals = np.full_like(vals, a.amplitude)
        arc = theta * (vals @ wg) / (2.0 * np.pi)
        centre = rr == 0.0
        if np.any(centre):
            rho0 = np.sqrt(np.broadcast_to(dz**2, out.shape) + D**2)
            arc = np.where(centre, a.value(rho0), arc)
        out += arc
    return out


def exact_means_stack(phantom: Phantom, geometry: ScanGeometry, indices: Sequence[int] | None = None,
                      r=None, n_alpha: int = 64) -> np.ndarray:
    """Ground-truth means on the ``(sigma, z, r)`` grid (``r`` defaults to the stage-1 grid)."""
    r = geometry.r if r is None else np.asarray(r, dtype=float)
    idx = range(geometry.N_sigma) if indices is None else indices
    out = np.zeros((geometry.N_sigma, geometry.N_z, r.size))
    for l in idx:
        out[l] = circular_means_exact(phantom, geometry.sigmas[l], geometry.z, r, geometry.R, n_alpha)
    return out


def add_noise(stack: SinogramStack, level: float, seed: int) -> SinogramStack:
    """Add i.i.d. Gaussian noise with standard deviation ``level * max|data|``."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return SinogramStack(stack.geometry, stack.data.copy())
    rng = np.random.default_rng(seed)
    scale = level * np.abs(stack.data).max()
    noise = rng.standard_normal(stack.data.shape)
    return SinogramStack(stack.geometry, stack.data + scale * noise)


def parse_phantom(lines: Iterable[str]) -> Phantom:
    """Parse ``cx cy cz radius amplitude profile`` lines (``#`` starts a comment)."""
    absorbers = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        cx, cy, cz, rad, amp = (float(p) for p in parts[:5])
        absorbers.append(Absorber((cx, cy, cz), rad, amp, Profile(parts[5])))
    return Phantom(tuple(absorbers))


def format_phantom(phantom: Phantom) -> str:
    rows = ["# cx cy cz radius amplitude profile"]
    for a in phantom.absorbers:
        rows.append(
            f"{a.center[0]!r} {a.center[1]!r} {a.center[2]!r} {a.radius!r} {a.amplitude!r} {a.profile.value}"
        )
    return "\n".join(rows) + "\n"
