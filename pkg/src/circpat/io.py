"""Binary grid files with plain-text sidecar headers, and PGM slice export.

A grid ``name.bin`` holds little-endian float64 values in C order; the sidecar
``name.hdr`` has one ``key=value`` per line, including every scan-geometry
field, ``kind`` and ``shape``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .forward import CircularMeansStack, ScanGeometry, SinogramStack
from .stage2 import VolumeGrid

__all__ = [
    "HeaderError",
    "header_path",
    "write_grid",
    "read_grid",
    "read_header",
    "parse_header",
    "geometry_from_header",
    "write_sinogram",
    "read_sinogram",
    "write_means",
    "read_means",
    "write_volume",
    "read_volume",
    "write_pgm",
    "write_pgm_slices",
]

_DTYPE = np.dtype("<f8")
_INT_FIELDS = {"N_sigma", "N_z", "N_t", "N_r", "n_alpha"}


class HeaderError(ValueError):
    """Missing, malformed or inconsistent header."""


def header_path(path) -> Path:
    return Path(path).with_suffix(".hdr")


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def write_grid(path, data, header: dict) -> Path:
    """Write ``data`` to ``path`` and its header next to it."""
    path = Path(path)
    data = np.ascontiguousarray(data, dtype=_DTYPE)
    path.write_bytes(data.tobytes(order="C"))
    lines = {"shape": data.shape, "dtype": "float64-le", **header}
    text = "".join(f"{k}={_format_value(v)}\n" for k, v in lines.items())
    header_path(path).write_text(text)
    return path


def parse_header(text: str) -> dict:
    header = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise HeaderError(f"header line {lineno} is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        header[key.strip()] = value.strip()
    return header


def read_header(path) -> dict:
    hdr = header_path(path)
    if not hdr.exists():
        raise HeaderError(f"missing header {hdr}")
    return parse_header(hdr.read_text())


def read_grid(path):
    """Return ``(array, header)``; the array shape comes from the header."""
    header = read_header(path)
    try:
        shape = tuple(int(s) for s in header["shape"].split(",") if s)
    except (KeyError, ValueError):
        raise HeaderError(f"{header_path(path)}: bad or missing shape") from None
    raw = np.frombuffer(Path(path).read_bytes(), dtype=_DTYPE)
    if raw.size != int(np.prod(shape)):
        raise HeaderError(f"{path}: {raw.size} values on disk, header says shape {shape}")
    return raw.reshape(shape).astype(float), header


def geometry_from_header(header: dict) -> ScanGeometry:
    values = {}
    for name in ScanGeometry.FIELDS:
        if name not in header:
            raise HeaderError(f"header lacks geometry field {name}")
        try:
            values[name] = int(header[name]) if name in _INT_FIELDS else float(header[name])
        except ValueError:
            raise HeaderError(f"header field {name}={header[name]!r} is not numeric") from None
    return ScanGeometry(**values)


def _expect_kind(header, kind, path):
    if header.get("kind") != kind:
        raise HeaderError(f"{path}: expected kind={kind}, found kind={header.get('kind')}")


def write_sinogram(path, stack: SinogramStack, **extra) -> Path:
    return write_grid(path, stack.data, {"kind": "sinogram", **stack.geometry.to_dict(), **extra})


def read_sinogram(path) -> SinogramStack:
    data, header = read_grid(path)
    _expect_kind(header, "sinogram", path)
    return SinogramStack(geometry_from_header(header), data)


def write_means(path, stack: CircularMeansStack, **extra) -> Path:
    header = {"kind": "means", **stack.geometry.to_dict(), "method": stack.method, "r_max": float(stack.r_max)}
    return write_grid(path, stack.data, {**header, **extra})


def read_means(path) -> CircularMeansStack:
    data, header = read_grid(path)
    _expect_kind(header, "means", path)
    g = geometry_from_header(header)
    return CircularMeansStack(g, data, r_max=float(header.get("r_max", g.r_det)), method=header.get("method", "exact"))


def write_volume(path, volume: VolumeGrid, geometry: ScanGeometry | None = None, **extra) -> Path:
    header = {"kind": "volume", "extent": float(volume.extent), "nx": volume.nx, "ny": volume.ny}
    if geometry is not None:
        header.update(geometry.to_dict())
    else:
        header.update(N_z=volume.z.size, z0=float(volume.z[0]) if volume.z.size else 0.0)
    return write_grid(path, volume.values, {**header, **extra})


def read_volume(path) -> VolumeGrid:
    data, header = read_grid(path)
    _expect_kind(header, "volume", path)
    if all(name in header for name in ScanGeometry.FIELDS):
        z = geometry_from_header(header).z
    else:
        z = float(header.get("z0", 0.0)) + np.arange(data.shape[0], dtype=float)
    return VolumeGrid(float(header["extent"]), z, data)


def write_pgm(path, image, comment: str = "") -> tuple[float, float]:
    """8-bit binary PGM with min-max windowing; returns ``(lo, hi)``.

    The window is stated in the comment line so grey levels can be mapped
    back to pressure values.
    """
    image = np.asarray(image, dtype=float)
    lo, hi = float(image.min()), float(image.max())
    span = hi - lo
    if span > 0:
        pix = np.rint((image - lo) / span * 255.0)
    else:
        pix = np.zeros_like(image)
    pix = np.clip(pix, 0, 255).astype(np.uint8)
    note = f"# window min={lo!r} max={hi!r}" + (f" {comment}" if comment else "")
    head = f"P5\n{note}\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    # row 0 of the array is y = -R; PGM rows run top-down, so flip
    Path(path).write_bytes(head + pix[::-1].tobytes())
    return lo, hi


def write_pgm_slices(directory, volume: VolumeGrid, indices=None) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    indices = range(volume.values.shape[0]) if indices is None else indices
    written = []
    for m in indices:
        path = directory / f"slice_{m:04d}.pgm"
        write_pgm(path, volume.values[m], comment=f"z={float(volume.z[m])!r}")
        written.append(path)
    return written
