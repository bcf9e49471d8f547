"""Hot-loop selection: compiled Cython core when built, numpy fallback otherwise.

Set ``CIRCPAT_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
circle_pressure_mean = _fallback.circle_pressure_mean
backproject = _fallback.backproject

if os.environ.get("CIRCPAT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        circle_pressure_mean = _kernels.circle_pressure_mean
        backproject = _kernels.backproject


def thread_count() -> int:
    """Worker count, capped by ``CIRCPAT_THREADS`` when it is set."""
    n = os.cpu_count() or 1
    cap = os.environ.get("CIRCPAT_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"CIRCPAT_THREADS must be an integer, got {cap!r}") from None
    return n


__all__ = ["BACKEND", "circle_pressure_mean", "backproject", "thread_count"]
