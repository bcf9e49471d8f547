"""Compare the compiled kernels against the numpy fallback.

Times the two hot loops on full-sized inputs (one detector position for the
forward model, one slice of backprojection) and checks the results agree.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from circpat import _fallback
from circpat.forward import ScanGeometry
from circpat.stage2 import VolumeSpec, _Backprojector
from circpat.pipeline import benchmark_phantom

try:
    from circpat import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def forward_case(g):
    arrays = benchmark_phantom(g).as_arrays()
    origin = g.detector_origin(0.0)
    return lambda mod: mod.circle_pressure_mean(*arrays, origin, g.r_det, g.z, g.t, g.n_alpha)


def backproject_case(g, spec):
    bp = _Backprojector(g, g.N_r, g.r_det, spec)
    rng = np.random.default_rng(0)
    q = bp.filtered(rng.standard_normal((g.N_sigma, 1, g.N_r)))
    return lambda mod: mod.backproject(q, bp.idx, bp.frac, np.zeros((bp.idx.shape[1], 1)))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run: pip install -e . --no-build-isolation")
        return 1
    g = ScanGeometry()
    cases = {
        "circle_pressure_mean": forward_case(g),
        "backproject": backproject_case(g, VolumeSpec()),
    }
    print(f"{'kernel':<22}{'cython [s]':>12}{'python [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, case in cases.items():
        tc, a = best_of(lambda: case(_kernels), args.repeats)
        tp, b = best_of(lambda: case(_fallback), args.repeats)
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        print(f"{name:<22}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}{diff:>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
