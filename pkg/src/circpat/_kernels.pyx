# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; same contracts as :mod:`circpat._fallback`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, fabs, ceil, floor, M_PI

cnp.import_array()

cdef enum:
    UNIFORM = 0


cdef inline double _profile(double rho, double radius, double amp, cnp.int64_t kind) noexcept nogil:
    cdef double q
    if rho >= radius:
        return 0.0
    if kind == UNIFORM:
        return amp
    q = 1.0 - (rho / radius) * (rho / radius)
    return amp * q * q


def circle_pressure_mean(centers, radii, amps, kinds, origin, double r_det, z, t, int n_alpha):
    cdef double[:, ::1] c = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef double[::1] amp = np.ascontiguousarray(amps, dtype=np.float64)
    cdef cnp.int64_t[::1] kind = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t nz = zz.shape[0], nt = tt.shape[0], nb = c.shape[0]
    out_arr = np.zeros((nz, nt))
    cdef double[:, ::1] out = out_arr
    if nb == 0 or nt == 0:
        return out_arr
    cdef double ox = origin[0], oy = origin[1]
    cdef double t0 = tt[0]
    cdef double dt = tt[1] - tt[0] if nt > 1 else 1.0
    cdef double[::1] px = np.empty(n_alpha), py = np.empty(n_alpha)
    cdef Py_ssize_t i, b, m, n, lo, hi
    cdef double a, h2, d, s, tn, inv, dz
    cdef int bad = 0
    for i in range(n_alpha):
        px[i] = ox + r_det * cos(2.0 * M_PI * i / n_alpha)
        py[i] = oy + r_det * sin(2.0 * M_PI * i / n_alpha)
    with nogil:
        for b in range(nb):
            a = rad[b]
            for m in range(nz):
                dz = zz[m] - c[b, 2]
                for i in range(n_alpha):
                    h2 = (px[i] - c[b, 0]) ** 2 + (py[i] - c[b, 1]) ** 2
                    d = sqrt(h2 + dz * dz)
                    if d == 0.0:
                        bad = 1
                        break
                    inv = 1.0 / (2.0 * d * n_alpha)
                    # outgoing term: nonzero only while |d - t| < a
                    lo = <Py_ssize_t>ceil((d - a - t0) / dt)
                    hi = <Py_ssize_t>floor((d + a - t0) / dt)
                    if lo < 0:
                        lo = 0
                    if hi > nt - 1:
                        hi = nt - 1
                    for n in range(lo, hi + 1):
                        tn = tt[n]
                        s = d - tn
                        out[m, n] += s * _profile(fabs(s), a, amp[b], kind[b]) * inv
                    # incoming term: only when the node lies inside the support
                    if d < a:
                        for n in range(nt):
                            s = d + tt[n]
                            if s >= a:
                                break
                            out[m, n] += s * _profile(s, a, amp[b], kind[b]) * inv
                if bad:
                    break
            if bad:
                break
    if bad:
        raise ZeroDivisionError("detector node coincides with an absorber centre")
    return out_arr


def backproject(q, idx, frac, out):
    cdef double[:, :, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, ::1] fv = np.ascontiguousarray(frac, dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t ns = qv.shape[0], npix = iv.shape[1], nsl = qv.shape[2]
    cdef Py_ssize_t s, p, k, j
    cdef double w, scale = 1.0 / ns
    with nogil:
        for s in range(ns):
            for p in range(npix):
                j = iv[s, p]
                w = fv[s, p]
                for k in range(nsl):
                    ov[p, k] += scale * ((1.0 - w) * qv[s, j, k] + w * qv[s, j + 1, k])
    return out
