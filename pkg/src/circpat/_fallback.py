"""Pure numpy implementations of the hot loops (used when the extension is absent)."""
from __future__ import annotations

import numpy as np

UNIFORM = 0
BUMP = 1


def _profile(rho, radius, amp, kind):
    inside = rho < radius
    if kind == UNIFORM:
        return np.where(inside, amp, 0.0)
    q = 1.0 - (rho / radius) ** 2
    return np.where(inside, amp * q * q, 0.0)


def circle_pressure_mean(centers, radii, amps, kinds, origin, r_det, z, t, n_alpha):
    """Periodic-trapezoid average over a horizontal detector circle of the
    radial d'Alembert pressure of every absorber.

    Returns an array of shape ``(len(z), len(t))``.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    z = np.asarray(z, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros((z.size, t.size))
    if centers.shape[0] == 0:
        return out
    alpha = 2.0 * np.pi * np.arange(n_alpha) / n_alpha
    px = origin[0] + r_det * np.cos(alpha)
    py = origin[1] + r_det * np.sin(alpha)
    for b in range(centers.shape[0]):
        cx, cy, cz = centers[b]
        a, amp, kind = radii[b], amps[b], int(kinds[b])
        horiz2 = (px - cx) ** 2 + (py - cy) ** 2
        for m, zm in enumerate(z):
            d = np.sqrt(horiz2 + (zm - cz) ** 2)[:, None]
            if np.any(d == 0.0):
                raise ZeroDivisionError("detector node coincides with an absorber centre")
            minus = d - t[None, :]
            plus = d + t[None, :]
            p = minus * _profile(np.abs(minus), a, amp, kind)
            p += plus * _profile(plus, a, amp, kind)
            p /= 2.0 * d
            out[m] += p.mean(axis=0)
    return out


def backproject(q, idx, frac, out):
    """Accumulate linearly interpolated filtered projections into pixels.

    ``q`` has shape ``(n_sigma, n_d, n_slices)``; ``idx``/``frac`` have shape
    ``(n_sigma, n_pix)``. ``out`` (``(n_pix, n_slices)``) is incremented by the
    mean over ``sigma`` of the interpolated values.
    """
    n_sigma = q.shape[0]
    acc = np.zeros_like(out)
    for s in range(n_sigma):
        i = idx[s]
        w = frac[s][:, None]
        acc += (1.0 - w) * q[s, i, :] + w * q[s, i + 1, :]
    out += acc / n_sigma
    return out
