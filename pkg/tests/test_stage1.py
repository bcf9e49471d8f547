import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special as sp

from conftest import rel_l2
from circpat.forward import Absorber, Phantom, Profile, ScanGeometry, SinogramStack, simulate_sinogram
from circpat.special import hankel2_0, j0_zeros
from circpat.stage1 import (
    Method,
    PreconditionError,
    Stage1Config,
    naive_grid,
    reconstruct_hankel,
    reconstruct_naive,
    reconstruct_point_detector,
    reconstruct_sine,
    reconstruct_stack,
    series_coefficients,
)

TINY = ScanGeometry(N_sigma=4, N_z=16, N_t=24, N_r=10, n_alpha=32)
TINY_POINT = TINY.replace(r_det=0.02)


def _run(method, G, geometry):
    cfg = Stage1Config(method)
    if method == "sine":
        return reconstruct_sine(G, geometry, cfg)
    if method == "hankel":
        return reconstruct_hankel(G, geometry, cfg)
    if method == "naive":
        return reconstruct_naive(G, geometry, cfg)[0]
    return reconstruct_point_detector(G, geometry, cfg)[0]


def _geometry_for(method):
    return TINY_POINT if method == "point" else TINY


# -- trivial and structural properties ---------------------------------------

@pytest.mark.parametrize("method", ["sine", "hankel", "naive", "point"])
def test_zero_data_gives_zero(method):
    g = _geometry_for(method)
    out = _run(method, np.zeros((g.N_z, g.N_t)), g)
    assert out.shape == (g.N_z, g.N_r)
    assert np.all(out == 0.0)


@pytest.mark.parametrize("method", ["sine", "hankel", "naive", "point"])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(method, seed, a, b):
    g = _geometry_for(method)
    rng = np.random.default_rng(seed)
    G1, G2 = rng.standard_normal((2, g.N_z, g.N_t))
    lhs = _run(method, a * G1 + b * G2, g)
    rhs = a * _run(method, G1, g) + b * _run(method, G2, g)
    scale = abs(a) * np.abs(_run(method, G1, g)).max() + abs(b) * np.abs(_run(method, G2, g)).max()
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(scale, 1e-300)


def test_batched_matches_single():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((3, TINY.N_z, TINY.N_t))
    batch = reconstruct_sine(G, TINY)
    for i in range(3):
        np.testing.assert_allclose(batch[i], reconstruct_sine(G[i], TINY), rtol=0, atol=1e-13 * np.abs(batch).max())


def test_wrong_shape_rejected():
    with pytest.raises(ValueError):
        reconstruct_sine(np.zeros((TINY.N_z + 1, TINY.N_t)), TINY)


@pytest.mark.parametrize("fn", [reconstruct_sine, reconstruct_hankel])
@pytest.mark.parametrize("r_det, verdict", [(0.2, "Outside"), (0.6, "Invalid")])
def test_stable_series_refuse_non_enclosing(fn, r_det, verdict):
    g = TINY.replace(r_det=r_det)
    with pytest.raises(PreconditionError, match=verdict):
        fn(np.zeros((g.N_z, g.N_t)), g)


def test_config_validation():
    with pytest.raises(ValueError):
        Stage1Config(Method.NAIVE, guard_eps=0.0)
    with pytest.raises(ValueError):
        Stage1Config(Method.POINT, K=0)
    assert Stage1Config("hankel").method is Method.HANKEL


# -- symmetry ----------------------------------------------------------------

@pytest.mark.filterwarnings("ignore::circpat.forward.TruncationWarning")
@pytest.mark.parametrize("method", ["sine", "hankel"])
def test_cyclic_z_shift_equivariance(method):
    g = ScanGeometry(H=3.75, T=1.2, N_sigma=1, N_z=60, N_t=48, N_r=24, n_alpha=64)
    shift = g.N_z // 10  # dz = H/10
    ball = Absorber((0.1, -0.05, 0.5 * g.H), 0.1, 1.0, Profile.SMOOTH_BUMP)
    moved = Absorber((0.1, -0.05, 0.5 * g.H + shift * g.dz), 0.1, 1.0, Profile.SMOOTH_BUMP)
    G0 = simulate_sinogram(Phantom((ball,)), g).data[0]
    G1 = simulate_sinogram(Phantom((moved,)), g).data[0]
    F0 = _run(method, G0, g)
    F1 = _run(method, G1, g)
    assert np.abs(F1 - np.roll(F0, shift, axis=0)).max() <= 1e-6 * np.abs(F0).max()


def test_exact_roll_of_data():
    rng = np.random.default_rng(11)
    G = rng.standard_normal((TINY.N_z, TINY.N_t))
    F = reconstruct_hankel(G, TINY)
    Fr = reconstruct_hankel(np.roll(G, 5, axis=0), TINY)
    np.testing.assert_allclose(Fr, np.roll(F, 5, axis=0), rtol=0, atol=1e-12 * np.abs(F).max())


@pytest.mark.parametrize("method", ["sine", "hankel"])
def test_rotation_invariant_phantom_same_for_every_detector(method):
    g = ScanGeometry(N_sigma=8, N_z=40, N_t=64, N_r=24, n_alpha=64)
    phantom = Phantom((Absorber((0.0, 0.0, 1.8), 0.15, 1.0, Profile.SMOOTH_BUMP),))
    stack = simulate_sinogram(phantom, g)
    means, _ = reconstruct_stack(stack, Stage1Config(method))
    ref = means.data[0]
    for l in range(1, g.N_sigma):
        assert np.abs(means.data[l] - ref).max() <= 1e-10 * np.abs(ref).max()


# -- quotient method ---------------------------------------------------------

def test_naive_guard_count_is_data_independent():
    cfg = Stage1Config(Method.NAIVE, guard_eps=0.05)
    nodes, _ = naive_grid(TINY, cfg)
    expected = int(np.sum(np.abs(sp.j0(TINY.r_det * nodes)) < 0.05))
    rng = np.random.default_rng(0)
    for G in (np.zeros((TINY.N_z, TINY.N_t)), rng.standard_normal((TINY.N_z, TINY.N_t))):
        _, report = reconstruct_naive(G, TINY, cfg)
        assert report.guarded_nodes == expected
        assert report.n_nodes == 4 * TINY.N_r
    assert expected > 0


def test_naive_amplification_report():
    cfg = Stage1Config(Method.NAIVE, guard_eps=1e-6)
    nodes, _ = naive_grid(TINY, cfg)
    _, report = reconstruct_naive(np.zeros((TINY.N_z, TINY.N_t)), TINY, cfg)
    assert report.max_amplification == pytest.approx(np.max(1 / np.abs(sp.j0(TINY.r_det * nodes))), rel=1e-12)


def test_naive_grid_layout():
    nodes, w = naive_grid(TINY, Stage1Config(Method.NAIVE))
    v_max = j0_zeros(TINY.r_det, TINY.N_r).zeros[-1]
    assert nodes.size == 4 * TINY.N_r
    assert nodes[0] > 0 and nodes[-1] == pytest.approx(v_max)
    # trapezoid weights integrate linear functions exactly from 0
    assert np.sum(w * nodes) == pytest.approx(v_max**2 / 2, rel=1e-12)


# -- point-detector method ---------------------------------------------------

def test_point_refuses_large_detector():
    g = TINY.replace(r_det=0.05)  # > R/10
    with pytest.raises(PreconditionError, match="R/10"):
        reconstruct_point_detector(np.zeros((g.N_z, g.N_t)), g)


def test_point_refuses_short_r1():
    g = TINY.replace(r_det=0.0)
    with pytest.raises(PreconditionError, match="2R"):
        reconstruct_point_detector(np.zeros((g.N_z, g.N_t)), g, Stage1Config(Method.POINT, r1=0.5))
    g = TINY.replace(r_det=0.02)
    with pytest.raises(PreconditionError):
        reconstruct_point_detector(np.zeros((g.N_z, g.N_t)), g, Stage1Config(Method.POINT, K=10))


def test_point_report():
    g = TINY.replace(r_det=0.008)
    _, rep = reconstruct_point_detector(np.zeros((g.N_z, g.N_t)), g, Stage1Config(Method.POINT, K=100))
    assert rep.K == 100
    assert rep.r1 == pytest.approx(0.8)
    zeros = sp.jn_zeros(0, g.N_r) / 0.8
    assert rep.min_denominator == pytest.approx(np.min(np.abs(sp.j0(0.008 * zeros))), rel=1e-12)
    _, rep0 = reconstruct_point_detector(np.zeros((g.N_z, g.N_t)), g.replace(r_det=0.0))
    assert rep0.K is None and rep0.r1 == pytest.approx(2 * g.R) and rep0.min_denominator == 1.0


def test_point_stack_uses_r1_grid():
    g = TINY.replace(r_det=0.0)
    means, info = reconstruct_stack(SinogramStack(g, np.zeros((g.N_sigma, g.N_z, g.N_t))), Stage1Config("point"))
    assert means.r_max == pytest.approx(0.8)
    assert info["r1"] == pytest.approx(0.8)
    assert "min_denominator" in info


# -- weights and denominators on the benchmark table --------------------------

def test_hankel_denominator_bounded_away_from_zero(reference_geometry):
    table = j0_zeros(reference_geometry.r_det, reference_geometry.N_r)
    assert np.min(np.abs(hankel2_0(reference_geometry.r_det * table.zeros))) > 1e-3


@pytest.mark.parametrize("frac", [0.1, 0.4])
def test_sine_weights_bounded_by_asymptotic_envelope(reference_geometry, frac):
    """Weights ``v/(k^2+v^2) J0(r v)/J1(r_det v)^3`` at ``k = 0`` stay within 1.5x
    their large-``n`` envelope ``(pi/2) r_det^(3/2) / sqrt(r)``."""
    r_det = reference_geometry.r_det
    table = j0_zeros(r_det, reference_geometry.N_r)
    v = table.zeros[9:]
    r = frac * r_det
    w = np.abs(v / v**2 * sp.j0(r * v) / sp.j1(r_det * v) ** 3)
    assert np.all(w <= 1.5 * (math.pi / 2) * r_det**1.5 / math.sqrt(r))


# -- threads -----------------------------------------------------------------

@pytest.mark.parametrize("method", ["sine", "naive"])
def test_stack_independent_of_thread_count(method):
    g = TINY.replace(N_sigma=10)
    rng = np.random.default_rng(5)
    stack = SinogramStack(g, rng.standard_normal((g.N_sigma, g.N_z, g.N_t)))
    cfg = Stage1Config(method, chunk=3)
    a, _ = reconstruct_stack(stack, cfg, threads=1)
    b, _ = reconstruct_stack(stack, cfg, threads=4)
    assert a.data.tobytes() == b.data.tobytes()


# -- scale pin on one Fourier-Bessel mode -------------------------------------

def test_single_mode_coefficient_scale():
    from oracles import single_mode_coefficient, single_mode_signal

    a = 0.8
    g = ScanGeometry(R=0.4, r_det=a, H=1.0, T=60.0, N_sigma=1, N_z=4, N_t=4800, N_r=6)
    sig, _ = single_mode_signal(a, g.t)
    G = np.tile(sig, (g.N_z, 1))
    expected = single_mode_coefficient(a, g.H)
    for method in ("sine", "hankel"):
        c = series_coefficients(G, g, Stage1Config(method)).coeffs
        assert c[0, 0].real == pytest.approx(expected, rel=0.01)
        assert np.abs(c[0, 1:]).max() < 0.02 * expected


def test_oblique_mode_coefficients():
    """A ``k != 0`` mode pins the ``omega = sqrt(k^2 + v^2)`` dependence of the weights."""
    from oracles import two_mode_signal

    a, H = 0.8, 1.0
    g = ScanGeometry(R=0.4, r_det=a, H=H, T=30.0, N_sigma=1, N_z=8, N_t=2400, N_r=6)
    k = 2 * math.pi / H
    sig, c, v = two_mode_signal(a, k, g.t)
    G = np.cos(k * g.z)[:, None] * sig[None, :]
    # cos(kz) splits evenly between bins +1 and -1
    expected = np.array([c[i] * H * a**2 / 4 * sp.j1(a * v[i]) ** 2 for i in range(2)])
    for method in ("sine", "hankel"):
        coef = series_coefficients(G, g, Stage1Config(method)).coeffs
        for m in (1, -1):
            np.testing.assert_allclose(coef[m, :2], expected, rtol=0.02)
            assert np.abs(coef[m, 2:]).max() < 0.01 * np.abs(expected).max()
        assert np.abs(coef[0]).max() < 1e-10 * np.abs(expected).max()


# -- benchmark-scale invariants (slow) ----------------------------------------

SUBSET = slice(0, 200, 25)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="limited-data truncation error dominates at H=3.75, T=4; see decisions ledger")
def test_sine_hankel_consistency(benchmark_data):
    g = benchmark_data["geometry"]
    G = benchmark_data["clean"].data[SUBSET]
    sine = reconstruct_sine(G, g)
    hankel = reconstruct_hankel(G, g)
    assert rel_l2(sine, hankel) <= 0.05


@pytest.mark.slow
def test_naive_close_to_sine_on_clean_data(benchmark_data):
    g = benchmark_data["geometry"]
    G = benchmark_data["clean"].data[SUBSET]
    exact = benchmark_data["exact"].data[SUBSET]
    err_sine = rel_l2(reconstruct_sine(G, g), exact)
    err_naive = rel_l2(reconstruct_naive(G, g, Stage1Config(Method.NAIVE, guard_eps=0.05))[0], exact)
    assert err_naive <= 2 * err_sine
