import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mcmahon

from circpat.special import (
    DomainError,
    bessel_j0,
    bessel_j1,
    bessel_y0,
    hankel2_0,
    j0_zeros,
)

mp.mp.dps = 30


def test_j0_examples():
    assert bessel_j0(0.0) == 1.0
    assert bessel_j0(1.0) == pytest.approx(0.7651976865579666, rel=1e-14)
    assert abs(bessel_j0(2.404825557695773)) < 1e-12


def test_j1_examples():
    assert bessel_j1(0.0) == 0.0
    assert bessel_j1(1.0) == pytest.approx(0.4400505857449335, rel=1e-14)
    h = 1e-6
    fd = (bessel_j0(1.3 + h) - bessel_j0(1.3 - h)) / (2 * h)
    assert abs(-bessel_j1(1.3) - fd) < 1e-7


def test_y0_examples():
    assert bessel_y0(1.0) == pytest.approx(0.08825696421567697, rel=1e-12)
    assert bessel_y0(1e-6) < -8
    wronskian = bessel_j1(2.0) * bessel_y0(2.0) - bessel_j0(2.0) * float(mp.bessely(1, 2))
    assert abs(wronskian - 1 / math.pi) < 1e-10


def test_hankel_examples():
    h = hankel2_0(1.0)
    assert h.real == pytest.approx(0.7651976866, abs=1e-10)
    assert h.imag == pytest.approx(-0.0882569642, abs=1e-10)
    assert abs(hankel2_0(2.404825557695773).real) < 1e-12
    assert abs(hankel2_0(50.0)) == pytest.approx(math.sqrt(2 / (math.pi * 50)), rel=0.02)


@pytest.mark.parametrize("fn", [bessel_j0, bessel_j1])
def test_first_kind_rejects_non_finite(fn):
    for bad in (math.nan, math.inf):
        with pytest.raises(DomainError):
            fn(bad)


@pytest.mark.parametrize("fn", [bessel_y0, hankel2_0])
def test_second_kind_domain(fn):
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(DomainError):
            fn(bad)


def test_array_input_keeps_shape():
    x = np.linspace(0.1, 10, 7).reshape(7, 1)
    assert bessel_j0(x).shape == (7, 1)
    assert isinstance(bessel_j0(0.5), float)
    assert isinstance(hankel2_0(0.5), complex)


def test_zeros_examples():
    t = j0_zeros(1.0, 2)
    np.testing.assert_allclose(t.zeros, [2.404825557695773, 5.520078110286311], rtol=1e-14)
    assert j0_zeros(2.0, 1).zeros[0] == pytest.approx(1.2024127788478865, rel=1e-14)
    # the bare leading term (n - 1/4) pi is off by 1/(8 beta) ~ 4e-4 here
    assert abs(j0_zeros(1.0, 100).zeros[-1] - mcmahon(100)) < 1e-4
    assert abs(j0_zeros(1.0, 100).zeros[-1] - 99.75 * math.pi) < 5e-4


def test_zeros_table_invariants():
    t = j0_zeros(0.8, 130)
    assert np.all(np.diff(t.zeros) > 0)
    assert np.max(np.abs(bessel_j0(t.r_det * t.zeros))) < 1e-12
    assert np.all(np.abs(t.j1_at_zeros) > 0)
    gaps = t.r_det * np.diff(t.zeros)
    assert np.all(np.abs(gaps - math.pi) < 0.3)
    assert abs(gaps[-1] - math.pi) < abs(gaps[0] - math.pi)
    with pytest.raises(ValueError):
        t.zeros[0] = 1.0


def test_zeros_match_mpmath():
    t = j0_zeros(1.0, 40)
    ref = [float(mp.besseljzero(0, n)) for n in range(1, 41)]
    np.testing.assert_allclose(t.zeros, ref, rtol=1e-14)


def test_zeros_validation():
    for r_det, count in [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)]:
        with pytest.raises(ValueError):
            j0_zeros(r_det, count)


def test_truncated_table():
    t = j0_zeros(0.8, 10)
    s = t.truncated(4)
    assert len(s) == 4
    np.testing.assert_array_equal(s.zeros, t.zeros[:4])
    with pytest.raises(ValueError):
        t.truncated(11)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 5.0, 10.0, 50.0])
def test_wronskian(x):
    y1 = float(mp.bessely(1, x))
    assert abs(bessel_j1(x) * bessel_y0(x) - bessel_j0(x) * y1 - 2 / (math.pi * x)) < 1e-10


def test_large_argument_form():
    x = np.linspace(50, 500, 400)
    env = np.sqrt(2 / (np.pi * x))
    assert np.all(np.abs(bessel_j0(x) - env * np.cos(x - np.pi / 4)) <= 0.05 * env)


def test_zero_interlacing():
    j0z = j0_zeros(1.0, 30).zeros
    j1z = np.array([float(mp.besseljzero(1, n)) for n in range(1, 31)])
    for a, b in zip(j0z[:-1], j0z[1:]):
        assert np.count_nonzero((j1z > a) & (j1z < b)) == 1


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=300.0))
def test_agrees_with_mpmath(x):
    for fn, order, kind in ((bessel_j0, 0, "j"), (bessel_j1, 1, "j"), (bessel_y0, 0, "y")):
        ref = float(mp.besselj(order, x) if kind == "j" else mp.bessely(order, x))
        assert abs(fn(x) - ref) <= 1e-12 + 1e-9 * abs(ref)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e4))
def test_hankel_modulus_positive(x):
    assert abs(hankel2_0(x)) > 0


def test_deterministic():
    x = np.linspace(0.01, 40, 101)
    np.testing.assert_array_equal(bessel_y0(x), bessel_y0(x.copy()))
