import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magpolya.errors import DataError, DomainError
from magpolya.symbol import (
    excess_factor,
    goingdown_constant,
    landau_sum,
    lcl_constant,
    legendre_transform,
    lift_moment,
    magnetic_symbol_2d,
    magnetic_symbol_3d,
    rho_constant,
    sup_ratio,
    sup_ratio_closed_form,
)

mp.mp.dps = 40


def mp_symbol(B, lam, gamma):
    B, lam, gamma = mp.mpf(B), mp.mpf(lam), mp.mpf(gamma)
    s = mp.mpf(0)
    k = 0
    while lam - B * (2 * k + 1) > 0:
        s += (lam - B * (2 * k + 1)) ** gamma
        k += 1
    return B / (2 * mp.pi) * s


def mp_lcl(gamma, d):
    g = mp.mpf(gamma)
    return mp.gamma(g + 1) / (2**d * mp.pi ** (mp.mpf(d) / 2) * mp.gamma(g + mp.mpf(d) / 2 + 1))


def mp_rho(gamma, d):
    g, d = mp.mpf(gamma), mp.mpf(d)
    pw = (2 * g) ** g if g > 0 else mp.mpf(1)
    return (mp.gamma(mp.mpf(5) / 2) * mp.gamma(g + d / 2 + 1) / (mp.gamma((5 + d) / 2) * mp.gamma(g + 1))
            * mp.mpf(3) ** (-mp.mpf(3) / 2) * (3 + d) ** ((3 + d) / 2) * pw * (2 * g + d) ** (-g - d / 2))


@pytest.mark.parametrize("gamma", [0, 0.25, 0.5, 1, 1.5, 3])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_lcl_matches_high_precision(gamma, d):
    assert lcl_constant(gamma, d) == pytest.approx(float(mp_lcl(gamma, d)), rel=1e-14)


def test_lcl_two_dimensional_closed_form():
    for g in (0, 0.5, 1, 2):
        assert lcl_constant(g) == pytest.approx(1 / (4 * math.pi * (g + 1)), rel=1e-15)


def test_lcl_rejects_other_dimensions():
    with pytest.raises(DomainError):
        lcl_constant(0.5, 4)


def test_symbol_examples():
    assert float(magnetic_symbol_2d(1, 3.5, 0)) == pytest.approx(1 / math.pi, rel=1e-15)
    assert float(magnetic_symbol_2d(1, 0.5, 0.5)) == 0.0
    assert float(magnetic_symbol_2d(2, 4, 1)) == pytest.approx(2 / (2 * math.pi) * 2, rel=1e-15)


def test_symbol_left_continuous_at_levels():
    at = magnetic_symbol_2d(1, 3.0, 0)
    assert float(at) == pytest.approx(1 / (2 * math.pi))
    assert at.left_limit_convention
    assert float(magnetic_symbol_2d(1, 3.0 + 1e-9, 0)) == pytest.approx(2 / (2 * math.pi))


@pytest.mark.parametrize("B,lam,gamma", [(1, 3.5, 0), (1, 7.9, 0.5), (0.5, 6.3, 1), (2, 15.5, 1.5), (1.3, 2.0, 0.25)])
def test_symbol_matches_high_precision(B, lam, gamma):
    assert float(magnetic_symbol_2d(B, lam, gamma)) == pytest.approx(float(mp_symbol(B, lam, gamma)), rel=1e-13)


def test_landau_sum_vectorized_agrees():
    lams = np.linspace(0.1, 12, 41)
    v = landau_sum(1.0, lams, 0.5)
    for lam, x in zip(lams, v):
        assert x == pytest.approx(float(mp_symbol(1, lam, 0.5) * 2 * mp.pi), rel=1e-13, abs=1e-300)


def test_symbol_3d_identity():
    for gamma in (0, 0.5, 1, 2):
        for lam in (0.5, 2.2, 5.0, 13.7):
            lhs = lcl_constant(gamma, 1) * float(magnetic_symbol_2d(1.1, lam, gamma + 0.5))
            assert float(magnetic_symbol_3d(1.1, lam, gamma)) == pytest.approx(lhs, rel=1e-12, abs=0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.01, 30), st.floats(0, 3), st.floats(0.2, 4))
def test_symbol_scaling(B, lam, gamma, t):
    a = float(magnetic_symbol_2d(t * B, t * lam, gamma))
    b = t ** (gamma + 1) * float(magnetic_symbol_2d(B, lam, gamma))
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.01, 30), st.floats(0, 3), st.floats(0.0, 5))
def test_symbol_monotone_in_lambda(B, lam, gamma, dl):
    assert float(magnetic_symbol_2d(B, lam + dl, gamma)) >= float(magnetic_symbol_2d(B, lam, gamma)) - 1e-12


def test_excess_factor():
    assert excess_factor(0) == 2.0
    for g in np.linspace(0.1, 0.9, 9):
        ref = 2 * (mp.mpf(g) / (mp.mpf(g) + 1)) ** mp.mpf(g)
        assert excess_factor(g) == pytest.approx(float(ref), rel=1e-14)
        assert excess_factor(g) > 1
    with pytest.raises(DomainError):
        excess_factor(1.0)


def test_goingdown_constant():
    assert goingdown_constant(0, 1) == 1.0
    g, s = 0.5, 1.0
    assert goingdown_constant(g, s) == pytest.approx(0.5**0.5 * 0.5**0.5)
    with pytest.raises(DomainError):
        goingdown_constant(1.0, 0.5)


@pytest.mark.parametrize("gamma", [0, 0.3, 0.5, 1, 1.4])
@pytest.mark.parametrize("d", [2, 3, 5])
def test_rho_matches_high_precision(gamma, d):
    assert rho_constant(gamma, d) == pytest.approx(float(mp_rho(gamma, d)), rel=1e-13)


def test_rho_two_dimensional_closed_form():
    for g in (0, 0.25, 0.5, 1):
        ref = (5 / 3) ** 1.5 * ((g / (g + 1)) ** g if g else 1.0)
        assert rho_constant(g, 2) == pytest.approx(ref, rel=1e-13)
    assert rho_constant(0, 2) / excess_factor(0) == pytest.approx(1.0758, abs=5e-5)


def test_rho_range():
    with pytest.raises(DomainError):
        rho_constant(1.5)


@pytest.mark.parametrize("gamma", [0, 0.25, 0.5, 1, 1.5, 2])
def test_sup_ratio_numeric_matches_closed_form(gamma):
    num = sup_ratio(gamma, 1.0)
    ref = sup_ratio_closed_form(gamma, 1.0)
    assert num.sup == pytest.approx(ref.sup, rel=1e-6)


def test_sup_ratio_argmax():
    assert sup_ratio_closed_form(0.5, 2.0).argmax == pytest.approx(3.0)
    assert sup_ratio(0.5, 2.0).argmax == pytest.approx(3.0, rel=1e-6)
    assert sup_ratio_closed_form(0).argmax == "limit B+"
    assert sup_ratio_closed_form(2).argmax == "limit inf"


@pytest.mark.parametrize("gamma", [0.5, 1, 1.5])
def test_lift_moment_matches_symbol(gamma):
    for lam in np.linspace(0.3, 8, 23):
        ref = float(mp_symbol(1, lam, gamma))
        assert lift_moment(1.0, lam, gamma) == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_lift_moment_needs_positive_gamma():
    with pytest.raises(DomainError):
        lift_moment(1, 2, 0)


def test_legendre_quadratic():
    area = 3.0
    N = 7
    knots = 4 * math.pi * np.arange(0, 60) / area
    f = lcl_constant(1) * area * knots**2
    res = legendre_transform(knots, f, N)
    assert res.value == pytest.approx(2 * math.pi * N**2 / area, rel=1e-12)
    assert res.argmax == pytest.approx(4 * math.pi * N / area)
    assert not res.at_boundary


def test_legendre_rejects_nonconvex_and_bad_grids():
    with pytest.raises(DataError):
        legendre_transform([0, 1, 2], [0, 1, 1.5], 1)
    with pytest.raises(DataError):
        legendre_transform([0, 2, 1], [0, 1, 2], 1)
    with pytest.raises(DataError):
        legendre_transform([], [], 1)


def test_domain_errors():
    with pytest.raises(DomainError):
        magnetic_symbol_2d(0, 1, 0)
    with pytest.raises(DomainError):
        magnetic_symbol_2d(1, 1, -0.5)
    with pytest.raises(DomainError):
        magnetic_symbol_2d(1, float("nan"), 0)


@pytest.mark.parametrize("gamma", [k / 10 for k in range(1, 10)])
def test_sharpness_point(gamma):
    B = 1.3
    lam = B * (gamma + 1)
    ref = excess_factor(gamma) * lcl_constant(gamma) * lam ** (gamma + 1)
    assert float(magnetic_symbol_2d(B, lam, gamma)) == pytest.approx(ref, rel=1e-10)
