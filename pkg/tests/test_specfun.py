import math
import warnings

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given
from hypothesis import strategies as st

from layerlab import specfun


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_j_y_against_frozen_mpmath(frozen):
    for rec in frozen["bessel"]:
        nu, x = rec["nu"], rec["x"]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", specfun.OutsideValidatedWindow)
            try:
                j = specfun.bessel_j(nu, x)
            except specfun.BesselUnderflowError:
                assert abs(rec["J"]) < 1e-290
                continue
            assert rel(j, rec["J"]) < 1e-10, (nu, x)
            assert rel(specfun.bessel_j_deriv(nu, x), rec["Jp"]) < 1e-10, (nu, x)
            if abs(rec["Y"]) < 1e290:
                assert rel(specfun.bessel_y(nu, x), rec["Y"]) < 1e-10, (nu, x)
                assert rel(specfun.bessel_y_deriv(nu, x), rec["Yp"]) < 1e-10, (nu, x)


def test_hankel_combines_j_and_y(frozen):
    rec = frozen["bessel"][5]
    h1 = specfun.hankel(1, rec["nu"], rec["x"])
    h2 = specfun.hankel(2, rec["nu"], rec["x"])
    assert abs(h1 - complex(rec["J"], rec["Y"])) < 1e-12
    assert h2 == pytest.approx(h1.conjugate(), rel=1e-15)
    hp = specfun.hankel_deriv(1, rec["nu"], rec["x"])
    assert abs(hp - complex(rec["Jp"], rec["Yp"])) < 1e-12


def test_zeros_against_frozen_mpmath(frozen):
    for rec in frozen["zeros"]:
        z = specfun.bessel_zero("J", rec["k"], rec["s"])
        assert rel(z.location, rec["j"]) < 1e-12
        assert abs(z.residual) < 1e-10
        zp = specfun.bessel_zero("Jprime", rec["k"], rec["s"])
        assert rel(zp.location, rec["jp"]) < 1e-12


def test_zero_kind_aliases_and_errors():
    assert specfun.bessel_zero("J-zero", 3, 2).location == specfun.bessel_zero("J", 3, 2).location
    with pytest.raises(ValueError):
        specfun.bessel_zero("K", 1, 1)
    with pytest.raises(ValueError):
        specfun.bessel_zero("J", 1, 0)


def test_mcmahon_guess_is_close_for_high_index():
    g = specfun.zero_guess("J", 2, 40)
    assert abs(g - sp.jn_zeros(2, 40)[-1]) < 1e-3


def test_underflow_is_reported():
    with pytest.raises(specfun.BesselUnderflowError):
        specfun.bessel_j(1500, 1.0)


def test_domain_errors():
    with pytest.raises(ValueError):
        specfun.bessel_j(-1, 2.0)
    with pytest.raises(ValueError):
        specfun.bessel_j(1, -2.0)


def test_hankel01_matches_scipy_over_decades():
    x = np.geomspace(1e-6, 5e3, 4001)
    h0, h1 = specfun.hankel01(x)
    assert np.max(np.abs(h0 - sp.hankel1(0, x)) / np.abs(sp.hankel1(0, x))) < 1e-13
    assert np.max(np.abs(h1 - sp.hankel1(1, x)) / np.abs(sp.hankel1(1, x))) < 1e-13


def test_sequences_match_scalar_calls():
    js = specfun.jn_sequence(30, 12.5)
    assert all(rel(js[n], specfun.bessel_j(n, 12.5)) < 1e-12 for n in (0, 7, 13, 30))
    ys = specfun.yn_sequence(30, 12.5)
    assert all(rel(ys[n], specfun.bessel_y(n, 12.5)) < 1e-12 for n in (0, 7, 13, 30))


@given(nu=st.integers(0, 800).map(lambda n: n / 2), x=st.floats(0.5, 600.0))
def test_wronskian(nu, x):
    # J_{nu+1} Y_nu - J_nu Y_{nu+1} = 2 / (pi x)
    try:
        j0, j1 = specfun.bessel_j(nu, x), specfun.bessel_j(nu + 1, x)
        y0, y1 = specfun.bessel_y(nu, x), specfun.bessel_y(nu + 1, x)
    except (specfun.BesselUnderflowError, specfun.BesselOverflowError):
        return
    w = j1 * y0 - j0 * y1
    scale = max(abs(j1 * y0), abs(j0 * y1), 2 / (math.pi * x))
    assert abs(w - 2 / (math.pi * x)) <= 1e-9 * scale


@given(nu=st.integers(2, 800).map(lambda n: n / 2), x=st.floats(0.5, 600.0))
def test_three_term_recurrence(nu, x):
    try:
        a, b, c = (specfun.bessel_j(nu + d, x) for d in (-1, 0, 1))
    except specfun.BesselUnderflowError:
        return
    scale = max(abs(a), abs(c), abs(2 * nu / x * b))
    assert abs(a + c - 2 * nu / x * b) <= 1e-9 * scale


@given(nu=st.integers(0, 400).map(lambda n: n / 2), x=st.floats(0.5, 300.0))
def test_derivative_identity(nu, x):
    # J'_nu = (J_{nu-1} - J_{nu+1}) / 2 written through the forward relation
    try:
        j, jp, j1 = specfun.bessel_j(nu, x), specfun.bessel_j_deriv(nu, x), specfun.bessel_j(nu + 1, x)
    except specfun.BesselUnderflowError:
        return
    scale = max(abs(nu / x * j), abs(j1), 1e-300)
    assert abs(jp - (nu / x * j - j1)) <= 1e-9 * scale


@pytest.mark.parametrize("nu", [113, 114, 115, 150])
def test_miller_rescale_near_low_orders(nu):
    # at x = 3 the backward sweep rescales a few orders above zero; those
    # entries still carry the normalisation sum
    ref = sp.jv(nu, 3.0)
    assert rel(specfun.bessel_j(nu, 3.0), ref) < 1e-12


def test_random_window_against_scipy():
    rng = np.random.default_rng(7)
    nus = rng.integers(0, 1500, 300).astype(float)
    xs = rng.uniform(0.2, 1000.0, 300)
    for nu, x in zip(nus, xs):
        ref = sp.jv(nu, x)
        if abs(ref) < 1e-280:
            continue
        assert rel(specfun.bessel_j(nu, x), ref) < 1e-10, (nu, x)
