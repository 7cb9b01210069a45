import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sci

from neutral_stability.analysis import (
    integrate, integrate_many, max_on_window, min_on_window, sup_delay_integral, sup_on_window,
)
from neutral_stability.exprlang import parse


@pytest.mark.parametrize("src, lo, hi, exact", [
    ("sin(t)", 0.0, math.pi, 2.0),
    ("exp(t)", 0.0, 1.0, math.e - 1),
    ("1/t", 1.0, math.e, 1.0),
    ("abs(t - 0.3)", 0.0, 1.0, 0.045 + 0.245),
])
def test_integrate_closed_forms(src, lo, hi, exact):
    r = integrate(parse(src), lo, hi, tol=1e-11)
    assert r.converged
    assert r.value == pytest.approx(exact, abs=1e-10)


def test_integrate_empty_and_reversed():
    assert integrate(parse("t"), 2.0, 2.0).value == 0.0
    with pytest.raises(ValueError):
        integrate(parse("t"), 2.0, 1.0)
    vals, *_ = integrate_many(parse("t"), [1.0], [0.0])
    assert vals[0] == pytest.approx(-0.5)


def test_integrate_against_scipy_quad():
    f = lambda t: np.exp(-t) * np.cos(3 * t) + 1 / (1 + t * t)
    ref, _ = sci.quad(f, 0.0, 7.0, epsabs=1e-13)
    assert integrate(f, 0.0, 7.0, tol=1e-11).value == pytest.approx(ref, abs=1e-10)


def test_integrate_many_vectorised_matches_single():
    lo = np.array([0.0, 1.0, 2.5])
    hi = np.array([1.0, 4.0, 2.6])
    vals, errs, _, conv = integrate_many(parse("t*t"), lo, hi)
    assert np.allclose(vals, (hi ** 3 - lo ** 3) / 3, atol=1e-12)
    assert conv.all() and (errs >= 0).all()


@given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_integral_of_affine_is_exact(lo, width, p, q):
    hi = lo + width
    v = integrate(lambda t: p * t + q, lo, hi).value
    assert v == pytest.approx(0.5 * p * (hi * hi - lo * lo) + q * width, abs=1e-9)


@given(st.floats(0.1, 3), st.floats(0.1, 3))
def test_integral_is_additive(w1, w2):
    f = lambda t: np.sin(t) ** 2 + t
    whole = integrate(f, 0.0, w1 + w2, tol=1e-12).value
    parts = integrate(f, 0.0, w1, tol=1e-12).value + integrate(f, w1, w1 + w2, tol=1e-12).value
    assert whole == pytest.approx(parts, abs=1e-10)


def test_sup_finds_interior_peak_between_grid_points():
    # peak at t = 1/3, off every grid node
    r = sup_on_window(parse("1 - (t - 1/3)^2"), 0.0, 1.0, coarse_points=10)
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert r.arg == pytest.approx(1 / 3, abs=1e-5)


def test_sup_uses_absolute_value_and_signed_variants():
    f = parse("-2 + sin(t)")
    assert sup_on_window(f, 0, 10).value == pytest.approx(3.0, abs=1e-9)
    assert max_on_window(f, 0, 10).value == pytest.approx(-1.0, abs=1e-9)
    assert min_on_window(f, 0, 10).value == pytest.approx(-3.0, abs=1e-9)


def test_sup_window_validation():
    with pytest.raises(ValueError):
        sup_on_window(parse("t"), 1.0, 1.0)
    with pytest.raises(ValueError):
        sup_on_window(parse("t"), 0.0, 1.0, coarse_points=2)


@given(st.floats(0.2, 20.0))
def test_sup_at_least_coarse_max(freq):
    f = lambda t: np.sin(freq * t) * np.exp(-0.1 * t)
    ts = np.linspace(0, 10, 200)
    r = sup_on_window(f, 0, 10, coarse_points=200)
    assert r.value >= np.abs(f(ts)).max() - 1e-15


def test_delay_integral_constant_delay():
    # int_{t-1}^t alpha*(1 + 0.1 cos s) ds; sup = alpha*(1 + 0.2 sin(1/2))
    b = parse("alpha*(1 + 0.1*cos(t))")
    r = sup_delay_integral(b, parse("t - 1"), 0, 100, params={"alpha": 1.0})
    assert r.value == pytest.approx(1 + 0.2 * math.sin(0.5), abs=1e-9)
    assert r.inf_value == pytest.approx(1 - 0.2 * math.sin(0.5), abs=1e-9)


def test_delay_integral_proportional_is_log2():
    r = sup_delay_integral(parse("1/t"), parse("0.5*t"), 1, 200)
    assert r.value == pytest.approx(math.log(2), abs=1e-9)
    assert r.inf_value == pytest.approx(math.log(2), abs=1e-9)


def test_delay_integral_against_scipy():
    b = lambda t: 1 / (t * np.log(t))
    ts = np.linspace(4, 400, 50)
    ref = np.array([sci.quad(b, np.sqrt(t), t, epsabs=1e-13)[0] for t in ts])
    r = sup_delay_integral(b, lambda t: np.sqrt(t), 4, 400, grid_points=2000)
    assert r.value >= ref.max() - 1e-9
    # the function t -> ln(ln t / ln sqrt t) equals ln 2 for every t
    assert r.value == pytest.approx(math.log(2), abs=1e-9)
