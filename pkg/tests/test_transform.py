import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_spec
from neutral_stability.analysis import integrate_many
from neutral_stability.transform import TransformError, build_transform, verify_transform


@pytest.fixture(scope="module")
def tp2():
    from neutral_stability.model import load_example
    spec = load_example("example2")
    return spec, build_transform(spec, 100)


def test_example2_p_is_log(tp2):
    _, tp = tp2
    ts = np.array([1.0, 2.0, 10.0, 57.3, 100.0])
    assert np.allclose(tp.p(ts), np.log(ts), atol=1e-10)
    assert tp.horizon == pytest.approx(math.log(100), abs=1e-10)


def test_example2_constant_delays(tp2):
    _, tp = tp2
    s = np.linspace(0.5, tp.horizon, 50)
    assert np.allclose(s - tp.h(s), math.log(2), atol=1e-9)
    assert np.allclose(s - tp.g(s), math.log(4), atol=1e-9)
    assert np.all(tp.b(s) == 1.0)
    assert np.allclose(tp.a(s), 1 / 3)


def test_round_trip(tp2):
    _, tp = tp2
    ts = np.linspace(1.0, 100.0, 997)
    assert np.max(np.abs(tp.p_inv(tp.p(ts)) - ts)) < 1e-9


def test_delay_identity_at_table_nodes(tp2):
    spec, tp = tp2
    t = tp.t_nodes[tp.t_nodes >= spec.t0][::50]
    s = tp.p(t)
    direct, *_ = integrate_many(spec.b, 0.5 * t, t, 1e-12)
    assert np.max(np.abs((s - tp.h(s)) - direct)) <= 2e-12 + 1e-12


def test_p_strictly_increasing(tp2):
    _, tp = tp2
    assert np.all(np.diff(tp.p_nodes) > 0)


def test_identity_shift_for_unit_b():
    spec = make_spec(t0=2, a="0.3*sin(t)", b="1", g="t - 1", h="t - 0.5", phi="1")
    tp = build_transform(spec, 30)
    s = np.linspace(0.0, 28.0, 40)
    assert np.allclose(tp.p_inv(s), s + 2, atol=1e-10)
    assert np.allclose(tp.h(s), s - 0.5, atol=1e-10)
    rep = verify_transform(spec, tp, 1e-2, 30)
    assert rep.max_deviation <= 1e-6 and rep.passed


def test_example3_delay_is_alpha_log2():
    from neutral_stability.model import load_example
    spec = load_example("example3").with_params(alpha=0.7)
    tp = build_transform(spec, 2000, table_points=4000)
    s = np.linspace(0.3, tp.horizon, 30)
    assert np.allclose(s - tp.h(s), 0.7 * math.log(2), atol=1e-8)


def test_example2_verification(tp2):
    spec, tp = tp2
    rep = verify_transform(spec, tp, 1e-3, 100)
    assert rep.passed and rep.max_deviation <= 5e-3
    assert rep.as_dict()["passed"] is True


def test_wrong_start_is_flagged():
    from neutral_stability.model import load_example
    spec = load_example("example2")
    wrong = build_transform(spec.replace(t0=2.0), 100)
    rep = verify_transform(spec, wrong, 1e-2, 100)
    assert not rep.passed and rep.max_deviation > 0.1


def test_errors():
    with pytest.raises(TransformError):
        build_transform(make_spec(t0=0, a="0", b="max(0, sin(t))", g="t", h="t - 1",
                                  phi="1"), 20)
    with pytest.raises(TransformError):
        build_transform(make_spec(t0=0, a="0", b="1", g="t", h="t - 1", phi="1", c="1"), 20)


@settings(max_examples=20)
@given(st.floats(0.1, 2.0), st.floats(0.1, 0.9), st.floats(1.5, 40.0))
def test_p_monotone_and_invertible(k, lam, t):
    spec = make_spec(t0=1, a="0", b=f"{k!r}*(1.5 + sin(t))/t", g="t", h=f"{lam!r}*t", phi="1")
    tp = build_transform(spec, 50, table_points=2000)
    ts = np.array([t, min(t * 1.01, 50.0)])
    ps = tp.p(ts)
    assert ps[1] >= ps[0]
    assert tp.p_inv(ps)[0] == pytest.approx(t, abs=1e-8)
    assert tp.h(ps[:1])[0] <= ps[0]
