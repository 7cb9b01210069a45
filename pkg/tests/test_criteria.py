import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import INV_E, make_spec
from neutral_stability.criteria import (
    CRITERION_IDS, Conclusion, Context, Hypothesis, check_corollary2a, check_corollary2b,
    check_pantograph, check_prior_art, check_theorem1, check_theorem2, check_theorem_unbounded,
    log_growth_sandwich, run_all, run_criterion,
)
from neutral_stability.exprlang import parse

EXP = Conclusion.EXPONENTIALLY_STABLE
ASY = Conclusion.ASYMPTOTICALLY_STABLE
INC = Conclusion.INCONCLUSIVE
NA = Conclusion.NOT_APPLICABLE


def hyp(verdict, needle):
    return next(h for h in verdict.hypotheses if needle in h.description)


# -- hypothesis bookkeeping ---------------------------------------------------------------

def test_strict_and_non_strict_relations():
    assert Hypothesis("x", 0.5, "<=", 0.5).satisfied
    assert not Hypothesis("x", 0.5, "<", 0.5).satisfied
    assert Hypothesis("x", 0.5 + 5e-8, "<=", 0.5).satisfied
    assert not Hypothesis("x", 0.5 - 5e-8, "<", 0.5).satisfied
    assert Hypothesis("x", 2.0, ">", 1.0).margin == 1.0
    assert not Hypothesis("x", float("nan"), "<=", 1.0).satisfied


# -- delay-integral test (thm1) ----------------------------------------------------------------

def test_theorem1_example1(example1):
    v = check_theorem1(example1, 100)
    assert v.conclusion == EXP
    integral = next(h for h in v.hypotheses if h.bound == pytest.approx(INV_E))
    assert integral.value == pytest.approx(0.1 * (math.pi + 0.2), abs=1e-7)
    assert v.window == (0.0, 100)


def test_theorem1_inconclusive_above_threshold(example1):
    v = check_theorem1(example1.with_params(alpha=0.12), 100)
    assert v.conclusion == INC
    assert v.tightest.value == pytest.approx(0.12 * (math.pi + 0.2), abs=1e-7)


def test_theorem1_non_neutral_constant():
    spec = make_spec(t0=0, a="0", b="0.3", g="t - 1", h="t - 1", phi="1")
    assert check_theorem1(spec, 50).conclusion == EXP


def test_theorem1_strict_half_boundary():
    spec = make_spec(t0=0, a="0.5", b="0.3", g="t - 1", h="t - 1", phi="1")
    assert check_theorem1(spec, 50).conclusion == INC


def test_theorem1_unbounded_delays_not_applicable(example2):
    assert check_theorem1(example2, 200).conclusion == NA


def test_instantaneous_term_excluded():
    spec = make_spec(t0=0, a="0", b="0.3", g="t - 1", h="t - 1", phi="1", c="1")
    assert check_theorem1(spec, 50).conclusion == NA


# -- beta-splitting and delay-shortening tests -----------------------------------------------------------

def test_theorem2a_degenerates_to_half_bound():
    for a0, expected in ((0.49, EXP), (0.5, INC), (0.3, EXP)):
        spec = make_spec(t0=0, a=f"{a0!r}", b=f"{INV_E!r}", g="t - 1", h="t - 1", phi="1", tau=1)
        assert check_theorem2(spec, 50, "a").conclusion == expected, a0


def test_theorem2b_example1_a046(example1):
    v = check_theorem2(example1.with_params(a0=0.46, alpha=0.125), 100, "b")
    assert v.conclusion == EXP


def test_theorem2_large_a_fails_both():
    spec = make_spec(t0=0, a="0.6", b="0.3", g="t - 1", h="t - 1", phi="1")
    assert check_theorem2(spec, 50, "a").conclusion == INC
    assert check_theorem2(spec, 50, "b").conclusion == INC


def test_corollary2a_part_b_window(example1):
    spec = example1.with_params(a0=0.46)
    assert check_corollary2a(spec.with_params(alpha=0.12), 100, "b").conclusion == EXP
    assert check_corollary2a(spec.with_params(alpha=0.135), 100, "b").conclusion == INC
    assert check_corollary2a(spec.with_params(alpha=0.1), 100, "b").conclusion != EXP


def test_corollary2a_part_a():
    below = make_spec(t0=0, a="0", b=f"{INV_E - 1e-3!r}", g="t - 1", h="t - 1", phi="1", tau=1)
    assert check_corollary2a(below, 50, "a").conclusion == NA
    # b = 0.2 needs tau >= 1/(0.2 e) ~ 1.84 for the pointwise lower bound to hold
    ok = make_spec(t0=0, a="0", b="0.2", g="t - 2", h="t - 2", phi="1", tau=2)
    assert check_corollary2a(ok, 50, "a").conclusion == EXP


def test_corollary2b():
    ok = make_spec(t0=0, a="0.2", b="0.4", g="t - 1", h="t - 1", phi="1")
    assert check_corollary2b(ok, 50).conclusion == EXP
    low = make_spec(t0=0, a="0", b="0.3", g="t - 1", h="t - 1", phi="1")
    assert check_corollary2b(low, 50).conclusion == NA


def test_corollary2b_non_constant_b(example1):
    assert check_corollary2b(example1, 100).conclusion == NA


# -- unbounded delays ----------------------------------------------------------------------

@pytest.mark.parametrize("alpha, cond, expected", [
    (1.0, "b", ASY), (0.5, "a", ASY), (1.5, "a", INC), (1.5, "b", INC),
])
def test_unbounded_example3(example3, alpha, cond, expected):
    v = check_theorem_unbounded(example3.with_params(alpha=alpha), 400, cond)
    assert v.conclusion == expected


def test_unbounded_records_log2(example3):
    v = check_theorem_unbounded(example3, 400, "b")
    vals = [h.value for h in v.hypotheses]
    assert any(abs(x - math.log(2)) < 1e-6 for x in vals)


def test_unbounded_needs_divergent_integral():
    spec = make_spec(t0=1, a="0", b="1/(t*t)", g="0.5*t", h="0.5*t", phi="1")
    assert check_theorem_unbounded(spec, 200, "a").conclusion != ASY


# -- pantograph ------------------------------------------------------------------------------

def test_pantograph_example2(example2):
    v = check_pantograph(example2, 200, "b")
    assert v.conclusion == ASY
    assert v.decay_bound is not None and v.decay_bound.kind == "algebraic"
    assert v.decay_bound.nu1 == pytest.approx(1.0, abs=1e-8)
    assert v.decay_bound.nu2 > v.decay_bound.nu1 > 0
    assert v.tightest.margin == pytest.approx(1 + INV_E - 2 / 3 - math.log(2), abs=1e-6)


def test_pantograph_large_a_inconclusive(example2):
    spec = example2.replace(a=parse("0.49"))
    assert check_pantograph(spec, 200, "b").conclusion == INC
    assert check_pantograph(spec, 200, "a").conclusion == INC


def test_pantograph_linear_integral_has_no_sandwich():
    spec = make_spec(t0=1, a="0", b="1", g="0.5*t", h="0.999*t", phi="1")
    v = check_pantograph(spec, 200, "a")
    assert v.decay_bound is None


def test_pantograph_requires_proportional_delays(example1):
    assert check_pantograph(example1, 100, "a").conclusion == NA


def test_log_sandwich_for_log_integral(example2):
    holds, nu1, nu2, _ = log_growth_sandwich(Context(example2, 200))
    assert holds
    assert nu1 == pytest.approx(1.0, abs=1e-8) and nu2 > nu1


# -- prior-art propositions ------------------------------------------------------------------

def test_tangzou_thresholds(example1):
    for a0, alpha0 in ((0.49, 0.2 / (math.pi + 0.2)), (0.46, 0.4 / (math.pi + 0.2))):
        spec = example1.with_params(a0=a0)
        below = check_prior_art(spec.with_params(alpha=alpha0 - 2e-3), 100, "tangzou")
        above = check_prior_art(spec.with_params(alpha=alpha0 + 2e-3), 100, "tangzou")
        assert below.conclusion.is_stable and not above.conclusion.is_stable


def test_kato_iff_examples():
    stable = make_spec(t0=1, a="0", b="-0.5", g="t", h="0.5*t", phi="1", c="1")
    v = check_prior_art(stable, 100, "kato")
    assert v.conclusion.is_stable
    grow = make_spec(t0=1, a="0", b="-1.5", g="t", h="0.5*t", phi="1", c="1")
    v = check_prior_art(grow, 100, "kato")
    assert v.conclusion == INC
    assert any("necessary condition violated" in n for n in v.notes)


def test_gopalsamy_example():
    spec = make_spec(t0=0, a="0.3", b="0.2", g="t - 1", h="t - 1", phi="1", c="1")
    v = check_prior_art(spec, 50, "gopalsamy")
    assert v.conclusion.is_stable


def test_prior_art_structural_mismatch(example2):
    assert check_prior_art(example2, 200, "gopalsamy").conclusion == NA
    assert check_prior_art(example2, 200, "tangzou").conclusion == NA
    with pytest.raises(ValueError):
        check_prior_art(example2, 200, "nobody")


# -- run_all -------------------------------------------------------------------------------

def test_run_all_example2(example2):
    verdicts = run_all(example2, 200)
    by_id = {v.criterion_id: v for v in verdicts}
    assert set(by_id) == set(CRITERION_IDS)
    assert by_id["pantograph_b"].conclusion == ASY
    assert by_id["thm1"].conclusion == NA
    assert by_id["cor2b"].conclusion == NA
    ranks = [list(Conclusion).index(v.conclusion) for v in verdicts]
    assert ranks == sorted(ranks)


def test_run_all_deterministic_and_serialisable(example1):
    a = [v.as_dict() for v in run_all(example1, 100)]
    b = [v.as_dict() for v in run_all(example1, 100)]
    assert a == b
    assert {d["criterion_id"] for d in a if d["conclusion"] == "ExponentiallyStable"} >= {"thm1"}


def test_run_criterion_unknown(example1):
    with pytest.raises(ValueError):
        run_criterion("thm99", example1, 100)


@pytest.mark.parametrize("name, T", [("example1", 100), ("example2", 200), ("example3", 400)])
def test_verdict_invariants(request, name, T):
    for v in run_all(request.getfixturevalue(name), T):
        if v.conclusion.is_stable:
            assert v.applicable and all(h.satisfied for h in v.hypotheses)
        if v.applicable and any(not h.satisfied for h in v.hypotheses):
            assert v.conclusion == INC


# -- properties --------------------------------------------------------------------------------

@settings(max_examples=15)
@given(st.floats(0.0, 1.0), st.floats(0.0, 6.0))
def test_theorem1_monotone_in_a(scale, phase):
    base = make_spec(t0=0, a="0.49*cos(t)", b="0.1*(1 + 0.1*cos(t))", g="t - 1", h="t - pi",
                     phi="1")
    assert check_theorem1(base, 60).conclusion == EXP
    smaller = base.replace(a=parse(f"{0.49 * scale!r}*sin(t + {phase!r})"))
    assert check_theorem1(smaller, 60).conclusion == EXP


def test_theorem1_boundary_flips_once(example1):
    alphas = np.linspace(0.1, 0.12, 21)
    stable = [check_theorem1(example1.with_params(alpha=float(al)), 60).conclusion == EXP
              for al in alphas]
    flips = sum(x != y for x, y in zip(stable, stable[1:]))
    assert flips == 1 and stable[0] and not stable[-1]


@settings(max_examples=25)
@given(st.floats(0.2, 3.0), st.floats(-3.0, 3.0), st.sampled_from([0.25, 0.5, 0.8]))
def test_kato_exact_iff(ka_abs, kb, lam):
    assume(abs(abs(kb) - ka_abs) > 1e-3)
    spec = make_spec(t0=1, a="0", b=f"{-kb!r}", g="t", h=f"{lam!r}*t", phi="1",
                     c=f"{ka_abs!r}")
    v = check_prior_art(spec, 50, "kato")
    assert v.conclusion.is_stable == (abs(kb) < ka_abs)
