"""Explicit stability tests for the neutral equation in Hale form.

Every test samples its hypotheses on a finite window ``[t0, T]`` and returns a
:class:`CriterionVerdict` that records each inequality with its computed value,
bound and margin. The tests are sufficient conditions: a failed hypothesis only
ever yields ``Inconclusive``. Kato's test for the autonomous pantograph equation
is the one exception, being an if-and-only-if statement; a violation is still reported as ``Inconclusive``
but with an explicit note.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from . import analysis
from .exprlang import BinOp, Call, ExprError, Num, TimeExpr, Var, evaluate
from .model import AssumptionReport, ProblemSpec, lag_expr, validate_assumptions

INV_E = 1.0 / math.e
SLACK = 1e-7
DEFAULT_GRID = 1000


class Conclusion(str, Enum):
    EXPONENTIALLY_STABLE = "ExponentiallyStable"
    ASYMPTOTICALLY_STABLE = "AsymptoticallyStable"
    INCONCLUSIVE = "Inconclusive"
    NOT_APPLICABLE = "NotApplicable"

    @property
    def is_stable(self) -> bool:
        return self in (Conclusion.EXPONENTIALLY_STABLE, Conclusion.ASYMPTOTICALLY_STABLE)

    def __str__(self) -> str:
        return self.value


_STRENGTH = {Conclusion.EXPONENTIALLY_STABLE: 0, Conclusion.ASYMPTOTICALLY_STABLE: 1,
             Conclusion.INCONCLUSIVE: 2, Conclusion.NOT_APPLICABLE: 3}


@dataclass
class Hypothesis:
    """One inequality ``value <relation> bound``.

    Non-strict relations admit equality up to ``slack``; strict relations must
    hold by more than ``slack``. ``margin`` is positive when satisfied.
    """
    description: str
    value: float
    relation: str
    bound: float
    witness: float | None = None
    slack: float = SLACK

    @property
    def margin(self) -> float:
        if self.relation in ("<", "<="):
            return self.bound - self.value
        return self.value - self.bound

    @property
    def satisfied(self) -> bool:
        m = self.margin
        if math.isnan(m):
            return False
        if self.relation in ("<=", ">="):
            return m >= -self.slack
        return m > self.slack

    def as_dict(self) -> dict:
        return {"description": self.description, "value": self.value,
                "relation": self.relation, "bound": self.bound, "margin": self.margin,
                "satisfied": self.satisfied, "witness": self.witness}


@dataclass
class DecayBoundEstimate:
    kind: str                 # "exponential" or "algebraic"
    nu1: float | None = None
    nu2: float | None = None
    gamma_empirical: float | None = None

    def as_dict(self) -> dict:
        return {"kind": self.kind, "nu1": self.nu1, "nu2": self.nu2,
                "gamma_empirical": self.gamma_empirical}


@dataclass
class CriterionVerdict:
    criterion_id: str
    applicable: bool
    reason: str
    hypotheses: list
    conclusion: Conclusion
    window: tuple
    grid_points: int
    notes: list = field(default_factory=list)
    decay_bound: DecayBoundEstimate | None = None

    @property
    def tightest(self) -> Hypothesis | None:
        if not self.hypotheses:
            return None
        return min(self.hypotheses, key=lambda h: h.margin)

    def as_dict(self) -> dict:
        return {
            "criterion_id": self.criterion_id,
            "applicable": self.applicable,
            "reason": self.reason,
            "hypotheses": [h.as_dict() for h in self.hypotheses],
            "conclusion": self.conclusion.value,
            "window": list(self.window),
            "grid_points": self.grid_points,
            "notes": list(self.notes),
            "decay_bound": None if self.decay_bound is None else self.decay_bound.as_dict(),
        }


class NotApplicable(Exception):
    """Raised inside a check to abort with a structural reason."""


# -- shared, lazily computed window quantities ---------------------------------------------

class Context:
    """Window quantities shared by several criteria for one problem."""

    def __init__(self, spec: ProblemSpec, T: float, grid_points: int = DEFAULT_GRID,
                 tol: float = analysis.DEFAULT_TOL, slack: float = SLACK):
        if not T > spec.t0:
            raise ValueError(f"horizon T={T} must exceed t0={spec.t0}")
        self.spec, self.T, self.n, self.tol, self.slack = spec, float(T), grid_points, tol, slack
        self.t0 = float(spec.t0)
        self.p = spec.params

    @property
    def window(self):
        return (self.t0, self.T)

    @property
    def doubled_T(self) -> float:
        return self.t0 + 2.0 * (self.T - self.t0)

    @cached_property
    def ts(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n)

    @cached_property
    def report(self) -> AssumptionReport:
        return validate_assumptions(self.spec, self.T, self.n)

    @cached_property
    def a_norm(self) -> analysis.SupEstimate:
        return self.report.a_norm

    @cached_property
    def b_sup(self) -> analysis.SupEstimate:
        return analysis.sup_on_window(self.spec.b, self.t0, self.T, self.n, self.p)

    @cached_property
    def b_min(self) -> analysis.SupEstimate:
        return analysis.min_on_window(self.spec.b, self.t0, self.T, self.n, self.p)

    @cached_property
    def b_max(self) -> analysis.SupEstimate:
        return analysis.max_on_window(self.spec.b, self.t0, self.T, self.n, self.p)

    @cached_property
    def h_integral(self) -> analysis.SupEstimate:
        return analysis.sup_delay_integral(self.spec.b, self.spec.h, self.t0, self.T,
                                           self.n, self.tol, self.p)

    @cached_property
    def h_integral_doubled(self) -> analysis.SupEstimate:
        return analysis.sup_delay_integral(self.spec.b, self.spec.h, self.t0,
                                           self.doubled_T, self.n, self.tol, self.p)

    @cached_property
    def g_integral(self) -> analysis.SupEstimate:
        return analysis.sup_delay_integral(self.spec.b, self.spec.g, self.t0, self.T,
                                           self.n, self.tol, self.p)

    @cached_property
    def g_integral_doubled(self) -> analysis.SupEstimate:
        return analysis.sup_delay_integral(self.spec.b, self.spec.g, self.t0,
                                           self.doubled_T, self.n, self.tol, self.p)

    @cached_property
    def h_integral_tail(self) -> analysis.SupEstimate:
        """Finite-window surrogate for the limsup: sup over [T/2, T] (shifted by t0)."""
        lo = self.t0 + 0.5 * (self.T - self.t0)
        return analysis.sup_delay_integral(self.spec.b, self.spec.h, lo, self.T,
                                           self.n, self.tol, self.p)

    @cached_property
    def lag_h_min(self) -> analysis.SupEstimate:
        return analysis.min_on_window(lag_expr(self.spec.h), self.t0, self.T, self.n, self.p)

    @cached_property
    def tau(self) -> tuple:
        """(tau, source) with tau bounding t - h(t) on the window."""
        if self.spec.tau is not None:
            return float(self.spec.tau), "config"
        return self.report.tau_hat.value, "sampled"

    @cached_property
    def divergence_ratio(self) -> tuple:
        """Probe for a divergent integral of b: increments over doubling windows.

        Returns (smallest ratio of consecutive increments, first increment).
        """
        L = self.T - self.t0
        ends = [self.t0 + L * 2.0 ** k for k in range(4)]
        incs, *_ = analysis.integrate_many(self.spec.b, ends[:-1], ends[1:], self.tol, self.p)
        if incs[0] <= 0:
            return 0.0, float(incs[0])
        ratios = incs[1:] / incs[:-1]
        return float(np.min(ratios)), float(incs[0])

    def constant_value(self, expr: TimeExpr | None) -> float | None:
        """Value of ``expr`` if it is constant on the window, else None."""
        if expr is None:
            return 0.0
        if not expr.depends_on_t:
            return evaluate(expr, self.t0, self.p)
        vals = evaluate(expr, self.ts, self.p)
        if float(np.max(vals) - np.min(vals)) <= self.slack:
            return float(vals[0])
        return None

    def constant_lag(self, arg: TimeExpr) -> float | None:
        return self.constant_value(lag_expr(arg))

    def proportional_factor(self, arg: TimeExpr) -> float | None:
        """``mu`` if ``arg(t) = mu * t`` on the window, else None."""
        ts = self.ts[self.ts > 0]
        if ts.size < 2:
            return None
        ratio = evaluate(arg, ts, self.p) / ts
        if float(np.max(ratio) - np.min(ratio)) <= 1e-12 * max(1.0, abs(float(ratio[0]))):
            return float(ratio[0])
        return None


DIVERGENCE_RATIO = 0.8
DOUBLING_RTOL = 1e-6


def _verdict(cid, ctx, hyps, stable_kind, notes=(), applicable=True, reason="",
             decay=None) -> CriterionVerdict:
    if not applicable:
        conclusion = Conclusion.NOT_APPLICABLE
    elif all(h.satisfied for h in hyps):
        conclusion = stable_kind
    else:
        conclusion = Conclusion.INCONCLUSIVE
    return CriterionVerdict(cid, applicable, reason, list(hyps), conclusion, ctx.window,
                            ctx.n, list(notes), decay)


def _not_applicable(cid, ctx, reason, hyps=(), notes=()) -> CriterionVerdict:
    return CriterionVerdict(cid, False, reason, list(hyps), Conclusion.NOT_APPLICABLE,
                            ctx.window, ctx.n, list(notes))


def _require_standing(ctx: Context, bounded: bool):
    if ctx.spec.has_instantaneous_term:
        raise NotApplicable("equation has an instantaneous term c(t) x(t)")
    if ctx.spec.has_forcing:
        raise NotApplicable("stability tests concern the unforced equation (f must be 0)")
    r = ctx.report
    if not r.a_below_one:
        raise NotApplicable(f"sup |a| = {r.a_norm.value:.6g} >= 1 (assumption a2)")
    for name, check in (("b >= 0", r.b_nonneg), ("g(t) <= t", r.g_le_t),
                        ("h(t) <= t", r.h_le_t), ("g(t) -> infinity", r.g_to_inf),
                        ("h(t) -> infinity", r.h_to_inf)):
        if not check.ok:
            raise NotApplicable(f"standing assumption {name} fails at t={check.witness:.6g}")
    if bounded and not r.delays_bounded:
        raise NotApplicable("delays t-g(t), t-h(t) are not bounded on the window")


def _a_hyp(ctx, bound=0.5, relation="<", description="||a|| < 1/2"):
    return Hypothesis(description, ctx.a_norm.value, relation, bound, ctx.a_norm.arg,
                      ctx.slack)


def _b_positive_hyp(ctx):
    return Hypothesis("inf b > 0 (b(t) >= b0 > 0)", ctx.b_min.value, ">", 0.0,
                      ctx.b_min.arg, ctx.slack)


def _tau_hyps(ctx):
    tau, source = ctx.tau
    notes = [f"tau = {tau!r} ({source})"]
    hyps = []
    if source == "config":
        hyps.append(Hypothesis("configured tau bounds t - h(t)", ctx.report.tau_hat.value,
                               "<=", tau, ctx.report.tau_hat.arg, ctx.slack))
    return tau, hyps, notes


def _guard(cid):
    def wrap(fn):
        def run(spec, T, *, ctx: Context | None = None, **kw):
            ctx = ctx if ctx is not None else Context(spec, T, **_ctx_kwargs(kw))
            try:
                return fn(cid, ctx, **kw)
            except NotApplicable as exc:
                return _not_applicable(cid, ctx, str(exc))
            except (ExprError, ArithmeticError, ValueError) as exc:
                return _not_applicable(cid, ctx, f"evaluation failed: {exc}")
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def _ctx_kwargs(kw):
    return {k: kw.pop(k) for k in ("grid_points", "tol", "slack") if k in kw}


# -- bounded-delay criteria --------------------------------------------------------------------

@_guard("thm1")
def _theorem1(cid, ctx):
    _require_standing(ctx, bounded=True)
    hi = ctx.h_integral
    hyps = [
        _b_positive_hyp(ctx),
        Hypothesis("sup int_{h(t)}^t b <= 1/e", hi.value, "<=", INV_E, hi.arg, ctx.slack),
        _a_hyp(ctx),
    ]
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE)


def check_theorem1(spec: ProblemSpec, T: float, **kw) -> CriterionVerdict:
    """b >= b0 > 0, int_{h(t)}^t b <= 1/e and ||a|| < 1/2 give exponential stability."""
    return _theorem1(spec, T, **kw)


def _beta_exprs(b: TimeExpr, cap: float):
    beta = Call("min", (b.root, Num(cap)))
    ratio_excess = TimeExpr(BinOp("/", BinOp("-", b.root, beta), beta))
    ratio = TimeExpr(BinOp("/", b.root, beta))
    return ratio_excess, ratio


@_guard("thm2a_cond")
def _theorem2a(cid, ctx):
    _require_standing(ctx, bounded=True)
    tau, hyps, notes = _tau_hyps(ctx)
    hyps.append(_b_positive_hyp(ctx))
    if not hyps[-1].satisfied:
        return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE, notes)
    cap = 1.0 / (tau * math.e)
    excess, ratio = _beta_exprs(ctx.spec.b, cap)
    q1 = analysis.sup_on_window(excess, ctx.t0, ctx.T, ctx.n, ctx.p)
    q2 = analysis.sup_on_window(ratio, ctx.t0, ctx.T, ctx.n, ctx.p)
    A = ctx.a_norm.value
    lhs = q1.value + q2.value * A / (1.0 - A)
    hyps.append(Hypothesis(
        "||(b-beta)/beta|| + ||b/beta|| ||a||/(1-||a||) < 1, beta = min(b, 1/(tau e))",
        lhs, "<", 1.0, q1.arg, ctx.slack))
    notes.append(f"||(b-beta)/beta|| = {q1.value!r}, ||b/beta|| = {q2.value!r}")
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE, notes)


@_guard("thm2b_cond")
def _theorem2b(cid, ctx):
    _require_standing(ctx, bounded=True)
    hyps = [_b_positive_hyp(ctx)]
    B = ctx.b_sup.value
    if B <= 0:
        return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE)
    excess = TimeExpr(Call("pos", (BinOp("-", lag_expr(ctx.spec.h).root,
                                         Num(1.0 / (B * math.e))),)))
    D = analysis.sup_on_window(excess, ctx.t0, ctx.T, ctx.n, ctx.p)
    A = ctx.a_norm.value
    hyps.append(Hypothesis("||b|| ||(t - h(t) - 1/(||b|| e))^+|| < 1 - 2||a||",
                           B * D.value, "<", 1.0 - 2.0 * A, D.arg, ctx.slack))
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE,
                    [f"||b|| = {B!r}", f"||(t-h-1/(||b||e))^+|| = {D.value!r}"])


def check_theorem2(spec: ProblemSpec, T: float, condition: str = "a", **kw
                   ) -> CriterionVerdict:
    """Exponential stability through the beta-splitting (a) or delay-shortening (b) test."""
    if condition == "a":
        return _theorem2a(spec, T, **kw)
    if condition == "b":
        return _theorem2b(spec, T, **kw)
    raise ValueError(f"condition must be 'a' or 'b', got {condition!r}")


@_guard("cor2a_a")
def _corollary2a_a(cid, ctx):
    _require_standing(ctx, bounded=True)
    tau, hyps, notes = _tau_hyps(ctx)
    regime = Hypothesis("b(t) >= 1/(tau e)", ctx.b_min.value, ">=", 1.0 / (tau * math.e),
                        ctx.b_min.arg, ctx.slack)
    hyps.append(regime)
    if not regime.satisfied:
        return _not_applicable(cid, ctx, "pointwise bound b(t) >= 1/(tau e) fails", hyps, notes)
    A = ctx.a_norm.value
    hyps.append(Hypothesis("tau ||b|| < (2/e)(1 - ||a||)", tau * ctx.b_sup.value, "<",
                           2.0 * INV_E * (1.0 - A), ctx.b_sup.arg, ctx.slack))
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE, notes)


@_guard("cor2a_b")
def _corollary2a_b(cid, ctx):
    _require_standing(ctx, bounded=True)
    tau, hyps, notes = _tau_hyps(ctx)
    hyps.append(_b_positive_hyp(ctx))
    B = ctx.b_sup.value
    if B <= 0:
        return _not_applicable(cid, ctx, "b vanishes on the window", hyps, notes)
    lag = ctx.lag_h_min
    regime = Hypothesis("t - h(t) >= 1/(||b|| e)", lag.value, ">=", 1.0 / (B * math.e),
                        lag.arg, ctx.slack)
    hyps.append(regime)
    if not regime.satisfied:
        return _not_applicable(cid, ctx, "delay t - h(t) shorter than 1/(||b|| e)", hyps,
                               notes)
    A = ctx.a_norm.value
    hyps.append(Hypothesis("tau ||b|| < 1 + 1/e - 2||a||", tau * B, "<",
                           1.0 + INV_E - 2.0 * A, ctx.b_sup.arg, ctx.slack))
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE, notes)


def check_corollary2a(spec: ProblemSpec, T: float, part: str = "a", **kw
                      ) -> CriterionVerdict:
    if part == "a":
        return _corollary2a_a(spec, T, **kw)
    if part == "b":
        return _corollary2a_b(spec, T, **kw)
    raise ValueError(f"part must be 'a' or 'b', got {part!r}")


@_guard("cor2b")
def _corollary2b(cid, ctx):
    _require_standing(ctx, bounded=True)
    bval = ctx.constant_value(ctx.spec.b)
    if bval is None:
        raise NotApplicable("b is not constant on the window")
    if bval <= 0:
        raise NotApplicable("constant b must be positive")
    tau, extra, notes = _tau_hyps(ctx)
    A = ctx.a_norm.value
    lag = ctx.lag_h_min
    s = ctx.slack
    chains = []
    first = [Hypothesis("b tau >= 1/e", bval * tau, ">=", INV_E, None, s),
             Hypothesis("b tau < (2/e)(1 - ||a||)", bval * tau, "<", 2 * INV_E * (1 - A),
                        None, s)]
    second = [Hypothesis("b (t - h(t)) >= 1/e", bval * lag.value, ">=", INV_E, lag.arg, s),
              Hypothesis("b tau < 1 + 1/e - 2||a||", bval * tau, "<", 1 + INV_E - 2 * A,
                         None, s)]
    for name, chain in (("first", first), ("second", second)):
        if chain[0].satisfied:
            chains.append((name, extra + chain))
    if not chains:
        return _not_applicable(cid, ctx, "b tau below 1/e: neither inequality chain applies",
                               extra + first + second, notes)
    for name, hyps in chains:
        if all(h.satisfied for h in hyps):
            return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE,
                            notes + [f"{name} inequality chain holds"])
    hyps = [h for _, chain in chains for h in chain]
    return _verdict(cid, ctx, hyps, Conclusion.EXPONENTIALLY_STABLE, notes)


def check_corollary2b(spec: ProblemSpec, T: float, **kw) -> CriterionVerdict:
    """Constant b: either 1/e <= b tau < (2/e)(1-||a||) or 1/e <= b(t-h) <= b tau < 1+1/e-2||a||."""
    return _corollary2b(spec, T, **kw)


# -- unbounded delays ---------------------------------------------------------------------------

def _divergence_hyp(ctx):
    ratio, first = ctx.divergence_ratio
    return Hypothesis("int b diverges (increment ratio over window doublings)", ratio, ">=",
                      DIVERGENCE_RATIO, None, ctx.slack)


def _stable_under_doubling(ctx, name, single, doubled):
    bound = single.value + DOUBLING_RTOL * max(1.0, abs(single.value))
    return Hypothesis(f"limsup int_{{{name}(t)}}^t b finite (sup stable under doubling)",
                      doubled.value, "<=", bound, doubled.arg, ctx.slack)


def _alternatives(ctx, condition, integral, label):
    A = ctx.a_norm.value
    s = ctx.slack
    if condition == "a":
        return [Hypothesis(f"sup int_{{{label}}}^t b <= 1/e", integral.value, "<=", INV_E,
                           integral.arg, s),
                _a_hyp(ctx)]
    if condition == "b":
        return [Hypothesis(f"inf int_{{{label}}}^t b > 1/e", integral.inf_value, ">", INV_E,
                           integral.inf_arg, s),
                Hypothesis(f"sup int_{{{label}}}^t b < 1 + 1/e - 2||a||", integral.value, "<",
                           1.0 + INV_E - 2.0 * A, integral.arg, s)]
    raise ValueError(f"condition must be 'a' or 'b', got {condition!r}")


def _unbounded(cid, ctx, condition):
    _require_standing(ctx, bounded=False)
    hyps = [
        _divergence_hyp(ctx),
        _stable_under_doubling(ctx, "g", ctx.g_integral, ctx.g_integral_doubled),
        _stable_under_doubling(ctx, "h", ctx.h_integral, ctx.h_integral_doubled),
    ]
    hyps += _alternatives(ctx, condition, ctx.h_integral, "h(t)")
    return _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE,
                    ["asymptotic (not exponential) stability; limsup conditions checked "
                     "by window doubling"])


@_guard("thm_unbounded_a")
def _unbounded_a(cid, ctx):
    return _unbounded(cid, ctx, "a")


@_guard("thm_unbounded_b")
def _unbounded_b(cid, ctx):
    return _unbounded(cid, ctx, "b")


def check_theorem_unbounded(spec: ProblemSpec, T: float, condition: str = "a", **kw
                            ) -> CriterionVerdict:
    """Asymptotic stability for possibly unbounded delays (time-substitution test)."""
    if condition == "a":
        return _unbounded_a(spec, T, **kw)
    if condition == "b":
        return _unbounded_b(spec, T, **kw)
    raise ValueError(f"condition must be 'a' or 'b', got {condition!r}")


def log_growth_sandwich(ctx: Context) -> tuple:
    """Fit ``ln(nu1 t) <= int_{t0}^t b <= ln(nu2 t)`` on the window.

    Returns (holds, nu1, nu2, detail). The sandwich is accepted when the range
    of ``int_{t0}^t b - ln t`` does not widen when the window is doubled.
    """
    if ctx.t0 <= 0:
        return False, None, None, "needs t0 > 0"
    ts = np.linspace(ctx.t0, ctx.doubled_T, 2 * ctx.n - 1)
    incs, *_ = analysis.integrate_many(ctx.spec.b, ts[:-1], ts[1:], ctx.tol, ctx.p)
    p = np.concatenate([[0.0], np.cumsum(incs)])
    log_nu = p - np.log(ts)
    first = log_nu[: ctx.n]
    lo1, hi1 = float(first.min()), float(first.max())
    lo2, hi2 = float(log_nu.min()), float(log_nu.max())
    holds = (lo1 - lo2) <= 1e-3 and (hi2 - hi1) <= 1e-3
    detail = (f"ln(nu) range [{lo1:.6g}, {hi1:.6g}] on window, "
              f"[{lo2:.6g}, {hi2:.6g}] on doubled window")
    nu1, nu2 = math.exp(lo2), math.exp(hi2)
    if nu2 <= nu1:
        nu2 = nu1 * (1.0 + 1e-6)
    return holds, nu1, nu2, detail


def _pantograph(cid, ctx, condition, simulate_dt=None):
    spec = ctx.spec
    mu = ctx.proportional_factor(spec.g)
    lam = ctx.proportional_factor(spec.h)
    if mu is None or lam is None:
        raise NotApplicable("delay arguments are not of the form g = mu t, h = lambda t")
    if not (0 < mu < 1 and 0 < lam < 1):
        raise NotApplicable(f"need mu, lambda in (0, 1), got mu={mu!r}, lambda={lam!r}")
    _require_standing(ctx, bounded=False)
    hyps = [_divergence_hyp(ctx)]
    hyps += _alternatives(ctx, condition, ctx.h_integral, "lambda t")
    notes = [f"mu = {mu!r}, lambda = {lam!r}"]
    verdict = _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE, notes)
    holds, nu1, nu2, detail = log_growth_sandwich(ctx)
    notes.append("log-growth sandwich " + ("holds: " if holds else "fails: ") + detail)
    if verdict.conclusion.is_stable and holds:
        decay = DecayBoundEstimate("algebraic", nu1, nu2)
        notes.append(f"algebraic decay |x(t)| <= M1 t^(-gamma) with nu1 = {nu1:.6g}, "
                     f"nu2 = {nu2:.6g}")
        if simulate_dt is not None:
            from .diagnostics import fit_decay
            from .solver import solve
            traj = solve(spec, simulate_dt, ctx.T)
            fit = fit_decay(traj, "algebraic", 0.5)
            decay.gamma_empirical = fit.gamma
            notes.append(f"gamma_empirical = {fit.gamma:.6g} (single-trajectory estimate, "
                         f"phi from config, r^2 = {fit.r_squared:.4f})")
        verdict.decay_bound = decay
    verdict.notes = notes
    return verdict


@_guard("pantograph_a")
def _pantograph_a(cid, ctx, simulate_dt=None):
    return _pantograph(cid, ctx, "a", simulate_dt)


@_guard("pantograph_b")
def _pantograph_b(cid, ctx, simulate_dt=None):
    return _pantograph(cid, ctx, "b", simulate_dt)


def check_pantograph(spec: ProblemSpec, T: float, condition: str = "a",
                     simulate_dt: float | None = None, **kw) -> CriterionVerdict:
    """Pantograph form g = mu t, h = lambda t; attaches an algebraic decay estimate
    when the log-growth sandwich holds. With ``simulate_dt`` an empirical gamma is
    fitted from a simulated trajectory."""
    fn = {"a": _pantograph_a, "b": _pantograph_b}.get(condition)
    if fn is None:
        raise ValueError(f"condition must be 'a' or 'b', got {condition!r}")
    return fn(spec, T, simulate_dt=simulate_dt, **kw)


# -- prior-art comparison criteria ---------------------------------------------------------------

def _constant_delays(ctx, need_positive=True):
    sigma = ctx.constant_lag(ctx.spec.g)
    tau = ctx.constant_lag(ctx.spec.h)
    if sigma is None or tau is None:
        raise NotApplicable("requires constant delays g = t - sigma, h = t - tau")
    if sigma < 0 or tau < 0 or (need_positive and (sigma <= 0 or tau <= 0)):
        raise NotApplicable(f"delays must be positive, got sigma={sigma!r}, tau={tau!r}")
    return sigma, tau


@_guard("prop_gopalsamy")
def _gopalsamy(cid, ctx):
    spec = ctx.spec
    if not spec.has_instantaneous_term:
        raise NotApplicable("requires an instantaneous term b0 x(t) (c present)")
    if spec.has_forcing:
        raise NotApplicable("requires f = 0")
    a, b, b0 = (ctx.constant_value(e) for e in (spec.a, spec.b, spec.c))
    if a is None or b is None or b0 is None:
        raise NotApplicable("requires constant a, b and b0 (autonomous equation)")
    sigma, tau = _constant_delays(ctx, need_positive=False)
    if b * tau == 0 or a * sigma == 0:
        raise NotApplicable("requires b tau != 0 and a sigma != 0")
    s = ctx.slack
    hyps = [Hypothesis("b0 > 0", b0, ">", 0.0, None, s),
            Hypothesis("b + b0 > 0", b + b0, ">", 0.0, None, s),
            Hypothesis("|b| tau < 1 - |a|", abs(b) * tau, "<", 1.0 - abs(a), None, s)]
    return _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE,
                    [f"a = {a!r}, b = {b!r}, b0 = {b0!r}, sigma = {sigma!r}, tau = {tau!r}"])


@_guard("prop_agarwal")
def _agarwal(cid, ctx):
    spec = ctx.spec
    if not spec.has_instantaneous_term:
        raise NotApplicable("requires an instantaneous term b0(t) x(t) (c present)")
    if spec.has_forcing:
        raise NotApplicable("requires f = 0")
    sigma, tau = _constant_delays(ctx)
    if sigma > tau + ctx.slack:
        raise NotApplicable(f"requires sigma <= tau, got sigma={sigma!r}, tau={tau!r}")
    # Agarwal's form is (x + A x(t - sigma))', so A = -a here
    A_max = analysis.max_on_window(TimeExpr(BinOp("*", Num(-1.0), spec.a.root)),
                                   ctx.t0, ctx.T, ctx.n, ctx.p)
    A_min = analysis.min_on_window(TimeExpr(BinOp("*", Num(-1.0), spec.a.root)),
                                   ctx.t0, ctx.T, ctx.n, ctx.p)
    if A_min.value < -ctx.slack:
        raise NotApplicable("requires 0 <= -a(t) (non-negative coefficient in the "
                            "(x + A x(t - sigma))' form)")
    c_min = analysis.min_on_window(spec.c, ctx.t0, ctx.T, ctx.n, ctx.p)
    c_max = analysis.max_on_window(spec.c, ctx.t0, ctx.T, ctx.n, ctx.p)
    p1, p2 = c_min.value, c_max.value
    q1, q2 = ctx.b_min.value, ctx.b_max.value
    a0 = A_max.value
    s = ctx.slack
    base = [Hypothesis("p1 = inf b0 >= 0", p1, ">=", 0.0, c_min.arg, s),
            Hypothesis("q1 = inf b >= 0", q1, ">=", 0.0, ctx.b_min.arg, s),
            Hypothesis("a0 = sup A < 1", a0, "<", 1.0, A_max.arg, s)]
    alt_a = Hypothesis("p1 + q1 > (p2 + q2)(a0 + q2 tau)", p1 + q1, ">",
                       (p2 + q2) * (a0 + q2 * tau), None, s)
    alt_b = Hypothesis("p1 > q2 + a0 (p2 + q2)", p1, ">", q2 + a0 * (p2 + q2), None, s)
    ts = ctx.ts
    avals = evaluate(spec.a, ts, ctx.p)
    deriv = float(np.max(np.abs(np.diff(avals) / np.diff(ts))))
    notes = [f"p1={p1!r}, p2={p2!r}, q1={q1!r}, q2={q2!r}, a0={a0!r}",
             f"|a'| <= {deriv:.6g} (finite-difference estimate on the grid)",
             "differentiability is required of the neutral coefficient a"]
    for alt in (alt_a, alt_b):
        if alt.satisfied and all(h.satisfied for h in base):
            return _verdict(cid, ctx, base + [alt], Conclusion.ASYMPTOTICALLY_STABLE, notes)
    return _verdict(cid, ctx, base + [alt_a, alt_b], Conclusion.ASYMPTOTICALLY_STABLE, notes)


def _constant_delay_nonneutral_setup(ctx):
    spec = ctx.spec
    if spec.has_instantaneous_term:
        raise NotApplicable("requires no instantaneous term")
    if spec.has_forcing:
        raise NotApplicable("requires f = 0")
    sigma, tau = _constant_delays(ctx)
    if not ctx.report.b_nonneg.ok:
        raise NotApplicable("requires b >= 0")
    return sigma, tau


@_guard("prop_yu")
def _yu(cid, ctx):
    sigma, tau = _constant_delay_nonneutral_setup(ctx)
    a0 = ctx.a_norm.value
    tail = ctx.h_integral_tail
    s = ctx.slack
    hyps = [_divergence_hyp(ctx),
            Hypothesis("a0 = ||a|| < 1", a0, "<", 1.0, ctx.a_norm.arg, s),
            Hypothesis("limsup int_{t-tau}^t b < 3/2 - 2 a0 (2 - a0)", tail.value, "<",
                       1.5 - 2.0 * a0 * (2.0 - a0), tail.arg, s)]
    return _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE,
                    [f"sigma = {sigma!r}, tau = {tau!r}",
                     f"limsup taken as sup over [{tail.window[0]:.6g}, {tail.window[1]:.6g}]"])


@_guard("prop_tangzou")
def _tangzou(cid, ctx):
    sigma, tau = _constant_delay_nonneutral_setup(ctx)
    a0 = ctx.a_norm.value
    s = ctx.slack
    if a0 < 0.25:
        bound, label = 1.5 - 2.0 * a0, "3/2 - 2 a0"
    elif a0 < 0.5:
        bound, label = math.sqrt(2.0 * (1.0 - 2.0 * a0)), "sqrt(2 (1 - 2 a0))"
    else:
        raise NotApplicable(f"requires a0 = ||a|| < 1/2, got {a0!r}")
    tail = ctx.h_integral_tail
    hyps = [_divergence_hyp(ctx),
            Hypothesis(f"limsup int_{{t-tau}}^t b < {label}", tail.value, "<", bound,
                       tail.arg, s)]
    part = "a" if a0 < 0.25 else "b"
    return _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE,
                    [f"part {part} (a0 = {a0!r})", f"sigma = {sigma!r}, tau = {tau!r}",
                     f"limsup taken as sup over [{tail.window[0]:.6g}, {tail.window[1]:.6g}]"])


@_guard("prop_kato")
def _kato(cid, ctx):
    spec = ctx.spec
    if ctx.constant_value(spec.a) != 0.0:
        raise NotApplicable("requires a non-neutral equation (a = 0)")
    if spec.has_forcing:
        raise NotApplicable("requires f = 0")
    lam = ctx.proportional_factor(spec.h)
    if lam is None or not 0 < lam < 1:
        raise NotApplicable("requires h(t) = lambda t with 0 < lambda < 1")
    c = ctx.constant_value(spec.c)
    b = ctx.constant_value(spec.b)
    if c is None or b is None:
        raise NotApplicable("requires constant coefficients")
    if c == 0.0:
        raise NotApplicable("requires an instantaneous term")
    # x' = ka x(t) + kb x(lambda t) corresponds to c = -ka, b = -kb
    ka, kb = -c, -b
    s = ctx.slack
    hyps = [Hypothesis("a < 0", ka, "<", 0.0, None, s),
            Hypothesis("|b| < |a|", abs(kb), "<", abs(ka), None, s)]
    notes = [f"x' = {ka!r} x(t) + {kb!r} x({lam!r} t)"]
    verdict = _verdict(cid, ctx, hyps, Conclusion.ASYMPTOTICALLY_STABLE, notes)
    if not verdict.conclusion.is_stable:
        verdict.notes.append("Kato: necessary condition violated (equation is not "
                             "asymptotically stable)")
    return verdict


def check_prior_art(spec: ProblemSpec, T: float, which: str, **kw) -> CriterionVerdict:
    fn = {"gopalsamy": _gopalsamy, "agarwal": _agarwal, "yu": _yu, "tangzou": _tangzou,
          "kato": _kato}.get(which)
    if fn is None:
        raise ValueError(f"unknown prior-art criterion {which!r}")
    return fn(spec, T, **kw)


# -- registry ----------------------------------------------------------------------------------

CRITERIA = {
    "thm1": _theorem1,
    "thm2a_cond": _theorem2a,
    "thm2b_cond": _theorem2b,
    "cor2a_a": _corollary2a_a,
    "cor2a_b": _corollary2a_b,
    "cor2b": _corollary2b,
    "thm_unbounded_a": _unbounded_a,
    "thm_unbounded_b": _unbounded_b,
    "pantograph_a": _pantograph_a,
    "pantograph_b": _pantograph_b,
    "prop_gopalsamy": _gopalsamy,
    "prop_agarwal": _agarwal,
    "prop_yu": _yu,
    "prop_tangzou": _tangzou,
    "prop_kato": _kato,
}
CRITERION_IDS = tuple(CRITERIA)


def run_criterion(cid: str, spec: ProblemSpec, T: float, *, ctx: Context | None = None,
                  **kw) -> CriterionVerdict:
    try:
        fn = CRITERIA[cid]
    except KeyError:
        raise ValueError(f"unknown criterion {cid!r}; choose from "
                         + ", ".join(CRITERION_IDS)) from None
    return fn(spec, T, ctx=ctx, **kw)


def run_all(spec: ProblemSpec, T: float, criteria=None, grid_points: int = DEFAULT_GRID,
            tol: float = analysis.DEFAULT_TOL, slack: float = SLACK) -> list:
    """Run the selected criteria (default: all) and order them by strength of
    conclusion, ties broken by the fixed criterion order."""
    ids = CRITERION_IDS if criteria is None else tuple(criteria)
    ctx = Context(spec, T, grid_points, tol, slack)
    verdicts = []
    for cid in ids:
        try:
            verdicts.append(run_criterion(cid, spec, T, ctx=ctx))
        except (ExprError, ArithmeticError, ValueError, RuntimeError) as exc:
            verdicts.append(_not_applicable(cid, ctx, f"failed: {exc}"))
    order = {cid: i for i, cid in enumerate(CRITERION_IDS)}
    return sorted(verdicts, key=lambda v: (_STRENGTH[v.conclusion],
                                           order.get(v.criterion_id, len(order))))
