"""Problem description for the neutral initial value problem

    (x(t) - a(t) x(g(t)))' + b(t) x(h(t)) + c(t) x(t) = f(t),  t >= t0,
    x(t) = phi(t),                                               t <= t0,

plus the sampled check of the standing assumptions on a finite window.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import analysis
from .exprlang import BinOp, ExprError, Num, TimeExpr, Var, evaluate, parse, to_text

ParamSet = Mapping[str, float]

EXPR_KEYS = ("a", "b", "g", "h", "c", "phi", "f")
REQUIRED_KEYS = ("t0", "a", "b", "g", "h", "phi")
NUMBER_KEYS = ("t0", "tau", "sigma")


class ConfigError(ValueError):
    def __init__(self, message, key=None, offset=None, unbound=None):
        super().__init__(message)
        self.key = key
        self.offset = offset
        self.unbound = frozenset(unbound or ())


@dataclass(frozen=True)
class ProblemSpec:
    t0: float
    a: TimeExpr
    b: TimeExpr
    g: TimeExpr
    h: TimeExpr
    phi: TimeExpr
    c: TimeExpr | None = None
    f: TimeExpr | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    tau: float | None = None
    sigma: float | None = None

    def exprs(self) -> dict:
        out = {k: getattr(self, k) for k in EXPR_KEYS}
        return {k: v for k, v in out.items() if v is not None}

    @property
    def free_params(self) -> frozenset:
        return frozenset().union(*(e.free_params for e in self.exprs().values()))

    def with_params(self, **values) -> "ProblemSpec":
        unknown = set(values) - self.free_params
        if unknown:
            raise ConfigError("not a free parameter of the problem: "
                              + ", ".join(sorted(unknown)))
        merged = dict(self.params)
        merged.update({k: float(v) for k, v in values.items()})
        return replace(self, params=merged)

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    @property
    def has_instantaneous_term(self) -> bool:
        return not _is_zero(self.c)

    @property
    def has_forcing(self) -> bool:
        return not _is_zero(self.f)

    def __call__(self, name: str, t):
        """Evaluate coefficient ``name`` at ``t`` with the bound parameters."""
        expr = getattr(self, name)
        if expr is None:
            return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))
        return evaluate(expr, t, self.params)


def _is_zero(expr: TimeExpr | None) -> bool:
    return expr is None or (isinstance(expr.root, Num) and expr.root.value == 0.0)


# -- config files -------------------------------------------------------------------

_LINE_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*?)\s*$")


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i]
    return line


def _parse_value(raw: str, key: str, lineno: int):
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1], True
    try:
        return float(raw), False
    except ValueError:
        raise ConfigError(f"line {lineno}: value of {key!r} must be a number or a "
                          f"quoted expression, got {raw!r}", key) from None


def load_problem(config_text: str) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from flat ``key = value`` config text."""
    raw: dict = {}
    params: dict = {}
    for lineno, line in enumerate(config_text.splitlines(), 1):
        line = _strip_comment(line).strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = m.group(1), m.group(2)
        if key.startswith("param."):
            name = key[len("param."):]
            val, quoted = _parse_value(value, key, lineno)
            if quoted:
                try:
                    val = float(val)
                except ValueError:
                    raise ConfigError(f"line {lineno}: {key} must be a number", key) from None
            if name in params:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
            params[name] = val
            continue
        if key not in EXPR_KEYS and key not in NUMBER_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", key)
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        raw[key] = _parse_value(value, key, lineno)

    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError("missing mandatory key(s): " + ", ".join(missing), missing[0])

    fields = {}
    for key in NUMBER_KEYS:
        if key in raw:
            val, quoted = raw[key]
            try:
                fields[key] = float(val)
            except ValueError:
                raise ConfigError(f"{key!r} must be a number, got {val!r}", key) from None
    for key in EXPR_KEYS:
        if key not in raw:
            continue
        val, quoted = raw[key]
        text = val if quoted else repr(val)
        try:
            fields[key] = parse(text)
        except ExprError as exc:
            raise ConfigError(f"key {key!r}: {exc}", key,
                              offset=getattr(exc, "offset", None)) from exc

    spec = ProblemSpec(params=params, **fields)
    if spec.t0 < 0 or not math.isfinite(spec.t0):
        raise ConfigError(f"t0 must be a finite number >= 0, got {spec.t0}", "t0")
    unbound = spec.free_params - set(params)
    if unbound:
        raise ConfigError("unbound parameter(s): " + ", ".join(sorted(unbound)),
                          unbound=unbound)
    return spec


def load_problem_file(path) -> ProblemSpec:
    return load_problem(Path(path).read_text(encoding="utf-8"))


def dump_problem(spec: ProblemSpec) -> str:
    """Render ``spec`` back into config text accepted by :func:`load_problem`."""
    lines = [f"t0 = {spec.t0!r}"]
    for key, expr in spec.exprs().items():
        lines.append(f'{key} = "{expr.source or to_text(expr)}"')
    for key in ("tau", "sigma"):
        if getattr(spec, key) is not None:
            lines.append(f"{key} = {getattr(spec, key)!r}")
    for name, value in sorted(spec.params.items()):
        lines.append(f"param.{name} = {value!r}")
    return "\n".join(lines) + "\n"


# -- assumption checks ------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    ok: bool
    witness: float
    detail: str = ""

    def as_dict(self):
        return {"ok": self.ok, "witness": self.witness, "detail": self.detail}


@dataclass(frozen=True)
class AssumptionReport:
    window: tuple
    grid_points: int
    a_norm: analysis.SupEstimate
    b_nonneg: Check
    g_le_t: Check
    h_le_t: Check
    g_to_inf: Check
    h_to_inf: Check
    delta_hat: analysis.SupEstimate
    tau_hat: analysis.SupEstimate
    delta_bounded: Check
    tau_bounded: Check

    @property
    def delays_bounded(self) -> bool:
        return self.delta_bounded.ok and self.tau_bounded.ok

    @property
    def a_below_one(self) -> bool:
        return self.a_norm.value < 1.0

    @property
    def solver_ready(self) -> bool:
        return self.a_below_one and self.g_le_t.ok and self.h_le_t.ok

    @property
    def assumptions_hold(self) -> bool:
        """Standing hypotheses of the stability tests, sampled on the window."""
        return (self.solver_ready and self.b_nonneg.ok
                and self.g_to_inf.ok and self.h_to_inf.ok)

    def as_dict(self) -> dict:
        return {
            "window": list(self.window), "grid_points": self.grid_points,
            "a_norm": self.a_norm.as_dict(), "b_nonneg": self.b_nonneg.as_dict(),
            "g_le_t": self.g_le_t.as_dict(), "h_le_t": self.h_le_t.as_dict(),
            "g_to_inf": self.g_to_inf.as_dict(), "h_to_inf": self.h_to_inf.as_dict(),
            "delta_hat": self.delta_hat.as_dict(), "tau_hat": self.tau_hat.as_dict(),
            "delta_bounded": self.delta_bounded.as_dict(),
            "tau_bounded": self.tau_bounded.as_dict(),
            "delays_bounded": self.delays_bounded,
            "solver_ready": self.solver_ready, "assumptions_hold": self.assumptions_hold,
        }


def lag_expr(arg: TimeExpr) -> TimeExpr:
    """The delay ``t - arg(t)`` as an expression."""
    return TimeExpr(BinOp("-", Var(), arg.root))


def _nonneg_check(fexpr, ts, lo, hi, n, params, label) -> Check:
    vals = evaluate(fexpr, ts, params)
    bad = np.flatnonzero(vals < 0)
    if bad.size:
        t = float(ts[bad[0]])
        return Check(False, t, f"{label} = {vals[bad[0]]!r} < 0")
    low = analysis.min_on_window(fexpr, lo, hi, n, params)
    if low.value < 0:
        return Check(False, low.arg, f"{label} = {low.value!r} < 0")
    return Check(True, low.arg, f"min {label} = {low.value!r}")


def _grows(arg: TimeExpr, T: float, params) -> Check:
    probes = [T, 2 * T, 4 * T]
    vals = [evaluate(arg, p, params) for p in probes]
    for p, v0, v1 in zip(probes[1:], vals, vals[1:]):
        if not v1 > v0:
            return Check(False, p, f"no growth: value {v1!r} at {p!r} vs {v0!r}")
    return Check(True, probes[-1], "values " + ", ".join(f"{v:.6g}" for v in vals))


def _bounded(lag: TimeExpr, first: analysis.SupEstimate, t0, T, n, params) -> Check:
    doubled = analysis.max_on_window(lag, t0, t0 + 2 * (T - t0), n, params)
    ok = doubled.value <= first.value * (1 + 1e-6) + 1e-9
    return Check(ok, doubled.arg,
                 f"sup on doubled window {doubled.value!r} vs {first.value!r}")


def validate_assumptions(spec: ProblemSpec, T: float, grid_points: int = 1000
                         ) -> AssumptionReport:
    """Sample the standing assumptions on ``[t0, T]``.

    Domain errors while evaluating a coefficient propagate as
    :class:`~neutral_stability.exprlang.DomainError` carrying the offending t.
    """
    t0 = spec.t0
    if not T > t0:
        raise ValueError(f"need T > t0, got T={T}, t0={t0}")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    n = max(grid_points, 3)
    p = spec.params
    ts = np.linspace(t0, T, n)
    for key, expr in spec.exprs().items():
        if key != "phi":
            evaluate(expr, ts, p)
    lags = np.concatenate([evaluate(spec.g, ts, p), evaluate(spec.h, ts, p)])
    lo_hist = min(float(lags.min()), t0)
    evaluate(spec.phi, np.linspace(lo_hist, t0, n), p)

    a_norm = analysis.sup_on_window(spec.a, t0, T, n, p)
    b_nonneg = _nonneg_check(spec.b, ts, t0, T, n, p, "b")
    delta = lag_expr(spec.g)
    tau = lag_expr(spec.h)
    g_le_t = _nonneg_check(delta, ts, t0, T, n, p, "t - g(t)")
    h_le_t = _nonneg_check(tau, ts, t0, T, n, p, "t - h(t)")
    delta_hat = analysis.max_on_window(delta, t0, T, n, p)
    tau_hat = analysis.max_on_window(tau, t0, T, n, p)
    return AssumptionReport(
        window=(t0, T), grid_points=n, a_norm=a_norm, b_nonneg=b_nonneg,
        g_le_t=g_le_t, h_le_t=h_le_t,
        g_to_inf=_grows(spec.g, T, p), h_to_inf=_grows(spec.h, T, p),
        delta_hat=delta_hat, tau_hat=tau_hat,
        delta_bounded=_bounded(delta, delta_hat, t0, T, n, p),
        tau_bounded=_bounded(tau, tau_hat, t0, T, n, p),
    )


BUNDLED_EXAMPLES = ("example1", "example2", "example3")


def load_example(name: str) -> ProblemSpec:
    """Load one of the bundled example problems by name (e.g. ``"example2"``)."""
    from importlib import resources
    if name not in BUNDLED_EXAMPLES:
        raise ValueError(f"unknown example {name!r}; choose from {', '.join(BUNDLED_EXAMPLES)}")
    text = resources.files(__package__).joinpath("configs", f"{name}.toml").read_text("utf-8")
    return load_problem(text)
