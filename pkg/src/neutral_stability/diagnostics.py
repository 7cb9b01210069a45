"""Empirical checks of the lemma-level bounds and decay-rate fits of trajectories.

Every report carries the numbers it computed together with the tolerance used,
and serialises to plain JSON through ``as_dict``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis
from .exprlang import Call, Cond, Num, Piecewise, TimeExpr, Var, evaluate
from .model import ProblemSpec
from .solver import FundamentalSamples, Trajectory, _vectorize, fundamental_lattice, solve

INV_E = 1.0 / math.e
NEUMANN_CAP = 200
NEUMANN_TOL = 1e-12
MIN_FIT_POINTS = 10


class DiagnosticsError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# -- decay fitting -----------------------------------------------------------------------------

@dataclass
class DecayFit:
    kind: str
    M: float
    gamma: float
    r_squared: float
    window_used: tuple
    envelope: str = "decreasing"
    points: int = 0
    label: str = "single-trajectory estimate"

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def _linfit(u, v):
    A = np.vstack([np.ones_like(u), u]).T
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(coef[0]), float(coef[1]), r2


def fit_decay_samples(t, x, kind: str = "exponential", tail_fraction: float = 0.5
                      ) -> DecayFit:
    """Fit ``|x| <= M e^{-gamma (t - t0)}`` or ``|x| <= M t^{-gamma}`` to an envelope.

    The envelope is the running maximum of ``|x|`` taken from the right, so it
    bounds every later value and is non-increasing. When the solution grows the
    fit uses the running maximum from the left instead and ``gamma`` comes out
    negative.
    """
    if kind not in ("exponential", "algebraic"):
        raise ValueError(f"kind must be 'exponential' or 'algebraic', got {kind!r}")
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    t = np.asarray(t, dtype=float)
    x = np.abs(np.asarray(x, dtype=float))
    t_start = t[0]
    lo = t[-1] - tail_fraction * (t[-1] - t[0])
    mask = t >= lo - 1e-12 * max(1.0, abs(lo))
    t, x = t[mask], x[mask]
    window = (float(t[0]), float(t[-1]))
    if kind == "algebraic" and t[0] <= 0:
        raise DiagnosticsError("algebraic fit needs t > 0 on the tail window")
    if np.all(x == 0.0):
        return DecayFit(kind, 0.0, math.inf, 1.0, window, points=int(t.size))

    def fit_on(env, label):
        keep = env > 0
        if np.count_nonzero(keep) < MIN_FIT_POINTS:
            raise DiagnosticsError(f"only {np.count_nonzero(keep)} non-zero envelope "
                                   f"points; need {MIN_FIT_POINTS}")
        u = (t[keep] - t_start) if kind == "exponential" else np.log(t[keep])
        c0, slope, r2 = _linfit(u, np.log(env[keep]))
        return DecayFit(kind, math.exp(c0), -slope, r2, window, label,
                        int(np.count_nonzero(keep)))

    if t.size < MIN_FIT_POINTS:
        raise DiagnosticsError(f"only {t.size} points on the tail; need {MIN_FIT_POINTS}")
    # a decaying solution flattens the left envelope and a growing one the right
    # envelope; keep whichever carries the trend
    down = fit_on(np.maximum.accumulate(x[::-1])[::-1], "decreasing")
    up = fit_on(np.maximum.accumulate(x), "increasing")
    if up.gamma < 0 and abs(up.gamma) > abs(down.gamma):
        return up
    return down


def fit_decay(traj, kind: str = "exponential", tail_fraction: float = 0.5) -> DecayFit:
    """Decay fit of a :class:`Trajectory` (or any object with ``grid``/``values``)."""
    return fit_decay_samples(traj.grid, traj.values, kind, tail_fraction)


# -- fundamental-function properties -------------------------------------------------------------

@dataclass
class FundamentalReport:
    positivity_min: float
    positivity_at: tuple
    positivity_ok: bool
    integrals: dict
    integral_ok: bool
    delay_integral_sup: float
    delay_integral_ok: bool
    tol: float
    tau0: float
    lattice_spacing: float
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.positivity_ok and self.integral_ok

    def as_dict(self) -> dict:
        out = asdict(self)
        out["integrals"] = {repr(k): v for k, v in self.integrals.items()}
        out["ok"] = self.ok
        return _jsonable(out)


def _lattice_integral(s_nodes, x_vals, weight, lo, hi, params, tol=1e-10) -> float:
    """int_lo^hi X(s) w(s) ds with X linear between lattice nodes."""
    wv = analysis.as_vectorized(weight, params)
    cuts = np.unique(np.concatenate([[lo, hi], s_nodes[(s_nodes > lo) & (s_nodes < hi)]]))

    def integrand(s):
        return np.interp(s, s_nodes, x_vals) * wv(s)
    vals, *_ = analysis.integrate_many(integrand, cuts[:-1], cuts[1:], tol)
    return float(np.sum(vals))


def _max_gap(nodes, lo, hi):
    inside = nodes[(nodes >= lo) & (nodes <= hi)]
    pts = np.concatenate([[lo], inside, [hi]])
    return float(np.max(np.diff(pts)))


def check_fundamental_properties(fs: list, b: TimeExpr, h: TimeExpr, tau0: float,
                                 tol: float = 1e-6, t_eval=None, t0: float | None = None,
                                 params=None) -> FundamentalReport:
    """Positivity of X, the bound ``int_{t0+tau0}^t X(t, s) b(s) ds <= 1`` and the
    ``1/e`` delay-integral condition that guarantees positivity.

    ``fs`` is a lattice of fundamental functions at increasing jump times; ``t0``
    defaults to the first jump time. The integral is assembled with ``X(t, .)``
    linear between lattice nodes; the lattice spacing must not exceed
    ``tau0 / 20`` (or a hundredth of the window when ``tau0 = 0``).
    """
    fs = sorted(fs, key=lambda f: f.s)
    s_nodes = np.array([f.s for f in fs])
    t0 = float(s_nodes[0]) if t0 is None else float(t0)
    horizon = min(float(f.grid[-1]) for f in fs)
    t_eval = [horizon] if t_eval is None else [float(t) for t in t_eval]

    mins = [(float(np.min(f.values)), f.s, float(f.grid[int(np.argmin(f.values))]))
            for f in fs]
    pmin, ps, pt = min(mins)
    start = t0 + tau0
    integrals = {}
    spacing = 0.0
    for t in t_eval:
        if t > horizon + 1e-12:
            raise DiagnosticsError(f"t={t} lies beyond the lattice horizon {horizon}")
        if t <= start:
            integrals[t] = 0.0
            continue
        limit = tau0 / 20.0 if tau0 > 0 else (t - t0) / 100.0
        covered = s_nodes[(s_nodes <= t + 1e-12)]
        if covered.size < 2 or covered[0] > start + 1e-12:
            raise DiagnosticsError(f"lattice does not cover [{start}, {t}]")
        gap = _max_gap(covered, start, t)
        spacing = max(spacing, gap)
        if gap > limit * (1 + 1e-9):
            raise DiagnosticsError(f"lattice spacing {gap:.6g} exceeds {limit:.6g} on "
                                   f"[{start}, {t}]")
        x_t = np.array([float(f.at(t)) for f in fs if f.s <= t + 1e-12])
        if covered[-1] < t:
            covered, x_t = np.append(covered, t), np.append(x_t, 1.0)  # X(t, t) = 1
        integrals[t] = _lattice_integral(covered, x_t, b, start, t, params)
    sup_int = analysis.sup_delay_integral(b, h, t0, max(t_eval + [t0 + 1e-9]), 1000,
                                          analysis.DEFAULT_TOL, params).value
    return FundamentalReport(
        positivity_min=pmin, positivity_at=(ps, pt), positivity_ok=pmin > -tol,
        integrals=integrals, integral_ok=all(v <= 1.0 + tol for v in integrals.values()),
        delay_integral_sup=sup_int, delay_integral_ok=sup_int <= INV_E + 1e-7,
        tol=tol, tau0=tau0, lattice_spacing=spacing)


def fundamental_battery_lattice(b, h, t0: float, t: float, tau0: float, dt: float,
                                params=None, executor=None, points_per_tau: int = 20):
    """Lattice of fundamental solves with spacing ``tau0/points_per_tau`` on [t0, t]."""
    width = tau0 / points_per_tau if tau0 > 0 else (t - t0) / 100.0
    n = max(2, int(math.ceil((t - t0) / width - 1e-9)) + 1)
    s_values = np.linspace(t0, t, n)[:-1]
    return fundamental_lattice(b, h, s_values, t, dt, params=params, executor=executor)


# -- representation of forced solutions ---------------------------------------------------------

@dataclass
class RepresentationReport:
    t: float
    direct: float
    assembled: float
    rel_error: float
    lattice_points: int
    dt: float

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def check_representation(b: TimeExpr, h: TimeExpr, f: TimeExpr, t0: float, t: float,
                         lattice_points: int = 201, dt: float = 1e-3, c=None, params=None,
                         executor=None) -> RepresentationReport:
    """Compare a direct solve of ``x' + b x(h) + c x = f`` (zero history) at ``t``
    with ``int_{t0}^t X(t, s) f(s) ds`` assembled from fundamental solves."""
    zero = TimeExpr(Num(0.0))
    spec = ProblemSpec(t0=t0, a=zero, b=b, g=TimeExpr(Var()), h=h, phi=zero, c=c, f=f,
                       params=dict(params or {}))
    direct = float(solve(spec, dt, t).values[-1])
    s_values = np.linspace(t0, t, lattice_points)
    lattice = fundamental_lattice(b, h, s_values[:-1], t, dt, c=c, params=params,
                                  executor=executor)
    x_t = np.array([float(fs.at(t)) for fs in lattice] + [1.0])  # X(t, t) = 1
    assembled = _lattice_integral(s_values, x_t, f, t0, t, params)
    rel = abs(direct - assembled) / max(abs(direct), 1e-300)
    return RepresentationReport(t, direct, assembled, rel, lattice_points, dt)


# -- a-priori bounds for forced problems ---------------------------------------------------------------

@dataclass
class SolutionBoundsReport:
    x_norm: float
    y_norm: float
    dy_norm: float
    a_norm: float
    b_norm: float
    f_norm: float
    x_bound: float
    dy_bound: float
    tol: float
    window: tuple

    @property
    def x_ok(self) -> bool:
        return self.x_norm <= self.x_bound + self.tol

    @property
    def dy_ok(self) -> bool:
        return self.dy_norm <= self.dy_bound + self.tol

    @property
    def ok(self) -> bool:
        return self.x_ok and self.dy_ok

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(x_ok=self.x_ok, dy_ok=self.dy_ok, ok=self.ok)
        return _jsonable(out)


def check_solution_bounds(traj: Trajectory, spec: ProblemSpec, T: float | None = None,
                          tol: float = 1e-9) -> SolutionBoundsReport:
    """Check ``|x|_I <= |y|_I/(1-||a||)`` and ``|y'|_I <= ||b|| |y|_I/(1-||a||) + ||f||``
    on ``I = [t0, T]`` for a forced problem with zero history."""
    if spec.has_instantaneous_term:
        raise DiagnosticsError("bounds are stated for equations without c(t) x(t)")
    t0 = float(spec.t0)
    T = traj.horizon if T is None else float(T)
    lag_lo = min(analysis.min_on_window(e, t0, T, 200, spec.params).value
                 for e in (spec.g, spec.h))
    probe = np.linspace(min(lag_lo, t0 - 1.0), t0, 200)
    if np.any(evaluate(spec.phi, probe, spec.params) != 0.0):
        raise DiagnosticsError("history must vanish (zero initial function)")
    sel = traj.grid <= T + 1e-12
    x_norm = float(np.max(np.abs(traj.values[sel])))
    y_norm = float(np.max(np.abs(traj.y_values[sel])))
    dy_norm = float(np.max(np.abs(traj.dy_values[sel])))
    a_n = analysis.sup_on_window(spec.a, t0, T, 1000, spec.params).value
    b_n = analysis.sup_on_window(spec.b, t0, T, 1000, spec.params).value
    f_n = 0.0 if spec.f is None else analysis.sup_on_window(spec.f, t0, T, 1000,
                                                           spec.params).value
    x_bound = y_norm / (1.0 - a_n)
    dy_bound = b_n * y_norm / (1.0 - a_n) + f_n
    return SolutionBoundsReport(x_norm, y_norm, dy_norm, a_n, b_n, f_n, x_bound, dy_bound,
                                tol, (t0, T))


# -- Neumann resolution of x - S x = y ------------------------------------------------------------

@dataclass
class NeumannReport:
    grid: np.ndarray
    values: np.ndarray
    iterations: int
    sup_x: float
    sup_y: float
    a0: float
    bound: float
    residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.sup_x <= self.bound + self.tol

    def as_dict(self) -> dict:
        return _jsonable({"iterations": self.iterations, "sup_x": self.sup_x,
                          "sup_y": self.sup_y, "a0": self.a0, "bound": self.bound,
                          "residual": self.residual, "tol": self.tol, "ok": self.ok,
                          "points": int(self.grid.size)})


def _samples(y, t0, T, points):
    if isinstance(y, Trajectory):
        return y.grid, y.y_values
    if isinstance(y, tuple) and len(y) == 2:
        return np.asarray(y[0], dtype=float), np.asarray(y[1], dtype=float)
    ts = np.linspace(t0, T, points)
    if isinstance(y, TimeExpr):
        return ts, np.broadcast_to(evaluate(y, ts), ts.shape).astype(float)
    if callable(y):
        return ts, np.broadcast_to(np.asarray(y(ts), dtype=float), ts.shape).copy()
    return ts, np.full(ts.shape, float(y))


def neumann_resolve(a, g, y, t0: float, T: float, points: int = 10_001, params=None,
                    tol: float = 1e-9) -> NeumannReport:
    """Solve ``x(t) - a(t) x(g(t)) = y(t)`` on ``[t0, T]`` with ``x = 0`` before ``t0``
    by the iteration ``x_{n+1} = y + S x_n`` from ``x_0 = y``.

    ``y`` may be a Trajectory (its ``y_values`` are used), a ``(grid, values)``
    pair, a TimeExpr, a callable or a constant. Lagged values between samples are
    interpolated linearly.
    """
    ts, ys = _samples(y, t0, T, points)
    A = np.broadcast_to(_vectorize(a, params)(ts), ts.shape)
    G = np.broadcast_to(_vectorize(g, params)(ts), ts.shape)
    if np.any(G > ts + 1e-12 * np.maximum(1.0, np.abs(ts))):
        raise DiagnosticsError("g(t) must not exceed t")
    a0 = float(np.max(np.abs(A)))
    if a0 >= 1.0:
        raise DiagnosticsError(f"sup |a| = {a0} must be below 1")
    inside = G >= t0

    def S(xv):
        return np.where(inside, A * np.interp(G, ts, xv), 0.0)

    x = ys.copy()
    for it in range(1, NEUMANN_CAP + 1):
        new = ys + S(x)
        change = float(np.max(np.abs(new - x)))
        x = new
        if change < NEUMANN_TOL:
            break
    else:
        raise DiagnosticsError(f"Neumann iteration did not settle in {NEUMANN_CAP} steps")
    residual = float(np.max(np.abs(x - S(x) - ys)))
    sup_x, sup_y = float(np.max(np.abs(x))), float(np.max(np.abs(ys)))
    return NeumannReport(ts, x, it, sup_x, sup_y, a0, sup_y / (1.0 - a0), residual, tol)


def staircase_reference(a0: float, k: int, y0: float = 1.0) -> list:
    """Plateau values of ``x = y0 + a0 x(t - 1)`` on ``[t0 + j, t0 + j + 1)``, j < k."""
    out, prev = [], 0.0
    for _ in range(k):
        prev = y0 + a0 * prev
        out.append(prev)
    return out


# -- boundedness probe ---------------------------------------------------------------------------

@dataclass
class BoundednessProbe:
    first_half_max: float
    second_half_max: float
    growth_ratio: float
    bounded: bool
    forcing_start: float
    window: tuple

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def bohl_perron_probe(spec: ProblemSpec, length: float = 200.0, dt: float = 1e-2,
                      delay_bound: float | None = None, ratio_limit: float = 1.05
                      ) -> BoundednessProbe:
    """Response to ``f = sin t`` (switched on after ``t0 + tau``) with zero history.

    The response counts as bounded when the maximum over the second half of the
    window does not exceed ``ratio_limit`` times the maximum over the first half.
    """
    t0 = float(spec.t0)
    tau = delay_bound if delay_bound is not None else (spec.tau or 0.0)
    start = t0 + tau
    forcing = TimeExpr(Piecewise(((Cond("<", Num(start)), Num(0.0)),),
                                 Call("sin", (Var(),))))
    probe = spec.replace(phi=TimeExpr(Num(0.0)), f=forcing)
    T = t0 + length
    traj = solve(probe, dt, T)
    mid = t0 + 0.5 * length
    first = float(np.max(np.abs(traj.values[traj.grid <= mid])))
    second = float(np.max(np.abs(traj.values[traj.grid > mid])))
    ratio = second / first if first > 0 else math.inf
    return BoundednessProbe(first, second, ratio, ratio <= ratio_limit, start, (t0, T))
