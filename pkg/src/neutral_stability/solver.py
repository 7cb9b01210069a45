"""Fixed-step solver for the neutral problem in integral (Hale) form.

The scheme advances ``y(t) = x(t) - a(t) x(g(t))`` with the trapezoidal rule

    y_{i+1} = y_i - dt/2 * (R_i + R_{i+1}),   R = b x(h) + c x - f,

and recovers ``x_{i+1} = y_{i+1} + a_{i+1} x(g_{i+1})``. Lagged values are read
from the history for arguments ``<= t0`` and from the piecewise linear
interpolant of the computed nodes otherwise. When a lagged argument falls
inside the step being computed, the endpoint value is found by fixed-point
iteration.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .exprlang import Cond, Num, Piecewise, TimeExpr, Var, evaluate
from .model import ProblemSpec

MAX_FIXED_POINT_ITERATIONS = 50


class SolverError(RuntimeError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message if t is None else f"{message} (t={t!r})")
        self.t = t


def _vectorize(coef, params) -> Callable | None:
    if coef is None:
        return None
    if isinstance(coef, TimeExpr):
        return lambda ts: evaluate(coef, np.asarray(ts, dtype=float), params)
    return lambda ts: np.broadcast_to(
        np.asarray(coef(np.asarray(ts, dtype=float)), dtype=float), np.shape(ts)).copy()


@dataclass
class Trajectory:
    grid: np.ndarray
    values: np.ndarray
    y_values: np.ndarray
    step: float
    interp: str
    history: Callable            # vectorised phi, used for t <= t0
    dy_values: np.ndarray | None = None
    neutral: Callable | None = None   # vectorised a, for cubic_on_y reconstruction
    neutral_arg: Callable | None = None  # vectorised g

    @property
    def t0(self) -> float:
        return float(self.grid[0])

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def __call__(self, t):
        return dense_eval(self, t)

    def to_csv(self, path) -> None:
        write_csv(self, path)


@dataclass
class FundamentalSamples:
    s: float
    grid: np.ndarray
    values: np.ndarray

    def at(self, t):
        """X(t, s); zero before the jump time."""
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.grid, self.values)
        return np.where(t < self.s, 0.0, out)


def _grid(t0, T, dt):
    if not dt > 0:
        raise SolverError(f"step must be positive, got {dt}")
    if not T > t0:
        raise SolverError(f"horizon {T} must exceed t0 = {t0}")
    n = max(1, math.ceil((T - t0) / dt - 1e-9))
    step = (T - t0) / n
    ts = t0 + step * np.arange(n + 1)
    ts[-1] = T
    return ts, step


def solve(spec: ProblemSpec, dt: float, T: float, interp: str = "linear") -> Trajectory:
    """Solve the initial value problem on ``[t0, T]`` with step at most ``dt``.

    ``spec`` may be any object with the attributes of :class:`ProblemSpec`; its
    coefficients may be TimeExprs or vectorised callables.
    """
    if interp not in ("linear", "cubic_on_y"):
        raise ValueError(f"unknown interpolation mode {interp!r}")
    params = getattr(spec, "params", {}) or {}
    t0 = float(spec.t0)
    ts, step = _grid(t0, T, dt)
    n = ts.size - 1

    a_fn = _vectorize(spec.a, params)
    phi_fn = _vectorize(spec.phi, params)
    g_fn = _vectorize(spec.g, params)
    A = a_fn(ts)
    B = _vectorize(spec.b, params)(ts)
    G = g_fn(ts)
    H = _vectorize(spec.h, params)(ts)
    C = np.zeros_like(ts) if spec.c is None else _vectorize(spec.c, params)(ts)
    F = np.zeros_like(ts) if spec.f is None else _vectorize(spec.f, params)(ts)

    slack = 1e-12 * np.maximum(1.0, np.abs(ts))
    for name, lag in (("g", G), ("h", H)):
        bad = np.flatnonzero(lag > ts + slack)
        if bad.size:
            raise SolverError(f"lagged argument {name}(t) = {lag[bad[0]]!r} exceeds t",
                              float(ts[bad[0]]))
    a0 = float(np.max(np.abs(A)))
    if a0 >= 1.0:
        raise SolverError(f"sup |a| = {a0!r} >= 1 on the window",
                          float(ts[np.argmax(np.abs(A))]))
    fp_tol = 1e-12 / (1.0 - a0)

    # history values at lagged arguments that fall before t0
    def hist_at(lag):
        out = np.full(lag.shape, np.nan)
        mask = lag <= t0
        if mask.any():
            out[mask] = phi_fn(lag[mask])
        return out

    PG, PH = hist_at(G), hist_at(H)

    tl, Al, Bl, Cl, Fl = ts.tolist(), A.tolist(), B.tolist(), C.tolist(), F.tolist()
    Gl, Hl, PGl, PHl = G.tolist(), H.tolist(), PG.tolist(), PH.tolist()

    x0 = float(phi_fn(np.array([t0]))[0])
    x = [x0]
    y = [x0 - Al[0] * PGl[0]]
    R = [Bl[0] * PHl[0] + Cl[0] * x0 - Fl[0]]
    half = 0.5 * step
    inv_step = 1.0 / step

    for j in range(1, n + 1):
        i = j - 1
        ti = tl[i]
        # lagged argument of the neutral term
        s = Gl[j]
        if s <= t0:
            xg_known, tg = PGl[j], 0.0
        elif s <= ti:
            k = int((s - t0) * inv_step)
            if k >= i:
                k = i - 1
            w = (s - tl[k]) * inv_step
            xg_known, tg = x[k] + w * (x[k + 1] - x[k]), 0.0
        else:
            tg = (s - ti) * inv_step
            xg_known = None
        # lagged argument of the delay term
        s = Hl[j]
        if s <= t0:
            xh_known, th = PHl[j], 0.0
        elif s <= ti:
            k = int((s - t0) * inv_step)
            if k >= i:
                k = i - 1
            w = (s - tl[k]) * inv_step
            xh_known, th = x[k] + w * (x[k + 1] - x[k]), 0.0
        else:
            th = (s - ti) * inv_step
            xh_known = None

        aj, bj, cj, fj = Al[j], Bl[j], Cl[j], Fl[j]
        yi, Ri, xi = y[i], R[i], x[i]
        implicit = xg_known is None or xh_known is None or cj != 0.0
        xj = xi
        for _ in range(MAX_FIXED_POINT_ITERATIONS):
            xh = xh_known if xh_known is not None else xi + th * (xj - xi)
            xg = xg_known if xg_known is not None else xi + tg * (xj - xi)
            Rj = bj * xh + cj * xj - fj
            yj = yi - half * (Ri + Rj)
            new = yj + aj * xg
            if not implicit:
                xj = new
                break
            if abs(new - xj) <= fp_tol * max(1.0, abs(new)):
                xj = new
                xh = xh_known if xh_known is not None else xi + th * (xj - xi)
                Rj = bj * xh + cj * xj - fj
                yj = yi - half * (Ri + Rj)
                break
            if not math.isfinite(new):
                raise SolverError("fixed-point iteration diverged", tl[j])
            xj = new
        else:
            raise SolverError(
                f"fixed-point iteration did not converge in "
                f"{MAX_FIXED_POINT_ITERATIONS} iterations", tl[j])
        x.append(xj)
        y.append(yj)
        R.append(Rj)

    values = np.array(x)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise SolverError("solution overflowed", float(ts[bad]))
    return Trajectory(ts, values, np.array(y), step, interp, phi_fn,
                      dy_values=-np.array(R), neutral=a_fn, neutral_arg=g_fn)


# -- dense output -------------------------------------------------------------------

def _hermite_y(traj: Trajectory, s: np.ndarray) -> np.ndarray:
    grid, yv, dy = traj.grid, traj.y_values, traj.dy_values
    k = np.clip(np.searchsorted(grid, s, side="right") - 1, 0, grid.size - 2)
    h = grid[k + 1] - grid[k]
    u = (s - grid[k]) / h
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    return h00 * yv[k] + h10 * h * dy[k] + h01 * yv[k + 1] + h11 * h * dy[k + 1]


def _cubic_x(traj: Trajectory, s: np.ndarray) -> np.ndarray:
    # x(s) = y(s) + a(s) x(g(s)), unrolled until the argument reaches the history
    out = np.zeros_like(s)
    weight = np.ones_like(s)
    arg = s.copy()
    active = np.ones(s.shape, dtype=bool)
    for _ in range(100_000):
        if not active.any():
            break
        hist = active & (arg <= traj.t0)
        if hist.any():
            out[hist] += weight[hist] * traj.history(arg[hist])
            active &= ~hist
        if not active.any():
            break
        cur = arg[active]
        nodes = np.searchsorted(traj.grid, cur)
        nodes = np.minimum(nodes, traj.grid.size - 1)
        exact = traj.grid[nodes] == cur
        vals = np.where(exact, traj.values[nodes], 0.0)
        idx = np.flatnonzero(active)
        done = idx[exact]
        out[done] += weight[done] * vals[exact]
        active[done] = False
        rest = idx[~exact]
        if rest.size == 0:
            break
        r = arg[rest]
        out[rest] += weight[rest] * _hermite_y(traj, r)
        weight[rest] *= traj.neutral(r)
        arg[rest] = traj.neutral_arg(r)
        negligible = np.abs(weight[rest]) < 1e-17
        active[rest[negligible]] = False
    else:
        raise SolverError("neutral recursion did not terminate in dense output")
    return out


def dense_eval(traj: Trajectory, t):
    """Value of the solution at ``t`` (scalar or array).

    History for ``t <= t0``; exact stored value at grid nodes; otherwise the
    trajectory's interpolant.
    """
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    top = traj.grid[-1]
    beyond = tt > top + 1e-12 * max(1.0, abs(top))
    if beyond.any():
        raise SolverError("query beyond computed horizon", float(tt[beyond][0]))
    tt = np.minimum(tt, top)
    out = np.empty(tt.shape)
    hist = tt < traj.t0
    if hist.any():
        out[hist] = traj.history(tt[hist])
    rest = ~hist
    if rest.any():
        if traj.interp == "linear" or traj.dy_values is None:
            out[rest] = np.interp(tt[rest], traj.grid, traj.values)
        else:
            out[rest] = _cubic_x(traj, tt[rest])
    return float(out[0]) if scalar else out


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y"])
        for t, x, y in zip(traj.grid, traj.values, traj.y_values):
            w.writerow([f"{t:.17g}", f"{x:.17g}", f"{y:.17g}"])


# -- fundamental functions ----------------------------------------------------------------

def unit_jump(s: float) -> TimeExpr:
    """History that is 0 before ``s`` and 1 from ``s`` on."""
    return TimeExpr(Piecewise(((Cond("<", Num(float(s))), Num(0.0)),), Num(1.0)))


def fundamental(b, h, c=None, s: float = 0.0, T: float = 1.0, dt: float = 1e-3,
                params=None) -> FundamentalSamples:
    """Sample the fundamental function X(t, s) of ``x' + b x(h) + c x = 0`` on [s, T]."""
    spec = ProblemSpec(t0=float(s), a=TimeExpr(Num(0.0)), b=b, g=TimeExpr(Var()), h=h,
                       phi=unit_jump(s), c=c, params=dict(params or {}))
    traj = solve(spec, dt, T)
    return FundamentalSamples(float(s), traj.grid, traj.values)


def fundamental_lattice(b, h, s_values: Iterable[float], T: float, dt: float,
                        c=None, params=None, executor: Executor | None = None
                        ) -> list[FundamentalSamples]:
    """Fundamental functions for many jump times; optionally on an executor."""
    s_values = [float(s) for s in s_values]
    if executor is None:
        return [fundamental(b, h, c, s, T, dt, params) for s in s_values]
    futures = [executor.submit(fundamental, b, h, c, s, T, dt, params) for s in s_values]
    return [f.result() for f in futures]
