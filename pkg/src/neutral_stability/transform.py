"""Time substitution ``s = p(t) = int_{t0}^t b`` for the neutral equation.

Under the substitution ``z(s) = x(t)`` the equation becomes

    (z(s) - a~(s) z(g~(s)))' = -z(h~(s)),   s >= 0,

with ``a~(s) = a(t)``, ``g~(s) = p(g(t))`` and ``h~(s) = p(h(t))``. Delays that grow
without bound in ``t`` can become bounded in ``s``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import analysis
from .model import ProblemSpec
from .solver import _vectorize, dense_eval, solve

TABLE_TOL = 1e-12
NEWTON_STEPS = 4


class TransformError(ValueError):
    pass


class TransformedProblem:
    """Problem in ``s``-time; exposes the attributes :func:`solver.solve` reads.

    Coefficients are vectorised callables of ``s``. ``p`` and ``p_inv`` map
    between the two time axes.
    """

    def __init__(self, spec: ProblemSpec, t_nodes: np.ndarray, p_nodes: np.ndarray,
                 T: float, tol: float = TABLE_TOL):
        self.source = spec
        self.t_nodes = t_nodes
        self.p_nodes = p_nodes
        self.tol = tol
        self.T_original = float(T)
        self._b = _vectorize(spec.b, spec.params)
        self._a = _vectorize(spec.a, spec.params)
        self._g = _vectorize(spec.g, spec.params)
        self._h = _vectorize(spec.h, spec.params)
        self._phi = _vectorize(spec.phi, spec.params)
        self._guess = PchipInterpolator(p_nodes, t_nodes, extrapolate=True)

        self.t0 = 0.0
        self.params: dict = {}
        self.c = None
        self.f = None
        self.tau = None
        self.sigma = None
        self.a = lambda s: self._a(self.p_inv(s))
        self.b = lambda s: np.ones(np.shape(s))
        self.g = lambda s: self.p(self._g(self.p_inv(s)))
        self.h = lambda s: self.p(self._h(self.p_inv(s)))
        self.phi = lambda s: self._phi(self.p_inv(s))

    @property
    def horizon(self) -> float:
        """``p(T)``: the end of the transformed window."""
        return float(self.p_nodes[-1])

    @property
    def window(self) -> tuple:
        return (float(self.t_nodes[0]), self.T_original)

    def p(self, t):
        """``int_{t0}^t b`` from the table plus a local quadrature correction."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        k = np.clip(np.searchsorted(self.t_nodes, flat, side="right") - 1, 0,
                    self.t_nodes.size - 2)
        base = self.t_nodes[k]
        corr, *_ = analysis.integrate_many(self._b, base, flat, self.tol)
        return (self.p_nodes[k] + corr).reshape(t.shape)

    def p_inv(self, s):
        """Inverse of ``p``: monotone cubic guess refined by Newton steps (``p' = b``)."""
        s = np.asarray(s, dtype=float)
        t = self._guess(s)
        lo, hi = self.t_nodes[0], self.t_nodes[-1]
        for _ in range(NEWTON_STEPS):
            t = np.clip(t, lo, hi)
            bt = self._b(t)
            step = np.where(bt > 0, (self.p(t) - s) / np.where(bt > 0, bt, 1.0), 0.0)
            t = t - step
            if np.all(np.abs(step) <= 1e-14 * np.maximum(1.0, np.abs(t))):
                break
        return t


def build_transform(spec: ProblemSpec, T: float, table_points: int = 10_000,
                    tol: float = TABLE_TOL) -> TransformedProblem:
    """Tabulate ``p`` on ``[min(g, h, t0), T]`` and return the transformed problem."""
    if spec.has_instantaneous_term or spec.has_forcing:
        raise TransformError("the substitution needs c and f absent")
    t0 = float(spec.t0)
    if not T > t0:
        raise ValueError(f"horizon T={T} must exceed t0={t0}")
    if table_points < 2:
        raise ValueError("need at least 2 table points")
    lo = t0
    for arg in (spec.g, spec.h):
        m = analysis.min_on_window(arg, t0, T, 1000, spec.params)
        lo = min(lo, m.value)
    main = np.linspace(t0, T, table_points)
    if lo < t0:
        pre_n = max(2, int(round(table_points * (t0 - lo) / (T - t0))) + 1)
        pre = np.linspace(lo, t0, min(pre_n, table_points))
        nodes = np.concatenate([pre[:-1], main])
    else:
        nodes = main
    incs, *_ = analysis.integrate_many(spec.b, nodes[:-1], nodes[1:], tol, spec.params)
    cum = np.concatenate([[0.0], np.cumsum(incs)])
    i0 = int(np.searchsorted(nodes, t0))
    p_nodes = cum - cum[i0]
    bad = np.flatnonzero(np.diff(p_nodes) <= 0)
    if bad.size:
        raise TransformError(
            f"p is not strictly increasing on [{nodes[bad[0]]:.6g}, {nodes[bad[0] + 1]:.6g}]"
            " (b vanishes or is negative there)")
    return TransformedProblem(spec, nodes, p_nodes, T, tol)


@dataclass
class TransformReport:
    max_deviation: float
    at_t: float
    tol: float
    dt: float
    window: tuple
    s_window: tuple
    points: int
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol

    def as_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "at_t": self.at_t, "tol": self.tol,
                "passed": self.passed, "dt": self.dt, "window": list(self.window),
                "s_window": list(self.s_window), "points": self.points,
                "notes": list(self.notes)}


def verify_transform(spec: ProblemSpec, transformed: TransformedProblem, dt: float,
                     T: float, tol: float = 5e-3) -> TransformReport:
    """Solve both problems and compare ``z(p(t))`` with ``x(t)`` on the original grid.

    The transformed problem is solved on ``[0, p(T)]`` with the same step ``dt``.
    """
    x = solve(spec, dt, T)
    sT = float(transformed.p(np.array([T]))[0])
    z = solve(transformed, dt, sT)
    s = transformed.p(x.grid)
    s = np.minimum(s, z.horizon)
    dev = np.abs(dense_eval(z, s) - x.values)
    k = int(np.argmax(dev))
    return TransformReport(float(dev[k]), float(x.grid[k]), tol, dt, (float(spec.t0), T),
                           (0.0, sT), int(x.grid.size))
