"""Adaptive quadrature and windowed supremum estimates.

Both primitives accept either a :class:`~neutral_stability.exprlang.TimeExpr`
(evaluated with ``params``) or a plain vectorised callable ``f(ts) -> array``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .exprlang import TimeExpr, evaluate

DEFAULT_TOL = 1e-9
MAX_SUBDIVISIONS = 10_000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuadResult:
    value: float
    abs_error_estimate: float
    subdivisions: int
    converged: bool = True


@dataclass(frozen=True)
class SupEstimate:
    value: float
    arg: float
    window: tuple
    coarse_points: int
    refined: bool
    # auxiliary lower extremum; only sup_delay_integral fills these in
    inf_value: float | None = None
    inf_arg: float | None = None

    def as_dict(self) -> dict:
        out = {"value": self.value, "arg": self.arg, "window": list(self.window),
               "coarse_points": self.coarse_points, "refined": self.refined}
        if self.inf_value is not None:
            out.update(inf_value=self.inf_value, inf_arg=self.inf_arg)
        return out


def as_vectorized(f, params: Mapping[str, float] | None = None) -> Callable:
    """Turn a TimeExpr (or an already vectorised callable) into ``ts -> array``."""
    if isinstance(f, TimeExpr):
        return lambda ts: evaluate(f, np.asarray(ts, dtype=float), params)
    return lambda ts: np.broadcast_to(
        np.asarray(f(np.asarray(ts, dtype=float)), dtype=float), np.shape(ts))


# -- quadrature ---------------------------------------------------------------------

def integrate_many(f, lo, hi, tol: float = DEFAULT_TOL, params=None,
                   max_subdivisions: int = MAX_SUBDIVISIONS):
    """Integrate ``f`` over many intervals ``[lo[k], hi[k]]`` at once.

    Each integral is computed by adaptive bisection with the Simpson rule on a
    subinterval paired with the composite Simpson rule on its two halves; a
    subinterval is accepted when the pair agrees to within its share of
    ``tol`` (prorated by width). Reversed intervals give negated integrals.

    Returns ``(values, error_estimates, subdivisions, converged)`` arrays.
    """
    fv = as_vectorized(f, params)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    n = lo.size
    sign = np.where(hi < lo, -1.0, 1.0)
    a0, b0 = np.minimum(lo, hi).ravel(), np.maximum(lo, hi).ravel()
    total = b0 - a0

    values = np.zeros(n)
    errors = np.zeros(n)
    splits = np.zeros(n, dtype=int)
    converged = np.ones(n, dtype=bool)

    owner = np.flatnonzero(total > 0)
    a, b = a0[owner], b0[owner]
    m = 0.5 * (a + b)
    fa, fm, fb = _eval3(fv, a, m, b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    while owner.size:
        w = b - a
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        fl, fr = _eval2(fv, lm, rm)
        left = w / 12.0 * (fa + 4.0 * fl + fm)
        right = w / 12.0 * (fm + 4.0 * fr + fb)
        halves = left + right
        est = np.abs(halves - whole) / 15.0
        allowed = tol * w / total[owner]
        tiny = w <= 1e-13 * np.maximum(1.0, np.abs(m))
        capped = splits[owner] >= max_subdivisions
        done = (est <= allowed) | tiny | capped
        if np.any(done):
            o = owner[done]
            np.add.at(values, o, halves[done] + (halves[done] - whole[done]) / 15.0)
            np.add.at(errors, o, est[done])
            converged[o[capped[done] & ~(est[done] <= allowed[done])]] = False
        keep = ~done
        if not np.any(keep):
            break
        o = owner[keep]
        np.add.at(splits, o, 1)
        owner = np.concatenate([o, o])
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        new_fa = np.concatenate([fa[keep], fm[keep]])
        new_fm = np.concatenate([fl[keep], fr[keep]])
        new_fb = np.concatenate([fm[keep], fb[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        fa, fm, fb = new_fa, new_fm, new_fb
        m = 0.5 * (a + b)

    shape = lo.shape
    return ((sign.ravel() * values).reshape(shape), errors.reshape(shape),
            splits.reshape(shape), converged.reshape(shape))


def _eval3(fv, a, m, b):
    k = a.size
    vals = fv(np.concatenate([a, m, b])) if k else np.zeros(0)
    return vals[:k], vals[k:2 * k], vals[2 * k:]


def _eval2(fv, x, y):
    k = x.size
    vals = fv(np.concatenate([x, y]))
    return vals[:k], vals[k:]


def integrate(fexpr, lo: float, hi: float, tol: float = DEFAULT_TOL, params=None,
              max_subdivisions: int = MAX_SUBDIVISIONS) -> QuadResult:
    """Adaptive integral of ``fexpr`` over ``[lo, hi]``."""
    if lo > hi:
        raise ValueError(f"integrate needs lo <= hi, got [{lo}, {hi}]")
    v, e, s, c = integrate_many(fexpr, lo, hi, tol, params, max_subdivisions)
    return QuadResult(float(v[0]), float(e[0]), int(s[0]), bool(c[0]))


# -- suprema ------------------------------------------------------------------------

def _golden_lanes(fv, lo, hi, sgn, iters=80):
    """Golden-section search run on several brackets at once.

    Lane ``k`` maximises ``sgn[k] * f`` on ``[lo[k], hi[k]]``; every iteration
    costs one vectorised evaluation of ``fv``. Returns (args, values).
    """
    lo, hi, sgn = (np.array(v, dtype=float) for v in (lo, hi, sgn))
    k = lo.size
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f = fv(np.concatenate([x1, x2]))
    f1, f2 = sgn * f[:k], sgn * f[k:]
    for _ in range(iters):
        if np.all(hi - lo <= 1e-10 * np.maximum(1.0, np.abs(lo))):
            break
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        keep_x, keep_f = np.where(left, x1, x2), np.where(left, f1, f2)
        new_x = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
        new_f = sgn * fv(new_x)
        x1, f1 = np.where(left, new_x, keep_x), np.where(left, new_f, keep_f)
        x2, f2 = np.where(left, keep_x, new_x), np.where(left, keep_f, new_f)
    first = f1 >= f2
    return np.where(first, x1, x2), sgn * np.where(first, f1, f2)


def _candidates(ys, maximize, count):
    score = ys if maximize else -ys
    n = score.size
    peak = np.zeros(n, dtype=bool)
    peak[1:-1] = (score[1:-1] >= score[:-2]) & (score[1:-1] >= score[2:])
    peak[0] = score[0] >= score[1]
    peak[-1] = score[-1] >= score[-2]
    idx = np.flatnonzero(peak)
    return idx[np.argsort(-score[idx], kind="stable")][:count]


def _refine(fv, ts, ys, modes=("max",), candidates=3) -> dict:
    """Refine coarse samples ``ys = f(ts)`` into extrema.

    Golden-section search runs around the best few coarse local extrema of
    each requested mode ('max' and/or 'min'); returns {mode: (value, arg)}.
    """
    n = ts.size
    lanes_lo, lanes_hi, lanes_sgn, owner = [], [], [], []
    best = {}
    for mode in modes:
        maximize = mode == "max"
        i = int(np.argmax(ys) if maximize else np.argmin(ys))
        best[mode] = (float(ys[i]), float(ts[i]))
        for c in _candidates(ys, maximize, candidates):
            lanes_lo.append(ts[max(c - 1, 0)])
            lanes_hi.append(ts[min(c + 1, n - 1)])
            lanes_sgn.append(1.0 if maximize else -1.0)
            owner.append(mode)
    if owner:
        xs, vals = _golden_lanes(fv, lanes_lo, lanes_hi, lanes_sgn)
        for mode, x, v in zip(owner, xs, vals):
            cur = best[mode][0]
            if (v > cur) if mode == "max" else (v < cur):
                best[mode] = (float(v), float(x))
    return best


def _extremum(fv, lo, hi, n, maximize=True):
    ts = np.linspace(lo, hi, n)
    mode = "max" if maximize else "min"
    return _refine(fv, ts, fv(ts), (mode,))[mode]


def _check_window(lo, hi, n):
    if not hi > lo:
        raise ValueError(f"empty window [{lo}, {hi}]")
    if n < 3:
        raise ValueError("need at least 3 coarse points")


def sup_on_window(fexpr, lo: float, hi: float, coarse_points: int = 1000,
                  params=None) -> SupEstimate:
    """Estimate ``sup |f|`` on ``[lo, hi]``."""
    _check_window(lo, hi, coarse_points)
    fv = as_vectorized(fexpr, params)
    value, arg = _extremum(lambda ts: np.abs(fv(ts)), lo, hi, coarse_points)
    return SupEstimate(value, arg, (lo, hi), coarse_points, True)


def max_on_window(fexpr, lo, hi, coarse_points=1000, params=None) -> SupEstimate:
    """Signed maximum of ``f`` on ``[lo, hi]``."""
    _check_window(lo, hi, coarse_points)
    value, arg = _extremum(as_vectorized(fexpr, params), lo, hi, coarse_points)
    return SupEstimate(value, arg, (lo, hi), coarse_points, True)


def min_on_window(fexpr, lo, hi, coarse_points=1000, params=None) -> SupEstimate:
    """Signed minimum of ``f`` on ``[lo, hi]`` (reported in ``value``)."""
    _check_window(lo, hi, coarse_points)
    value, arg = _extremum(as_vectorized(fexpr, params), lo, hi, coarse_points,
                           maximize=False)
    return SupEstimate(value, arg, (lo, hi), coarse_points, True)


def delay_integral_function(b, h, tol=DEFAULT_TOL, params=None) -> Callable:
    """Vectorised ``t -> integral of b over [h(t), t]``."""
    hv = as_vectorized(h, params)

    def fun(ts):
        ts = np.asarray(ts, dtype=float)
        vals, *_ = integrate_many(b, hv(ts), ts, tol, params)
        return vals
    return fun


def sup_delay_integral(b, h, lo: float, hi: float, grid_points: int = 1000,
                       tol: float = DEFAULT_TOL, params=None) -> SupEstimate:
    """Sup (and inf, as auxiliary data) of ``t -> int_{h(t)}^t b`` on ``[lo, hi]``."""
    _check_window(lo, hi, grid_points)
    fun = delay_integral_function(b, h, tol, params)
    ts = np.linspace(lo, hi, grid_points)
    best = _refine(fun, ts, fun(ts), ("max", "min"))
    (sup_v, sup_t), (inf_v, inf_t) = best["max"], best["min"]
    return SupEstimate(sup_v, sup_t, (lo, hi), grid_points, True, inf_v, inf_t)
