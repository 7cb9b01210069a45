import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_spec
from neutral_stability.solver import SolverError, dense_eval, fundamental, solve


def decay_spec():
    return make_spec(t0=0, a="0", b="1", g="t", h="t", phi="1")


def test_first_order_convergence_rate_on_ode():
    spec = decay_spec()
    errs = [abs(solve(spec, dt, 1.0).values[-1] - math.exp(-1)) for dt in (1e-2, 5e-3, 2.5e-3)]
    assert errs[0] / errs[1] >= 1.8 and errs[1] / errs[2] >= 1.8
    assert abs(solve(spec, 1e-3, 1.0).values[-1] - math.exp(-1)) <= 1e-4


def test_method_of_steps_closed_form():
    # x' = -x(t-1), x = 1 before 0: x = 1 - t on [0,1], 1 - t + (t-1)^2/2 on [1,2]
    traj = solve(make_spec(t0=0, a="0", b="1", g="t", h="t - 1", phi="1"), 1e-3, 2.0)
    t = traj.grid
    exact = np.where(t <= 1, 1 - t, 1 - t + (t - 1) ** 2 / 2)
    assert np.max(np.abs(traj.values - exact)) < 1e-6


def test_pure_neutral_recursion_exact():
    # x(t) - 0.5 x(t-1) stays at its initial value 1 when b = 0, phi = t + 1
    traj = solve(make_spec(t0=0, a="0.5", b="0", g="t - 1", h="t", phi="t + 1"), 1e-2, 2.0)
    t = traj.grid
    exact = np.where(t <= 1, 1 + 0.5 * t, 1 + 0.5 * (1 + 0.5 * (t - 1)))
    assert np.max(np.abs(traj.values - exact)) < 1e-12
    assert np.allclose(traj.y_values, 1.0, atol=1e-12)


def test_forcing_and_instantaneous_term():
    # x' = -2x + 2, x(0) = 0  ->  x = 1 - exp(-2t)
    spec = make_spec(t0=0, a="0", b="0", g="t", h="t", phi="0", c="2", f="2")
    traj = solve(spec, 1e-3, 3.0)
    assert np.max(np.abs(traj.values - (1 - np.exp(-2 * traj.grid)))) < 1e-5


def test_in_step_lag_uses_fixed_point():
    # pantograph delay h = 0.5 t lands inside the first step near t0 = 0
    traj = solve(make_spec(t0=0, a="0", b="1", g="t", h="0.5*t", phi="1"), 1e-3, 1.0)
    # series solution: x = sum (-1)^k t^k / k! * 2^{-k(k-1)/2}
    series = sum((-1) ** k / math.factorial(k) * 2.0 ** (-k * (k - 1) / 2) for k in range(30))
    assert traj.values[-1] == pytest.approx(series, abs=1e-5)


def test_errors():
    with pytest.raises(SolverError):
        solve(make_spec(t0=0, a="1.2", b="1", g="t - 1", h="t", phi="1"), 1e-2, 2.0)
    with pytest.raises(SolverError) as err:
        solve(make_spec(t0=0, a="0", b="1", g="t", h="t + 1", phi="1"), 1e-2, 2.0)
    assert "exceeds t" in str(err.value)
    with pytest.raises(SolverError):
        solve(decay_spec(), 0.0, 1.0)
    with pytest.raises(SolverError):
        solve(decay_spec(), 1e-2, -1.0)


def test_dense_output(tmp_path):
    traj = solve(decay_spec(), 1e-2, 1.0)
    assert np.array_equal(dense_eval(traj, traj.grid), traj.values)
    assert dense_eval(traj, -0.5) == 1.0
    assert traj(0.505) == pytest.approx(math.exp(-0.505), abs=1e-4)
    with pytest.raises(SolverError):
        traj(1.5)
    cubic = solve(decay_spec(), 1e-2, 1.0, interp="cubic_on_y")
    assert abs(cubic(0.505) - math.exp(-0.505)) <= abs(traj(0.505) - math.exp(-0.505))
    path = tmp_path / "x.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y" and len(lines) == traj.grid.size + 1


def test_grid_hits_horizon_exactly():
    traj = solve(decay_spec(), 0.3, 1.0)
    assert traj.grid[-1] == 1.0 and traj.step <= 0.3


def test_fundamental_basics():
    fs = fundamental(lambda t: np.ones_like(t), lambda t: t, s=2.0, T=4.0, dt=1e-3)
    assert fs.values[0] == 1.0
    assert fs.at(1.0) == 0.0
    assert fs.at(3.0) == pytest.approx(math.exp(-1), abs=1e-6)
    flat = fundamental(lambda t: np.zeros_like(t), lambda t: t - 1, s=0.0, T=3.0)
    assert np.allclose(flat.values, 1.0)


@given(st.floats(-3, 3).filter(lambda k: abs(k) > 1e-3), st.floats(0, 0.9))
def test_solution_is_linear_in_history(k, a0):
    base = make_spec(t0=0, a=f"{a0!r}*cos(t)", b="0.4", g="t - 1", h="t - 0.7", phi="1 + t")
    scaled = base.replace(phi=make_spec(t0=0, a="0", b="0", g="t", h="t",
                                        phi=f"{k!r}*(1 + t)").phi)
    x1 = solve(base, 1e-2, 5.0).values
    xk = solve(scaled, 1e-2, 5.0).values
    assert np.allclose(xk, k * x1, rtol=1e-9, atol=1e-12)
