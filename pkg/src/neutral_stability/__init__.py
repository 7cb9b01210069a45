"""Numerical solver and explicit stability tests for scalar neutral delay equations.

The equation is taken in Hale form

    (x(t) - a(t) x(g(t)))' + b(t) x(h(t)) + c(t) x(t) = f(t),  t >= t0,
    x(t) = phi(t),                                             t <= t0.
"""
from .exprlang import TimeExpr, parse
from .model import ProblemSpec, load_problem, load_problem_file, validate_assumptions
from .analysis import integrate, sup_on_window, sup_delay_integral
from .solver import Trajectory, solve, fundamental
from .criteria import Conclusion, CriterionVerdict, run_all

__version__ = "0.1.0"

__all__ = [
    "TimeExpr", "parse", "ProblemSpec", "load_problem", "load_problem_file",
    "validate_assumptions", "integrate", "sup_on_window", "sup_delay_integral",
    "Trajectory", "solve", "fundamental", "Conclusion", "CriterionVerdict", "run_all",
]
