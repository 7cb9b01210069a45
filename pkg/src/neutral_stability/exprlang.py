"""Expression language for time-dependent coefficients.

Coefficients, delay arguments, histories and forcing terms are written as
small infix expressions in the single variable ``t``::

    alpha*(1+0.1*cos(t))
    1/(t*ln(t))
    piecewise((t < 2, 0), (t >= 5, 1), 0.5)

Operators are ``+ - * / ^`` with the usual precedence (``^`` binds tighter
than unary minus, ``^`` is right associative). Identifiers other than ``t``,
the constants ``e`` and ``pi`` and the function names are free parameters
that must be bound at evaluation time.

Evaluation works on scalars and on numpy arrays alike and never returns NaN
or infinity: every non-finite intermediate is turned into a
:class:`DomainError` that carries the offending time.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "ExprError", "ExprSyntaxError", "UnknownFunctionError", "ArityError",
    "DomainError", "UnboundParameterError",
    "Num", "Const", "Var", "Param", "Neg", "BinOp", "Call", "Cond", "Piecewise",
    "TimeExpr", "parse", "evaluate", "to_text", "from_node",
]

CONSTANTS = {"e": math.e, "pi": math.pi}
# name -> (min args, max args); None means unbounded
FUNCTIONS = {
    "sin": (1, 1), "cos": (1, 1), "exp": (1, 1), "ln": (1, 1),
    "sqrt": (1, 1), "abs": (1, 1), "pos": (1, 1),
    "min": (2, None), "max": (2, None),
}
COMPARATORS = ("<", "<=", ">", ">=")


class ExprError(ValueError):
    """Base class for everything the expression language raises."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, t: float | None = None):
        where = "" if t is None else f" at t={t!r}"
        super().__init__(f"{message}{where}")
        self.t = t


class UnboundParameterError(ExprError, LookupError):
    def __init__(self, names):
        self.names = frozenset(names)
        super().__init__("unbound parameter(s): " + ", ".join(sorted(self.names)))


# -- tree nodes ---------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Cond:
    op: str
    threshold: "Node"


@dataclass(frozen=True)
class Piecewise:
    branches: tuple  # of (Cond, Node)
    otherwise: "Node"


Node = Union[Num, Const, Var, Param, Neg, BinOp, Call, Piecewise]


def _free_params(node) -> frozenset:
    if isinstance(node, Param):
        return frozenset([node.name])
    if isinstance(node, Neg):
        return _free_params(node.operand)
    if isinstance(node, BinOp):
        return _free_params(node.left) | _free_params(node.right)
    if isinstance(node, Call):
        return frozenset().union(*(_free_params(a) for a in node.args))
    if isinstance(node, Piecewise):
        out = _free_params(node.otherwise)
        for cond, expr in node.branches:
            out |= _free_params(cond.threshold) | _free_params(expr)
        return out
    return frozenset()


def _uses_t(node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Neg):
        return _uses_t(node.operand)
    if isinstance(node, BinOp):
        return _uses_t(node.left) or _uses_t(node.right)
    if isinstance(node, Call):
        return any(_uses_t(a) for a in node.args)
    if isinstance(node, Piecewise):
        return True
    return False


@dataclass(frozen=True)
class TimeExpr:
    """An immutable parsed expression of ``t`` with named parameters."""

    root: Node
    source: str | None = field(default=None, compare=False)

    @cached_property
    def free_params(self) -> frozenset:
        return _free_params(self.root)

    @cached_property
    def depends_on_t(self) -> bool:
        return _uses_t(self.root)

    @cached_property
    def _compiled(self):
        return _compile(self.root)

    def __call__(self, t, params: Mapping[str, float] | None = None):
        return evaluate(self, t, params)

    def __str__(self) -> str:
        return to_text(self)

    def __getstate__(self):
        # the compiled closures are rebuilt lazily after unpickling
        return {"root": self.root, "source": self.source}

    def __setstate__(self, state):
        object.__setattr__(self, "root", state["root"])
        object.__setattr__(self, "source", state["source"])


def from_node(node: Node) -> TimeExpr:
    return TimeExpr(node)


# -- tokenizer and parser -------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[-+*/^(),<>])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int  # character index


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = self._tokenize(text)
        self.i = 0

    def _offset(self, char_pos: int) -> int:
        return len(self.text[:char_pos].encode("utf-8"))

    def error(self, message: str, char_pos: int, cls=ExprSyntaxError):
        raise cls(message, self._offset(char_pos))

    def _tokenize(self, text):
        toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                self.error(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            if kind != "ws":
                toks.append(_Tok(kind, m.group(), pos))
            pos = m.end()
        toks.append(_Tok("end", "", len(text)))
        return toks

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            what = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            self.error(f"expected {text!r}, found {what}", self.tok.pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.additive()
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def additive(self):
        node = self.multiplicative()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.advance().text
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self):
        node = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            value = float(tok.text)
            if not math.isfinite(value):
                self.error(f"numeric literal {tok.text!r} overflows", tok.pos)
            return Num(value)
        if tok.kind == "ident":
            self.advance()
            if self.tok.text == "(" and self.tok.kind == "op":
                return self.call(tok)
            if tok.text in FUNCTIONS or tok.text == "piecewise":
                self.error(f"function {tok.text!r} used without arguments", tok.pos)
            if tok.text == "t":
                return Var()
            if tok.text in CONSTANTS:
                return Const(tok.text)
            return Param(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.additive()
            self.expect(")")
            return node
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        self.error(f"unexpected {what}", tok.pos)

    def call(self, name_tok: _Tok):
        name = name_tok.text
        if name == "piecewise":
            return self.piecewise(name_tok)
        if name not in FUNCTIONS:
            self.error(f"unknown function {name!r}", name_tok.pos, UnknownFunctionError)
        self.expect("(")
        args = [self.additive()]
        while self.tok.text == "," and self.tok.kind == "op":
            self.advance()
            args.append(self.additive())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if hi == lo else f"at least {lo}"
            self.error(f"{name}() takes {want} argument(s), got {len(args)}",
                       name_tok.pos, ArityError)
        return Call(name, tuple(args))

    def piecewise(self, name_tok: _Tok):
        self.expect("(")
        branches = []
        while True:
            start = self.i
            branch = self._try_branch()
            if branch is None:
                self.i = start
                otherwise = self.additive()
                self.expect(")")
                break
            branches.append(branch)
            self.expect(",")
        if not branches:
            self.error("piecewise() needs at least one (condition, value) branch",
                       name_tok.pos, ArityError)
        return Piecewise(tuple(branches), otherwise)

    def _try_branch(self):
        if not (self.tok.kind == "op" and self.tok.text == "("):
            return None
        self.advance()
        lhs_tok = self.tok
        try:
            lhs = self.additive()
        except ExprSyntaxError:
            return None
        if not (self.tok.kind == "op" and self.tok.text in COMPARATORS):
            return None
        if lhs != Var():
            self.error("piecewise conditions must compare t against a threshold",
                       lhs_tok.pos)
        op = self.advance().text
        thr_tok = self.tok
        threshold = self.additive()
        if _uses_t(threshold):
            self.error("piecewise threshold must not depend on t", thr_tok.pos)
        self.expect(",")
        value = self.additive()
        self.expect(")")
        return Cond(op, threshold), value


def parse(text: str) -> TimeExpr:
    """Parse ``text`` into a :class:`TimeExpr`.

    Raises :class:`ExprSyntaxError` (with a byte ``offset``),
    :class:`UnknownFunctionError` or :class:`ArityError`.
    """
    return TimeExpr(_Parser(text).parse(), source=text)


# -- printing ---------------------------------------------------------------------

def _fmt(node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_fmt(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_fmt(node.left)} {node.op} {_fmt(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(_fmt(a) for a in node.args) + ")"
    if isinstance(node, Piecewise):
        parts = [f"(t {c.op} {_fmt(c.threshold)}, {_fmt(v)})" for c, v in node.branches]
        parts.append(_fmt(node.otherwise))
        return "piecewise(" + ", ".join(parts) + ")"
    raise TypeError(f"not an expression node: {node!r}")


def to_text(expr: TimeExpr | Node) -> str:
    """Render an expression so that ``parse(to_text(e)) == e``."""
    node = expr.root if isinstance(expr, TimeExpr) else expr
    return _fmt(node)


# -- evaluation ---------------------------------------------------------------------

# A compiled node maps (t array, params) -> array or scalar broadcastable to t.
Compiled = Callable[[np.ndarray, Mapping[str, float]], object]


def _first_bad(t: np.ndarray, mask) -> float:
    mask = np.broadcast_to(mask, t.shape)
    idx = np.flatnonzero(mask)
    return float(t.flat[idx[0]]) if idx.size else None


def _check_finite(t, value, what):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{what} is not finite", _first_bad(t, ~np.isfinite(value)))
    return value


def _compile(node) -> Compiled:
    if isinstance(node, Num):
        v = float(node.value)
        return lambda t, p: v
    if isinstance(node, Const):
        v = CONSTANTS[node.name]
        return lambda t, p: v
    if isinstance(node, Var):
        return lambda t, p: t
    if isinstance(node, Param):
        name = node.name

        def param(t, p):
            try:
                return float(p[name])
            except KeyError:
                raise UnboundParameterError([name]) from None
        return param
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda t, p: -inner(t, p)
    if isinstance(node, BinOp):
        return _compile_binop(node)
    if isinstance(node, Call):
        return _compile_call(node)
    if isinstance(node, Piecewise):
        return _compile_piecewise(node)
    raise TypeError(f"not an expression node: {node!r}")


def _compile_binop(node: BinOp) -> Compiled:
    lf, rf = _compile(node.left), _compile(node.right)
    op = node.op
    if op == "+":
        return lambda t, p: _check_finite(t, lf(t, p) + rf(t, p), "sum")
    if op == "-":
        return lambda t, p: _check_finite(t, lf(t, p) - rf(t, p), "difference")
    if op == "*":
        return lambda t, p: _check_finite(t, lf(t, p) * rf(t, p), "product")
    if op == "/":
        def div(t, p):
            num, den = lf(t, p), rf(t, p)
            zero = np.asarray(den) == 0
            if np.any(zero):
                raise DomainError("division by zero", _first_bad(t, zero))
            return _check_finite(t, num / den, "quotient")
        return div

    def power(t, p):
        base, ex = np.asarray(lf(t, p), dtype=float), np.asarray(rf(t, p), dtype=float)
        bad = (base < 0) & (ex != np.round(ex))
        if np.any(bad):
            raise DomainError("negative base with non-integer exponent", _first_bad(t, bad))
        bad = (base == 0) & (ex < 0)
        if np.any(bad):
            raise DomainError("zero raised to a negative power", _first_bad(t, bad))
        return _check_finite(t, np.power(base, ex), "power")
    return power


def _compile_call(node: Call) -> Compiled:
    args = [_compile(a) for a in node.args]
    name = node.func
    if name in ("min", "max"):
        reduce = np.minimum if name == "min" else np.maximum

        def extremum(t, p):
            out = args[0](t, p)
            for f in args[1:]:
                out = reduce(out, f(t, p))
            return out
        return extremum

    (arg,) = args
    if name == "ln":
        def ln(t, p):
            u = arg(t, p)
            bad = np.asarray(u) <= 0
            if np.any(bad):
                raise DomainError("ln of a non-positive value", _first_bad(t, bad))
            return np.log(u)
        return ln
    if name == "sqrt":
        def sqrt(t, p):
            u = arg(t, p)
            bad = np.asarray(u) < 0
            if np.any(bad):
                raise DomainError("sqrt of a negative value", _first_bad(t, bad))
            return np.sqrt(u)
        return sqrt
    if name == "exp":
        return lambda t, p: _check_finite(t, np.exp(arg(t, p)), "exp")
    if name == "pos":
        return lambda t, p: np.maximum(arg(t, p), 0.0)
    ufunc = {"sin": np.sin, "cos": np.cos, "abs": np.abs}[name]
    return lambda t, p: ufunc(arg(t, p))


_CMP = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


def _compile_piecewise(node: Piecewise) -> Compiled:
    branches = [(_CMP[c.op], _compile(c.threshold), _compile(v)) for c, v in node.branches]
    otherwise = _compile(node.otherwise)

    def piecewise(t, p):
        out = np.empty(t.shape)
        todo = np.ones(t.shape, dtype=bool)
        for cmp, thr, val in branches:
            take = todo & cmp(t, thr(t, p))
            if take.any():
                out[take] = np.broadcast_to(val(t[take], p), t[take].shape)
                todo &= ~take
        if todo.any():
            out[todo] = np.broadcast_to(otherwise(t[todo], p), t[todo].shape)
        return out
    return piecewise


def evaluate(expr: TimeExpr, t, params: Mapping[str, float] | None = None):
    """Evaluate ``expr`` at ``t`` (a float or an array of floats).

    Returns a Python float for scalar ``t`` and a float array otherwise.
    """
    params = {} if params is None else params
    missing = expr.free_params.difference(params)
    if missing:
        raise UnboundParameterError(missing)
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    with np.errstate(all="ignore"):
        out = expr._compiled(tt, params)
        out = np.broadcast_to(np.asarray(out, dtype=float), tt.shape)
        _check_finite(tt, out, "value")
    if scalar:
        return float(out[0])
    return np.array(out)
