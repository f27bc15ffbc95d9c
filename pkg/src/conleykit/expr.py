"""Expression trees for scalar objectives.

Supports variables ``x0 .. x{n-1}``, float literals, ``+ - * /``, ``^`` with an
integer exponent, unary minus, ``sin cos exp sqrt`` and the constant ``pi``.
Trees are immutable; :func:`to_text` prints a fully parenthesised form that
parses back to an identical tree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Num", "Var", "Pi", "Neg", "BinOp", "Pow", "Func", "Expression",
    "ExpressionSyntaxError", "DomainError", "parse_expression", "differentiate",
    "simplify", "to_text", "compile_expression", "evaluate_expression",
]

FUNCTIONS = ("sin", "cos", "exp", "sqrt")


class ExpressionSyntaxError(ValueError):
    """Raised for malformed expression text; ``offset`` is a 0-based column."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DomainError(ArithmeticError):
    """Division by zero or square root of a negative value during evaluation."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expression"


Expression = Union[Num, Var, Pi, Neg, BinOp, Pow, Func]


# ---------------------------------------------------------------------------
# Tokenizer and recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, value: str):
        kind, val, off = self.tok
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", off)
        self._advance()

    def parse(self) -> Expression:
        e = self.expr()
        kind, val, off = self.tok
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expression:
        left = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self._advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expression:
        left = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self._advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expression:
        if self.tok[0] == "op" and self.tok[1] == "-":
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self._advance()
            off = self.tok[2]
            negative = False
            if self.tok[0] == "op" and self.tok[1] == "-":
                self._advance()
                negative = True
            exponent = self.power()
            value = _constant_value(exponent)
            if value is None or value != int(value):
                raise ExpressionSyntaxError("exponent must be an integer constant", off)
            k = int(value)
            return Pow(base, -k if negative else k)
        return base

    def atom(self) -> Expression:
        kind, val, off = self.tok
        if kind == "num":
            self._advance()
            return Num(float(val))
        if kind == "name":
            self._advance()
            if val == "pi":
                return Pi()
            if val in FUNCTIONS:
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Func(val, arg)
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if idx >= self.n:
                    raise ExpressionSyntaxError(
                        f"variable {val} out of range for dimension {self.n}", off)
                return Var(idx)
            raise ExpressionSyntaxError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            self._advance()
            e = self.expr()
            self._expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"unexpected {found}", off)


def parse_expression(text: str, n: int) -> Expression:
    """Parse ``text`` over variables ``x0 .. x{n-1}``.

    Precedence from tightest: ``^`` (right-associative), unary minus,
    ``* /``, ``+ -`` (left-associative).
    """
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text, n).parse()


def _constant_value(e: Expression):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        v = _constant_value(e.arg)
        return None if v is None else -v
    if isinstance(e, Pow):
        v = _constant_value(e.base)
        if v is None or (v == 0 and e.exponent < 0):
            return None
        return v ** e.exponent
    return None


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

def to_text(e: Expression) -> str:
    """Fully parenthesised text; ``parse_expression(to_text(e))`` rebuilds ``e``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Pow):
        return f"({to_text(e.base)}^{e.exponent})"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def max_variable(e: Expression) -> int:
    """Largest variable index used, or -1."""
    if isinstance(e, Var):
        return e.index
    if isinstance(e, (Neg, Func)):
        return max_variable(e.arg)
    if isinstance(e, Pow):
        return max_variable(e.base)
    if isinstance(e, BinOp):
        return max(max_variable(e.left), max_variable(e.right))
    return -1


# ---------------------------------------------------------------------------
# Symbolic differentiation
# ---------------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _num(v: float) -> Expression:
    # negative literals are kept as Neg(Num) so printing round-trips
    if v == 0:
        return ZERO
    return Neg(Num(-v)) if v < 0 else Num(float(v))


def _is_num(e: Expression, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _num(a.value * b.value)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return _mul(a.arg, b.arg)
    if isinstance(a, Neg):
        return _neg(_mul(a.arg, b))
    if isinstance(b, Neg):
        return _neg(_mul(a, b.arg))
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0) and not _is_num(b, 0.0):
        return ZERO
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Num):
        return ZERO if a.value == 0 else Neg(a)
    return Neg(a)


def _pow(b, k: int):
    if k == 0:
        return ONE
    if k == 1:
        return b
    return Pow(b, k)


def simplify(e: Expression) -> Expression:
    """Bottom-up cleanup of ``0*e``, ``1*e``, ``e+0`` and constant folding."""
    if isinstance(e, Neg):
        return _neg(simplify(e.arg))
    if isinstance(e, BinOp):
        a, b = simplify(e.left), simplify(e.right)
        return {"+": _add, "-": _sub, "*": _mul, "/": _div}[e.op](a, b)
    if isinstance(e, Pow):
        return _pow(simplify(e.base), e.exponent)
    if isinstance(e, Func):
        return Func(e.name, simplify(e.arg))
    return e


def differentiate(e: Expression, axis: int) -> Expression:
    """Symbolic partial derivative of ``e`` with respect to ``x{axis}``."""
    return simplify(_d(e, axis))


def _d(e: Expression, axis: int) -> Expression:
    if isinstance(e, (Num, Pi)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == axis else ZERO
    if isinstance(e, Neg):
        return _neg(_d(e.arg, axis))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = _d(a, axis), _d(b, axis)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule
        num = _sub(_mul(da, b), _mul(a, db))
        if _is_num(num, 0.0):
            return ZERO
        return _div(num, _pow(b, 2))
    if isinstance(e, Pow):
        db = _d(e.base, axis)
        if _is_num(db, 0.0):
            return ZERO
        return _mul(_mul(_num(float(e.exponent)), _pow(e.base, e.exponent - 1)), db)
    if isinstance(e, Func):
        du = _d(e.arg, axis)
        if _is_num(du, 0.0):
            return ZERO
        u = e.arg
        if e.name == "sin":
            return _mul(Func("cos", u), du)
        if e.name == "cos":
            return _neg(_mul(Func("sin", u), du))
        if e.name == "exp":
            return _mul(Func("exp", u), du)
        if e.name == "sqrt":
            return _div(du, _mul(Num(2.0), Func("sqrt", u)))
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Numeric evaluation
# ---------------------------------------------------------------------------

def _checked_div(a, b):
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _checked_sqrt(a):
    if np.any(np.asarray(a) < 0):
        raise DomainError("square root of a negative value")
    return np.sqrt(a)


def _checked_pow(b, k):
    if k < 0:
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return 1.0 / b ** (-k)
    return b ** k


_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _checked_div,
}

_UNARY = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": _checked_sqrt}


def compile_expression(e: Expression) -> Callable[[Sequence[np.ndarray]], np.ndarray]:
    """Turn ``e`` into a closure evaluating on a list of coordinate arrays."""
    if isinstance(e, Num):
        v = e.value
        return lambda cols: v
    if isinstance(e, Pi):
        return lambda cols: math.pi
    if isinstance(e, Var):
        i = e.index
        return lambda cols: cols[i]
    if isinstance(e, Neg):
        f = compile_expression(e.arg)
        return lambda cols: -f(cols)
    if isinstance(e, BinOp):
        fa, fb, op = compile_expression(e.left), compile_expression(e.right), _BINARY[e.op]
        return lambda cols: op(fa(cols), fb(cols))
    if isinstance(e, Pow):
        fb, k = compile_expression(e.base), e.exponent
        if k == 2:
            return lambda cols: (lambda v: v * v)(fb(cols))
        return lambda cols: _checked_pow(fb(cols), k)
    if isinstance(e, Func):
        f, g = compile_expression(e.arg), _UNARY[e.name]
        return lambda cols: g(f(cols))
    raise TypeError(f"not an expression: {e!r}")


def evaluate_expression(e: Expression, point) -> float:
    """Evaluate ``e`` at a single point (sequence of floats)."""
    cols = [float(c) for c in np.atleast_1d(point)]
    with np.errstate(over="ignore"):
        return float(compile_expression(e)(cols))
