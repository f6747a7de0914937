"""Tiny expression language for the functions of a fractional program.

Grammar, loosest binding first::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" exponent)*
    exponent := ("-" | "+")* atom
    atom   := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"

``^`` binds tighter than unary minus (``-x1^2`` is ``-(x1^2)``) and every
binary operator, ``^`` included, is left-associative (``2^3^2`` is 64).
Exponents must be constant.  Variables are ``x1 .. xn``; ``pi`` and ``e``
are constants.  Built-in functions are
``sin cos exp log abs min max`` and ``if0(c, a, b)`` which yields ``a`` when
``c == 0`` and ``b`` otherwise.

Expressions evaluate pointwise (:meth:`Expression.evaluate`), over a batch of
points with NaN marking domain failures (:meth:`Expression.evaluate_batch`),
and carry exact forward-mode directional derivatives on smooth trees
(:meth:`Expression.directional`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DomainError",
    "ParseError",
    "Expression",
    "ScalarFunction",
    "parse",
    "evaluate",
    "exact_directional",
    "to_source",
]


class DomainError(ArithmeticError):
    """Evaluation left the domain of a node (log of nonpositive, x/0, ...)."""


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


class _Unavailable(Exception):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


class Node:
    kink = False

    def children(self) -> tuple["Node", ...]:
        return ()

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()


@dataclass(frozen=True)
class Const(Node):
    value: float

    def eval(self, x):
        return self.value

    def eval_batch(self, X):
        return np.full(X.shape[0], self.value)

    def dual(self, x, v):
        return self.value, 0.0

    def interval(self, lo, hi):
        return self.value, self.value

    def source(self):
        r = repr(float(self.value))
        return f"({r})" if self.value < 0 else r


@dataclass(frozen=True)
class Var(Node):
    index: int

    def eval(self, x):
        return float(x[self.index])

    def eval_batch(self, X):
        return X[:, self.index].astype(float)

    def dual(self, x, v):
        return float(x[self.index]), float(v[self.index])

    def interval(self, lo, hi):
        return float(lo[self.index]), float(hi[self.index])

    def source(self):
        return f"x{self.index + 1}"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def children(self):
        return (self.arg,)

    def eval(self, x):
        return -self.arg.eval(x)

    def eval_batch(self, X):
        return -self.arg.eval_batch(X)

    def dual(self, x, v):
        a, da = self.arg.dual(x, v)
        return -a, -da

    def interval(self, lo, hi):
        a, b = self.arg.interval(lo, hi)
        return -b, -a

    def source(self):
        return f"(-{self.arg.source()})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def children(self):
        return (self.left, self.right)

    def eval(self, x):
        a = self.left.eval(x)
        b = self.right.eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b

    def eval_batch(self, X):
        a = self.left.eval_batch(X)
        b = self.right.eval_batch(X)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        out = a / b
        out[b == 0.0] = np.nan
        return out

    def dual(self, x, v):
        a, da = self.left.dual(x, v)
        b, db = self.right.dual(x, v)
        if self.op == "+":
            return a + b, da + db
        if self.op == "-":
            return a - b, da - db
        if self.op == "*":
            return a * b, da * b + a * db
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b, (da * b - a * db) / (b * b)

    def interval(self, lo, hi):
        a0, a1 = self.left.interval(lo, hi)
        b0, b1 = self.right.interval(lo, hi)
        if self.op == "+":
            return a0 + b0, a1 + b1
        if self.op == "-":
            return a0 - b1, a1 - b0
        if self.op == "*":
            prods = (a0 * b0, a0 * b1, a1 * b0, a1 * b1)
            return min(prods), max(prods)
        if b0 <= 0.0 <= b1:
            raise _Unavailable("denominator may vanish")
        quots = (a0 / b0, a0 / b1, a1 / b0, a1 / b1)
        return min(quots), max(quots)

    def source(self):
        return f"({self.left.source()} {self.op} {self.right.source()})"


def _pow_scalar(b: float, p: float) -> float:
    if b < 0.0 and not float(p).is_integer():
        raise DomainError("negative base with fractional exponent")
    if b == 0.0 and p < 0.0:
        raise DomainError("zero to a negative power")
    try:
        return b**p
    except OverflowError as exc:
        raise DomainError("overflow in power") from exc


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: float

    def children(self):
        return (self.base,)

    def eval(self, x):
        return _pow_scalar(self.base.eval(x), self.exponent)

    def eval_batch(self, X):
        b = self.base.eval_batch(X)
        out = np.power(b, self.exponent)
        if self.exponent < 0.0:
            out[b == 0.0] = np.nan
        return out

    def dual(self, x, v):
        b, db = self.base.dual(x, v)
        p = self.exponent
        if p == 0.0:
            return 1.0, 0.0
        if b == 0.0 and p < 1.0:
            raise _Unavailable("power not differentiable at zero")
        val = _pow_scalar(b, p)
        if p == 1.0:
            return val, db
        return val, p * _pow_scalar(b, p - 1.0) * db

    def interval(self, lo, hi):
        a, b = self.base.interval(lo, hi)
        p = self.exponent
        if float(p).is_integer():
            k = int(p)
            if k >= 0 and k % 2 == 0:
                if a <= 0.0 <= b:
                    return 0.0, max(abs(a), abs(b)) ** k
                ends = (abs(a) ** k, abs(b) ** k)
                return min(ends), max(ends)
            if k > 0:
                return a**k, b**k
            if a <= 0.0 <= b:
                raise _Unavailable("negative power of an interval containing zero")
            ends = (a**k, b**k)
            return min(ends), max(ends)
        if a <= 0.0:
            raise _Unavailable("fractional power of a possibly nonpositive base")
        ends = (a**p, b**p)
        return min(ends), max(ends)

    def source(self):
        return f"({self.base.source()} ^ {Const(self.exponent).source()})"


_UNARY = {
    "sin": (math.sin, np.sin),
    "cos": (math.cos, np.cos),
    "exp": (math.exp, np.exp),
    "log": (math.log, np.log),
    "abs": (abs, np.abs),
}
_ARITY = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "abs": 1, "if0": 3}
_KINKS = {"abs", "min", "max", "if0"}


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple[Node, ...]

    @property
    def kink(self):
        return self.name in _KINKS

    def children(self):
        return self.args

    def eval(self, x):
        name = self.name
        if name == "if0":
            cond = self.args[0].eval(x)
            return self.args[1].eval(x) if cond == 0.0 else self.args[2].eval(x)
        vals = [a.eval(x) for a in self.args]
        if name == "min":
            return min(vals)
        if name == "max":
            return max(vals)
        (u,) = vals
        if name == "log" and u <= 0.0:
            raise DomainError("log of a nonpositive number")
        try:
            return _UNARY[name][0](u)
        except OverflowError as exc:
            raise DomainError(f"overflow in {name}") from exc

    def eval_batch(self, X):
        name = self.name
        if name == "if0":
            cond = self.args[0].eval_batch(X)
            a = self.args[1].eval_batch(X)
            b = self.args[2].eval_batch(X)
            out = np.where(cond == 0.0, a, b)
            out[np.isnan(cond)] = np.nan
            return out
        vals = [a.eval_batch(X) for a in self.args]
        if name == "min":
            return np.minimum.reduce(vals)
        if name == "max":
            return np.maximum.reduce(vals)
        (u,) = vals
        if name == "log":
            out = np.log(u)
            out[u <= 0.0] = np.nan
            return out
        return _UNARY[name][1](u)

    def dual(self, x, v):
        if self.kink:
            raise _Unavailable(f"{self.name} is not smooth")
        u, du = self.args[0].dual(x, v)
        name = self.name
        if name == "sin":
            return math.sin(u), math.cos(u) * du
        if name == "cos":
            return math.cos(u), -math.sin(u) * du
        if name == "exp":
            try:
                e = math.exp(u)
            except OverflowError as exc:
                raise DomainError("overflow in exp") from exc
            return e, e * du
        if u <= 0.0:
            raise DomainError("log of a nonpositive number")
        return math.log(u), du / u

    def interval(self, lo, hi):
        if self.kink:
            raise _Unavailable(f"{self.name} is not smooth")
        a, b = self.args[0].interval(lo, hi)
        if self.name in ("sin", "cos"):
            return -1.0, 1.0
        if self.name == "exp":
            return math.exp(a), math.exp(b)
        if a <= 0.0:
            raise _Unavailable("log argument may be nonpositive")
        return math.log(a), math.log(b)

    def source(self):
        return f"{self.name}({', '.join(a.source() for a in self.args)})"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_CONSTANTS = {"pi": math.pi, "e": math.e}
_VAR = re.compile(r"x([1-9][0-9]*)$")


def _tokenize(source: str):
    pos = 0
    tokens = []
    src = source.rstrip()
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            col = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[col]!r}", col)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, source: str, dimension: int):
        self.tokens = _tokenize(source)
        self.i = 0
        self.n = dimension

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.take()
        if val != text or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {text!r}, found {found}", pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek()[:2] == ("op", "^"):
            pos = self.take()[2]
            exponent = self.exponent()
            if any(isinstance(sub, Var) for sub in exponent.walk()):
                raise ParseError("exponent must be constant", pos)
            try:
                value = float(exponent.eval(()))
            except DomainError as exc:
                raise ParseError(f"invalid exponent: {exc}", pos) from exc
            node = Pow(node, value)
        return node

    def exponent(self):
        # a signed atom, so that a^b^c groups as (a^b)^c
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.exponent())
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.exponent()
        return self.atom()

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                return self.call(val, pos)
            if val in _CONSTANTS:
                return Const(_CONSTANTS[val])
            m = _VAR.match(val)
            if m:
                k = int(m.group(1))
                if k > self.n:
                    raise ParseError(f"variable {val} exceeds dimension {self.n}", pos)
                return Var(k - 1)
            raise ParseError(f"unknown identifier {val!r}", pos)
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", pos)

    def call(self, name, pos):
        if name not in _ARITY and name not in ("min", "max"):
            raise ParseError(f"unknown function {name!r}", pos)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            args.append(self.expr())
        self.expect(")")
        want = _ARITY.get(name)
        if want is not None and len(args) != want:
            raise ParseError(f"{name} takes {want} argument(s), got {len(args)}", pos)
        if want is None and len(args) < 2:
            raise ParseError(f"{name} takes at least 2 arguments", pos)
        return Call(name, tuple(args))


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


class Expression:
    """An immutable parsed expression in ``dimension`` variables."""

    __slots__ = ("root", "dimension", "_smooth")

    def __init__(self, root: Node, dimension: int):
        self.root = root
        self.dimension = int(dimension)
        self._smooth = not any(node.kink for node in root.walk())

    @property
    def smooth(self) -> bool:
        """False as soon as an abs/min/max/if0 node occurs anywhere."""
        return self._smooth

    def smooth_on(self, lower: Sequence[float], upper: Sequence[float]) -> bool:
        """Conservative smoothness on a box: no kinks and no denominator,
        log argument or fractional-power base that may vanish there."""
        if not self._smooth:
            return False
        try:
            self.root.interval(np.asarray(lower, float), np.asarray(upper, float))
        except (_Unavailable, OverflowError, ZeroDivisionError):
            return False
        return True

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dimension:
            raise ValueError(f"expected a {self.dimension}-vector, got {x.shape[0]}")
        value = self.root.eval(x)
        if not math.isfinite(value):
            raise DomainError("non-finite result")
        return float(value)

    __call__ = evaluate

    def evaluate_batch(self, X) -> np.ndarray:
        """Evaluate at the rows of ``X``; domain failures come back as NaN."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise ValueError(f"expected points of dimension {self.dimension}")
        with np.errstate(all="ignore"):
            out = np.asarray(self.root.eval_batch(X), dtype=float)
        out = np.broadcast_to(out, (X.shape[0],)).copy()
        out[~np.isfinite(out)] = np.nan
        return out

    def directional(self, x, v) -> float | None:
        """Exact one-sided directional derivative, or None on kink trees."""
        if not self._smooth:
            return None
        x = np.asarray(x, dtype=float).reshape(-1)
        v = np.asarray(v, dtype=float).reshape(-1)
        try:
            value, slope = self.root.dual(x, v)
        except _Unavailable:
            return None
        except OverflowError as exc:
            raise DomainError("overflow") from exc
        if not (math.isfinite(value) and math.isfinite(slope)):
            raise DomainError("non-finite result")
        return float(slope)

    def gradient(self, x) -> np.ndarray | None:
        if not self._smooth:
            return None
        eye = np.eye(self.dimension)
        parts = [self.directional(x, eye[i]) for i in range(self.dimension)]
        if any(p is None for p in parts):
            return None
        return np.array(parts)

    def source(self) -> str:
        return self.root.source()

    def __str__(self):
        return self.source()

    def __repr__(self):
        return f"Expression({self.source()!r}, dimension={self.dimension})"

    # Composition helpers used to build quotients and scalarizations.
    def _coerce(self, other) -> Node:
        if isinstance(other, Expression):
            if other.dimension != self.dimension:
                raise ValueError("dimension mismatch")
            return other.root
        return Const(float(other))

    def __add__(self, other):
        return Expression(BinOp("+", self.root, self._coerce(other)), self.dimension)

    def __sub__(self, other):
        return Expression(BinOp("-", self.root, self._coerce(other)), self.dimension)

    def __mul__(self, other):
        return Expression(BinOp("*", self.root, self._coerce(other)), self.dimension)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Expression(BinOp("/", self.root, self._coerce(other)), self.dimension)

    def __neg__(self):
        return Expression(Neg(self.root), self.dimension)


def constant(value: float, dimension: int) -> Expression:
    return Expression(Const(float(value)), dimension)


def linear_combination(coefs: Sequence[float], exprs: Sequence[Expression],
                       dimension: int) -> Expression:
    """sum_i coefs[i] * exprs[i]; zero coefficients are dropped."""
    root: Node | None = None
    for c, e in zip(coefs, exprs):
        if c == 0.0:
            continue
        term = e.root if c == 1.0 else BinOp("*", Const(float(c)), e.root)
        root = term if root is None else BinOp("+", root, term)
    return Expression(root if root is not None else Const(0.0), dimension)


@dataclass(frozen=True)
class ScalarFunction:
    """A labelled expression, e.g. one objective numerator of a problem."""

    expression: Expression
    label: str = ""

    @classmethod
    def from_source(cls, source: str, dimension: int, label: str = "") -> "ScalarFunction":
        return cls(parse(source, dimension), label or source)

    @property
    def dimension(self) -> int:
        return self.expression.dimension

    def __call__(self, x) -> float:
        return self.expression.evaluate(x)


def parse(source: str, dimension: int) -> Expression:
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty expression")
    if dimension < 1:
        raise ValueError("dimension must be positive")
    return Expression(_Parser(source, dimension).parse(), dimension)


def evaluate(e: Expression, x) -> float:
    return e.evaluate(x)


def exact_directional(e: Expression, x, v) -> float | None:
    return e.directional(x, v)


def to_source(e: Expression) -> str:
    return e.source()


def as_expression(f) -> Expression:
    """Accept an Expression or a ScalarFunction."""
    if isinstance(f, ScalarFunction):
        return f.expression
    if isinstance(f, Expression):
        return f
    raise TypeError(f"expected Expression or ScalarFunction, got {type(f).__name__}")
