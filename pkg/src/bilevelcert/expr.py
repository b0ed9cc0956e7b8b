"""Piecewise expression trees and the bilevel problem file format.

A problem file is UTF-8 text, one declaration per line, ``#`` starting a
comment.  Expressions use ``x``/``y`` (or ``x[i]``/``y[i]`` in higher
dimension), infix ``+ - * / ^`` and the functions ``abs``, ``sqrt``,
``cbrt``, ``min``, ``max``.  Branch guards are conjunctions (``&&``) of
affine comparisons; ``true`` matches everywhere.

Numbers are kept as exact rationals in the tree.  Evaluation is in double
precision by default; ``exact=True`` evaluates in ``Fraction`` arithmetic
wherever the operation allows it (roots fall back to floats unless the
argument is a perfect power).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np


class ProblemError(ValueError):
    """Base class for problem-file errors."""

    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {col}" if col is not None else "") + ": "
        super().__init__(where + msg)


class ProblemSyntaxError(ProblemError):
    pass


class UnknownIdentifierError(ProblemError):
    pass


class DimensionError(ProblemError):
    pass


class RegionCoverError(ProblemError):
    pass


class DomainError(ArithmeticError):
    """Arithmetic outside a function's domain (even root of a negative, 0 division)."""


class NoRegionError(LookupError):
    """No branch guard of a piecewise function matches the point."""


# --------------------------------------------------------------------------
# numeric helpers

def _int_root(n: int, q: int) -> int | None:
    """Exact integer q-th root of n >= 0, or None."""
    if n < 0:
        return None
    if n in (0, 1):
        return n
    r = int(round(n ** (1.0 / q))) if n.bit_length() < 1000 else 1 << (n.bit_length() // q)
    # Newton polish for large values
    for _ in range(200):
        if r <= 0:
            r = 1
        nr = ((q - 1) * r + n // r ** (q - 1)) // q
        if abs(nr - r) <= 1:
            r = nr
            break
        r = nr
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** q == n:
            return cand
    return None


def _frac_root(v: Fraction, q: int) -> Fraction | None:
    neg = v < 0
    a = _int_root(abs(v.numerator), q)
    b = _int_root(v.denominator, q)
    if a is None or b is None:
        return None
    r = Fraction(a, b)
    return -r if neg else r


def _fmt(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


# --------------------------------------------------------------------------
# expression tree

class Expr:
    """Node of an expression tree over the point vector (x..., y...)."""

    def ev(self, p, mode: str):
        raise NotImplementedError

    def source(self, names: Sequence[str]) -> str:
        raise NotImplementedError

    def max_index(self) -> int:
        return -1


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction

    def ev(self, p, mode):
        if mode == "exact":
            return self.value
        return float(self.value)

    def source(self, names):
        s = _fmt(self.value)
        return f"({s})" if self.value < 0 or self.value.denominator != 1 else s


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def ev(self, p, mode):
        return p[self.index]

    def source(self, names):
        return names[self.index]

    def max_index(self):
        return self.index


def _sqrt(v, mode):
    if mode == "array":
        with np.errstate(invalid="ignore"):
            return np.sqrt(v)
    if v < 0:
        raise DomainError("sqrt of a negative number")
    if mode == "exact" and isinstance(v, Fraction):
        r = _frac_root(v, 2)
        if r is not None:
            return r
    return math.sqrt(v)


def _cbrt(v, mode):
    if mode == "array":
        return np.cbrt(v)
    if mode == "exact" and isinstance(v, Fraction):
        r = _frac_root(v, 3)
        if r is not None:
            return r
    return float(np.cbrt(float(v)))


def _odd_root(v, q, mode):
    if q == 3:
        return _cbrt(v, mode)
    if mode == "array":
        return np.sign(v) * np.abs(v) ** (1.0 / q)
    if mode == "exact" and isinstance(v, Fraction):
        r = _frac_root(v, q)
        if r is not None:
            return r
    return math.copysign(abs(float(v)) ** (1.0 / q), float(v))


def _even_root(v, q, mode):
    if q == 2:
        return _sqrt(v, mode)
    if mode == "array":
        with np.errstate(invalid="ignore"):
            return np.where(v < 0, np.nan, np.abs(v) ** (1.0 / q))
    if v < 0:
        raise DomainError(f"even root (1/{q}) of a negative number")
    if mode == "exact" and isinstance(v, Fraction):
        r = _frac_root(v, q)
        if r is not None:
            return r
    return float(v) ** (1.0 / q)


_UNARY = {
    "neg": lambda v, mode: -v,
    "abs": lambda v, mode: np.abs(v) if mode == "array" else abs(v),
    "sqrt": _sqrt,
    "cbrt": _cbrt,
}


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr

    def ev(self, p, mode):
        return _UNARY[self.op](self.arg.ev(p, mode), mode)

    def source(self, names):
        a = self.arg.source(names)
        if self.op == "neg":
            return f"(-{a})"
        return f"{self.op}({a})"

    def max_index(self):
        return self.arg.max_index()


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def ev(self, p, mode):
        a = self.left.ev(p, mode)
        b = self.right.ev(p, mode)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if mode == "array":
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.true_divide(a, b)
            return np.where(b == 0, np.nan, out)
        if b == 0:
            raise DomainError("division by zero")
        return a / b

    def source(self, names):
        return f"({self.left.source(names)} {self.op} {self.right.source(names)})"

    def max_index(self):
        return max(self.left.max_index(), self.right.max_index())


@dataclass(frozen=True)
class Pow(Expr):
    """``base ^ (p/q)`` with a rational exponent.

    Odd q uses the real (sign-preserving) root, so ``x^(2/3) == cbrt(x)^2``
    for every real x; even q is a domain error on negative bases.
    """

    base: Expr
    exponent: Fraction

    def ev(self, p, mode):
        b = self.base.ev(p, mode)
        num, den = self.exponent.numerator, self.exponent.denominator
        if den != 1:
            b = _odd_root(b, den, mode) if den % 2 else _even_root(b, den, mode)
            if mode == "exact" and not isinstance(b, Fraction):
                mode = "float"
        if mode == "array":
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = np.power(np.asarray(b, dtype=float), float(num))
            if num < 0:
                out = np.where(b == 0, np.nan, out)
            return out
        if num < 0 and b == 0:
            raise DomainError("negative power of zero")
        if mode == "exact" and isinstance(b, Fraction):
            return b ** num
        return float(b) ** num

    def source(self, names):
        e = _fmt(self.exponent)
        if self.exponent.denominator != 1 or self.exponent < 0:
            e = f"({e})"
        return f"({self.base.source(names)})^{e}"

    def max_index(self):
        return self.base.max_index()


@dataclass(frozen=True)
class NAry(Expr):
    op: str  # "min" | "max"
    args: tuple

    def ev(self, p, mode):
        vals = [a.ev(p, mode) for a in self.args]
        if mode == "array":
            fn = np.minimum if self.op == "min" else np.maximum
            out = vals[0]
            for v in vals[1:]:
                out = fn(out, v)
            return out
        return min(vals) if self.op == "min" else max(vals)

    def source(self, names):
        return f"{self.op}({', '.join(a.source(names) for a in self.args)})"

    def max_index(self):
        return max(a.max_index() for a in self.args)


def _const_value(e: Expr) -> Fraction | None:
    return e.value if isinstance(e, Const) else None


def make_binary(op: str, a: Expr, b: Expr) -> Expr:
    """Build a binary node, folding rational constants."""
    ca, cb = _const_value(a), _const_value(b)
    if ca is not None and cb is not None:
        if op == "/" and cb == 0:
            raise DomainError("division by zero in constant expression")
        return Const({"+": ca + cb, "-": ca - cb, "*": ca * cb, "/": ca / cb if cb else None}[op])
    return Binary(op, a, b)


def make_pow(base: Expr, exponent: Fraction) -> Expr:
    cb = _const_value(base)
    if cb is not None:
        try:
            v = Pow(Const(cb), exponent).ev(None, "exact")
        except DomainError:
            v = None
        if isinstance(v, Fraction):
            return Const(v)
    return Pow(base, exponent)


def make_neg(a: Expr) -> Expr:
    ca = _const_value(a)
    if ca is not None:
        return Const(-ca)
    return Unary("neg", a)


def affine_form(e: Expr, dim: int) -> tuple[list[Fraction], Fraction] | None:
    """Coefficients and constant of an affine expression, or None."""
    if isinstance(e, Const):
        return [Fraction(0)] * dim, e.value
    if isinstance(e, Var):
        c = [Fraction(0)] * dim
        c[e.index] = Fraction(1)
        return c, Fraction(0)
    if isinstance(e, Unary) and e.op == "neg":
        r = affine_form(e.arg, dim)
        if r is None:
            return None
        return [-v for v in r[0]], -r[1]
    if isinstance(e, Pow) and e.exponent == 1:
        return affine_form(e.base, dim)
    if isinstance(e, Binary):
        a = affine_form(e.left, dim)
        b = affine_form(e.right, dim)
        if a is None or b is None:
            return None
        if e.op in "+-":
            s = 1 if e.op == "+" else -1
            return [u + s * v for u, v in zip(a[0], b[0])], a[1] + s * b[1]
        if e.op == "*":
            if not any(a[0]):
                return [a[1] * v for v in b[0]], a[1] * b[1]
            if not any(b[0]):
                return [b[1] * v for v in a[0]], b[1] * a[1]
            return None
        if e.op == "/" and not any(b[0]) and b[1] != 0:
            return [v / b[1] for v in a[0]], a[1] / b[1]
    return None


# --------------------------------------------------------------------------
# regions and piecewise functions

_REL = {
    "<": lambda v: v < 0,
    "<=": lambda v: v <= 0,
    ">": lambda v: v > 0,
    ">=": lambda v: v >= 0,
    "==": lambda v: v == 0,
    "!=": lambda v: v != 0,
}


@dataclass(frozen=True)
class Condition:
    """``coeffs . p + const  <rel>  0`` with an affine left-hand side."""

    coeffs: tuple
    const: Fraction
    rel: str

    def holds(self, p, exact: bool = False) -> bool:
        if exact:
            v = sum((c * Fraction(pi) for c, pi in zip(self.coeffs, p) if c), self.const)
        else:
            v = sum((float(c) * float(pi) for c, pi in zip(self.coeffs, p) if c), float(self.const))
        return _REL[self.rel](v)

    def holds_many(self, P: np.ndarray) -> np.ndarray:
        v = P @ np.array([float(c) for c in self.coeffs]) + float(self.const)
        return _REL[self.rel](v)

    def source(self, names) -> str:
        terms = []
        for c, n in zip(self.coeffs, names):
            if c:
                terms.append(f"{_fmt(c)}*{n}" if c != 1 else n)
        lhs = " + ".join(terms) if terms else "0"
        rhs = _fmt(-self.const)
        return f"{lhs} {self.rel} {rhs}"


@dataclass(frozen=True)
class Region:
    """Conjunction of affine sign conditions; the empty conjunction is ``true``."""

    conditions: tuple = ()

    def contains(self, p, exact: bool = False) -> bool:
        return all(c.holds(p, exact) for c in self.conditions)

    def contains_many(self, P: np.ndarray) -> np.ndarray:
        out = np.ones(len(P), dtype=bool)
        for c in self.conditions:
            out &= c.holds_many(P)
        return out

    def __and__(self, other: "Region") -> "Region":
        return Region(self.conditions + other.conditions)

    def source(self, names) -> str:
        if not self.conditions:
            return "true"
        return " && ".join(c.source(names) for c in self.conditions)


@dataclass(frozen=True)
class PiecewiseFn:
    """Ordered ``(Region, Expr)`` branches; the first matching region wins."""

    branches: tuple
    dim: int
    name: str = ""

    @classmethod
    def constant(cls, value, dim: int, name: str = "") -> "PiecewiseFn":
        return cls(((Region(), Const(Fraction(value))),), dim, name)

    def branch_index(self, p, exact: bool = False) -> int:
        for i, (reg, _) in enumerate(self.branches):
            if reg.contains(p, exact):
                return i
        raise NoRegionError(f"no branch of {self.name or 'function'} matches {tuple(p)}")

    def evaluate(self, p, exact: bool = False):
        if len(p) != self.dim:
            raise ValueError(f"point has dimension {len(p)}, expected {self.dim}")
        i = self.branch_index(p, exact)
        if exact:
            return self.branches[i][1].ev([Fraction(v) for v in p], "exact")
        return float(self.branches[i][1].ev([float(v) for v in p], "float"))

    def __call__(self, p) -> float:
        return self.evaluate(p)

    def evaluate_many(self, P) -> np.ndarray:
        """Vectorised evaluation over the rows of ``P``.

        Domain errors and unmatched points come back as NaN.
        """
        P = np.atleast_2d(np.asarray(P, dtype=float))
        out = np.full(len(P), np.nan)
        todo = np.ones(len(P), dtype=bool)
        cols = [P[:, i] for i in range(self.dim)]
        for reg, expr in self.branches:
            hit = todo & reg.contains_many(P)
            if hit.any():
                sub = [c[hit] for c in cols]
                val = np.asarray(expr.ev(sub, "array"), dtype=float)
                out[hit] = np.broadcast_to(val, (int(hit.sum()),))
                todo &= ~hit
            if not todo.any():
                break
        return out

    def combine(self, other: "PiecewiseFn", op: Callable[[Expr, Expr], Expr],
                name: str = "") -> "PiecewiseFn":
        """Branchwise combination; region order keeps first-match semantics."""
        branches = []
        for ra, ea in self.branches:
            for rb, eb in other.branches:
                branches.append((ra & rb, op(ea, eb)))
        return PiecewiseFn(tuple(branches), self.dim, name)

    def __sub__(self, other: "PiecewiseFn") -> "PiecewiseFn":
        return self.combine(other, lambda a, b: make_binary("-", a, b))

    def __add__(self, other: "PiecewiseFn") -> "PiecewiseFn":
        return self.combine(other, lambda a, b: make_binary("+", a, b))

    def scaled(self, c, name: str = "") -> "PiecewiseFn":
        c = Const(Fraction(c))
        return PiecewiseFn(tuple((r, make_binary("*", c, e)) for r, e in self.branches),
                           self.dim, name)

    def negated(self, name: str = "") -> "PiecewiseFn":
        return PiecewiseFn(tuple((r, make_neg(e)) for r, e in self.branches), self.dim, name)

    def source(self, names) -> str:
        body = " ; ".join(f"{r.source(names)} : {e.source(names)}" for r, e in self.branches)
        return f"piecewise{{ {body} }}"


# --------------------------------------------------------------------------
# problem data

@dataclass(frozen=True)
class Interval:
    lo: Fraction
    hi: Fraction
    step: Fraction


@dataclass(frozen=True)
class ConeSpec:
    """Declared cone: ``orthant`` (signs in ``+ - * 0``) or ``pos`` (generators)."""

    kind: str
    signs: tuple = ()
    generators: tuple = ()


@dataclass(frozen=True)
class ConvexificatorDecl:
    target: str
    anchor: str | None
    kind: str  # "upper" | "semiregular"
    points: tuple


@dataclass(frozen=True)
class BilevelProblem:
    name: str
    n1: int
    n2: int
    n_obj: int
    x_box: tuple
    y_box: tuple
    theta_box: tuple
    theta_declared: bool
    F: tuple
    G: tuple
    H: tuple
    f: PiecewiseFn
    phi: tuple
    psi_closed: PiecewiseFn | None = None
    refpoint: tuple | None = None
    anchors: dict = field(default_factory=dict)
    cones: dict = field(default_factory=dict)
    convexificators: dict = field(default_factory=dict)
    assertions: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.n1 + self.n2

    @property
    def p(self) -> int:
        return len(self.H)

    @property
    def q(self) -> int:
        return len(self.phi)

    @property
    def var_names(self) -> list[str]:
        return var_names(self.n1, self.n2)

    def function(self, target: str) -> PiecewiseFn:
        """Named problem function (``F1``, ``negG2``, ``H1``, ``phi1``, ``f``)."""
        m = re.fullmatch(r"(F|G|negG|H|phi)(\d+)", target)
        if target == "f":
            return self.f
        if m:
            kind, k = m.group(1), int(m.group(2))
            seq = {"F": self.F, "G": self.G, "negG": self.G, "H": self.H, "phi": self.phi}[kind]
            if not 1 <= k <= len(seq):
                raise UnknownIdentifierError(f"no function {target}")
            fn = seq[k - 1]
            return fn.negated(target) if kind == "negG" else fn
        raise UnknownIdentifierError(f"no function {target}")

    def point_of(self, anchor: str | None) -> tuple:
        if anchor is None:
            if self.refpoint is None:
                raise DimensionError("no reference point declared")
            return self.refpoint
        if anchor not in self.anchors:
            raise UnknownIdentifierError(f"unknown anchor {anchor!r}")
        return self.anchors[anchor]

    def convexificator(self, target: str, anchor: str | None = None) -> ConvexificatorDecl | None:
        return self.convexificators.get((target, anchor))

    def cone(self, anchor: str | None = None) -> ConeSpec | None:
        if (anchor in self.cones):
            return self.cones[anchor]
        return self.cones.get(None) if anchor is not None else None


def var_names(n1: int, n2: int) -> list[str]:
    xs = ["x"] if n1 == 1 else [f"x[{i + 1}]" for i in range(n1)]
    ys = ["y"] if n2 == 1 else [f"y[{i + 1}]" for i in range(n2)]
    return xs + ys


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>"[^"]*")
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*(?:@[A-Za-z_0-9]+)?)
  | (?P<op>&&|<=|>=|==|!=|[-+*/^()\[\]{},;:=<>])
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str
    text: str
    col: int


def tokenize(line: str, lineno: int) -> list[Tok]:
    toks = []
    pos = 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            raise ProblemSyntaxError(f"unexpected character {line[pos]!r}", lineno, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Tok(kind, m.group(), pos + 1))
        pos = m.end()
    toks.append(Tok("end", "", len(line) + 1))
    return toks


_FUNCS = {"abs", "sqrt", "cbrt", "min", "max"}


class _LineParser:
    def __init__(self, toks: list[Tok], lineno: int, n1: int, n2: int):
        self.toks = toks
        self.i = 0
        self.lineno = lineno
        self.n1 = n1
        self.n2 = n2

    # token helpers
    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: Tok | None = None):
        tok = tok or self.cur
        shown = tok.text or "end of line"
        raise ProblemSyntaxError(f"{msg} (at {shown!r})", self.lineno, tok.col)

    def accept(self, text: str) -> bool:
        if self.cur.text == text and self.cur.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Tok:
        if self.cur.text != text:
            self.error(f"expected {text!r}")
        t = self.cur
        self.i += 1
        return t

    def expect_kind(self, kind: str) -> Tok:
        if self.cur.kind != kind:
            self.error(f"expected {kind}")
        t = self.cur
        self.i += 1
        return t

    def at_end(self):
        if self.cur.kind != "end":
            self.error("unexpected trailing input")

    # expressions
    def expr(self) -> Expr:
        node = self.term()
        while self.cur.text in ("+", "-") and self.cur.kind == "op":
            op = self.cur.text
            self.i += 1
            node = self._bin(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.cur.text in ("*", "/") and self.cur.kind == "op":
            op = self.cur.text
            tok = self.cur
            self.i += 1
            node = self._bin(op, node, self.unary(), tok)
        return node

    def _bin(self, op, a, b, tok=None):
        try:
            return make_binary(op, a, b)
        except DomainError as exc:
            self.error(str(exc), tok)

    def unary(self) -> Expr:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.i += 1
            return make_neg(self.unary())
        if self.cur.kind == "op" and self.cur.text == "+":
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            tok = self.cur
            self.i += 1
            ex = self.unary()
            if not isinstance(ex, Const):
                self.error("exponent must be a rational constant", tok)
            return make_pow(base, ex.value)
        return base

    def atom(self) -> Expr:
        t = self.cur
        if t.kind == "num":
            self.i += 1
            return Const(Fraction(t.text))
        if t.kind == "op" and t.text == "(":
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "id":
            if t.text in ("x", "y"):
                return self.variable()
            if t.text in _FUNCS:
                self.i += 1
                self.expect("(")
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if t.text in ("min", "max"):
                    if len(args) < 2:
                        self.error(f"{t.text} needs at least two arguments", t)
                    return NAry(t.text, tuple(args))
                if len(args) != 1:
                    self.error(f"{t.text} takes one argument", t)
                a = args[0]
                if isinstance(a, Const):
                    try:
                        v = Unary(t.text, a).ev(None, "exact")
                    except DomainError as exc:
                        self.error(str(exc), t)
                    if isinstance(v, Fraction):
                        return Const(v)
                return Unary(t.text, a)
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", self.lineno, t.col)
        self.error("expected an expression")

    def variable(self) -> Expr:
        t = self.cur
        self.i += 1
        n = self.n1 if t.text == "x" else self.n2
        if self.accept("["):
            it = self.expect_kind("num")
            self.expect("]")
            idx = int(it.text) if it.text.isdigit() else -1
        else:
            idx = 1 if n == 1 else -1
            if idx < 0:
                raise UnknownIdentifierError(
                    f"{t.text} has dimension {n}; index it as {t.text}[i]", self.lineno, t.col)
        if not 1 <= idx <= n:
            raise UnknownIdentifierError(f"{t.text}[{idx}] is not a declared coordinate",
                                         self.lineno, t.col)
        return Var(idx - 1 if t.text == "x" else self.n1 + idx - 1)

    # guards and piecewise
    def condition(self) -> Condition:
        start = self.cur
        lhs = self.expr()
        rel = self.cur
        if rel.kind != "op" or rel.text not in _REL:
            self.error("expected a comparison operator")
        self.i += 1
        rhs = self.expr()
        aff = affine_form(make_binary("-", lhs, rhs), self.n1 + self.n2)
        if aff is None:
            self.error("region guards must be affine", start)
        return Condition(tuple(aff[0]), aff[1], rel.text)

    def guard(self) -> Region:
        if self.accept("true"):
            return Region()
        conds = [self.condition()]
        while self.accept("&&"):
            conds.append(self.condition())
        return Region(tuple(conds))

    def function(self, name: str) -> PiecewiseFn:
        dim = self.n1 + self.n2
        if self.accept("piecewise"):
            self.expect("{")
            branches = []
            while True:
                g = self.guard()
                self.expect(":")
                branches.append((g, self.expr()))
                if self.accept(";"):
                    if self.cur.text == "}":
                        break
                    continue
                break
            self.expect("}")
            return PiecewiseFn(tuple(branches), dim, name)
        return PiecewiseFn(((Region(), self.expr()),), dim, name)

    def constant(self) -> Fraction:
        tok = self.cur
        e = self.expr()
        if not isinstance(e, Const):
            self.error("expected a constant", tok)
        return e.value

    def vector(self) -> tuple:
        self.expect("(")
        vals = [self.constant()]
        while self.accept(","):
            vals.append(self.constant())
        self.expect(")")
        return tuple(vals)


_FUNC_DECL = re.compile(r"(F|G|H|phi)(\d+)|f|Psi")
_TARGET = re.compile(r"(F|negG|H|phi|varphi)(\d+)|Psi")


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def parse_problem(text: str, check_cover: bool = True) -> BilevelProblem:
    """Parse problem-file source into a :class:`BilevelProblem`."""
    lines = [(i + 1, _strip_comment(l).strip()) for i, l in enumerate(text.splitlines())]
    lines = [(i, l) for i, l in lines if l]
    name = ""
    dims = None
    for lineno, line in lines:
        toks = tokenize(line, lineno)
        if toks[0].text == "dims":
            vals = {}
            k = 1
            while toks[k].kind != "end":
                key = toks[k]
                if key.kind != "id" or toks[k + 1].text != "=" or toks[k + 2].kind != "num":
                    raise ProblemSyntaxError("expected key=<integer>", lineno, key.col)
                vals[key.text] = int(toks[k + 2].text)
                k += 3
            try:
                dims = (vals["x"], vals["y"], vals["objectives"])
            except KeyError as exc:
                raise ProblemSyntaxError(f"dims missing {exc.args[0]}", lineno) from None
            if min(dims) < 1:
                raise DimensionError("dimensions must be positive", lineno)
    if dims is None:
        raise ProblemSyntaxError("missing 'dims' declaration")
    n1, n2, n = dims
    dim = n1 + n2

    boxes = {"x": {}, "y": {}, "z": {}}
    funcs: dict[str, PiecewiseFn] = {}
    refpoint = None
    anchors: dict[str, tuple] = {}
    cones: dict = {}
    convex: dict = {}
    assertions: dict[str, bool] = {}
    pending_convex = []

    for lineno, line in lines:
        toks = tokenize(line, lineno)
        P = _LineParser(toks, lineno, n1, n2)
        head = toks[0]
        if head.text == "dims":
            continue
        if head.text == "problem":
            P.i = 1
            name = P.expect_kind("str").text.strip('"')
            P.at_end()
        elif head.text in ("box", "theta"):
            P.i = 1
            var = P.expect_kind("id")
            allowed = ("x", "y") if head.text == "box" else ("z",)
            if var.text not in allowed:
                P.error(f"'{head.text}' declares {' or '.join(allowed)}", var)
            size = {"x": n1, "y": n2, "z": n2}[var.text]
            if P.accept("["):
                idx = int(P.expect_kind("num").text)
                P.expect("]")
            elif size == 1:
                idx = 1
            else:
                P.error(f"{var.text} needs an index")
            if not 1 <= idx <= size:
                raise DimensionError(f"{var.text}[{idx}] out of range", lineno, var.col)
            P.expect("in")
            P.expect("[")
            lo = P.constant()
            P.expect(",")
            hi = P.constant()
            P.expect("]")
            P.expect("step")
            step = P.constant()
            P.at_end()
            if step <= 0 or hi < lo + step:
                raise DimensionError("box needs step > 0 and at least two grid points", lineno)
            boxes[var.text][idx] = Interval(lo, hi, step)
        elif head.text == "refpoint" or head.text == "anchor":
            P.i = 1
            aname = None
            if head.text == "anchor":
                aname = P.expect_kind("id").text
            P.expect("=")
            v = P.vector()
            P.at_end()
            if len(v) != dim:
                raise DimensionError(f"point has {len(v)} coordinates, expected {dim}", lineno)
            if aname is None:
                refpoint = v
            else:
                anchors[aname] = v
        elif head.kind == "id" and (head.text == "D" or head.text.startswith("D@")):
            anchor = head.text[2:] if "@" in head.text else None
            P.i = 1
            P.expect("=")
            kind = P.expect_kind("id")
            if kind.text == "orthant":
                P.expect("(")
                signs = []
                while True:
                    t = P.cur
                    if t.text not in ("+", "-", "*", "0"):
                        P.error("orthant signs are + - * or 0")
                    signs.append(t.text)
                    P.i += 1
                    if not P.accept(","):
                        break
                P.expect(")")
                if len(signs) != dim:
                    raise DimensionError(f"orthant has {len(signs)} signs, expected {dim}", lineno)
                spec = ConeSpec("orthant", signs=tuple(signs))
            elif kind.text == "full":
                spec = ConeSpec("orthant", signs=("*",) * dim)
            elif kind.text == "pos":
                P.expect("{")
                gens = [P.vector()]
                while P.accept(","):
                    gens.append(P.vector())
                P.expect("}")
                if any(len(g) != dim for g in gens):
                    raise DimensionError("cone generator dimension mismatch", lineno)
                spec = ConeSpec("pos", generators=tuple(gens))
            else:
                raise UnknownIdentifierError(f"unknown cone kind {kind.text!r}", lineno, kind.col)
            P.at_end()
            cones[anchor] = spec
        elif head.text == "convexificator":
            P.i = 1
            tgt = P.expect_kind("id")
            target, _, anchor = tgt.text.partition("@")
            if not _TARGET.fullmatch(target):
                raise UnknownIdentifierError(f"unknown convexificator target {target!r}",
                                             lineno, tgt.col)
            kind = P.expect_kind("id")
            if kind.text not in ("upper", "semiregular"):
                P.error("kind must be 'upper' or 'semiregular'", kind)
            P.expect("=")
            P.expect("{")
            pts = [P.vector()]
            while P.accept(","):
                pts.append(P.vector())
            P.expect("}")
            P.at_end()
            if any(len(q) != dim for q in pts):
                raise DimensionError(f"convexificator points must have dimension {dim}", lineno)
            decl = ConvexificatorDecl(target, anchor or None, kind.text, tuple(pts))
            pending_convex.append((lineno, tgt.col, decl))
            convex[(target, anchor or None)] = decl
        elif head.text == "assert":
            P.i = 1
            key = P.expect_kind("id")
            if key.text not in ("pos_xi_closed", "star_shaped"):
                raise UnknownIdentifierError(f"unknown assertion {key.text!r}", lineno, key.col)
            P.expect("=")
            val = P.expect_kind("id")
            if val.text not in ("true", "false"):
                P.error("expected true or false", val)
            P.at_end()
            assertions[key.text] = val.text == "true"
        elif head.kind == "id" and _FUNC_DECL.fullmatch(head.text):
            P.i = 1
            P.expect("=")
            fn = P.function(head.text)
            P.at_end()
            if head.text in funcs:
                raise ProblemSyntaxError(f"{head.text} declared twice", lineno, head.col)
            funcs[head.text] = fn
        else:
            raise UnknownIdentifierError(f"unknown declaration {head.text!r}", lineno, head.col)

    def seq(prefix: str, required: int | None) -> tuple:
        idx = sorted(int(k[len(prefix):]) for k in funcs if re.fullmatch(prefix + r"\d+", k))
        count = len(idx)
        if idx != list(range(1, count + 1)):
            raise DimensionError(f"{prefix} functions must be numbered 1..{count}")
        if required is not None and count != required:
            raise DimensionError(f"expected {required} {prefix} functions, found {count}")
        return tuple(funcs[f"{prefix}{i}"] for i in range(1, count + 1))

    F = seq("F", n)
    G = seq("G", n)
    H = seq("H", None)
    phi = seq("phi", None)
    if "f" not in funcs:
        raise DimensionError("lower-level objective f is missing")

    def box(var: str, size: int) -> tuple:
        missing = [i for i in range(1, size + 1) if i not in boxes[var]]
        if missing:
            raise DimensionError(f"missing box for {var}[{missing[0]}]")
        return tuple(boxes[var][i] for i in range(1, size + 1))

    x_box = box("x", n1)
    y_box = box("y", n2)
    theta_declared = bool(boxes["z"])
    if theta_declared:
        theta_box = box("z", n2)
    else:
        theta_box = tuple(Interval(iv.lo - 1, iv.hi + 1, iv.step) for iv in y_box)

    for lineno, col, decl in pending_convex:
        m = _TARGET.fullmatch(decl.target)
        if m and m.group(1):
            k = int(m.group(2))
            limit = {"F": n, "negG": n, "varphi": n, "H": len(H), "phi": len(phi)}[m.group(1)]
            if not 1 <= k <= limit:
                raise UnknownIdentifierError(f"convexificator target {decl.target} out of range",
                                             lineno, col)
        if decl.anchor is not None and decl.anchor not in anchors:
            raise UnknownIdentifierError(f"unknown anchor {decl.anchor!r}", lineno, col)
    for a in cones:
        if a is not None and a not in anchors:
            raise UnknownIdentifierError(f"unknown anchor {a!r} in cone declaration")

    prob = BilevelProblem(
        name=name, n1=n1, n2=n2, n_obj=n, x_box=x_box, y_box=y_box, theta_box=theta_box,
        theta_declared=theta_declared, F=F, G=G, H=H, f=funcs["f"], phi=phi,
        psi_closed=funcs.get("Psi"), refpoint=refpoint, anchors=anchors, cones=cones,
        convexificators=convex, assertions=assertions)
    if check_cover:
        check_region_cover(prob)
    if refpoint is not None:
        for k in range(n):
            fv = F[k].evaluate(refpoint, exact=True)
            gv = G[k].evaluate(refpoint, exact=True)
            if not gv > 0 or not fv >= 0:
                raise ProblemError(f"reference point needs F{k + 1} >= 0 and G{k + 1} > 0")
    return prob


def _cover_points(prob: BilevelProblem, per_axis: int = 41) -> np.ndarray:
    axes = []
    for iv in prob.x_box + prob.y_box:
        lo, hi = float(iv.lo), float(iv.hi)
        npts = min(per_axis, int((iv.hi - iv.lo) / iv.step) + 1)
        axes.append(np.unique(np.concatenate([np.linspace(lo, hi, npts), [0.0]
                                              if lo <= 0 <= hi else []])))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    extra = [prob.refpoint] if prob.refpoint is not None else []
    extra += list(prob.anchors.values())
    if extra:
        pts = np.vstack([pts, np.array(extra, dtype=float)])
    return pts


def check_region_cover(prob: BilevelProblem) -> None:
    """Raise :class:`RegionCoverError` if some function has an uncovered sample point."""
    pts = _cover_points(prob)
    fns = list(prob.F) + list(prob.G) + list(prob.H) + [prob.f] + list(prob.phi)
    if prob.psi_closed is not None:
        fns.append(prob.psi_closed)
    for fn in fns:
        covered = np.zeros(len(pts), dtype=bool)
        for reg, _ in fn.branches:
            covered |= reg.contains_many(pts)
        if not covered.all():
            bad = pts[~covered][0]
            raise RegionCoverError(f"{fn.name}: no region matches point {tuple(bad.tolist())}")


def problem_source(prob: BilevelProblem) -> str:
    """Serialise a problem back to the file grammar."""
    names = prob.var_names
    out = [f'problem "{prob.name}"', f"dims x={prob.n1} y={prob.n2} objectives={prob.n_obj}"]
    for var, box in (("x", prob.x_box), ("y", prob.y_box)):
        for i, iv in enumerate(box):
            out.append(f"box {var}[{i + 1}] in [{_fmt(iv.lo)}, {_fmt(iv.hi)}] step {_fmt(iv.step)}")
    if prob.theta_declared:
        for i, iv in enumerate(prob.theta_box):
            out.append(f"theta z[{i + 1}] in [{_fmt(iv.lo)}, {_fmt(iv.hi)}] step {_fmt(iv.step)}")
    for label, seq in (("F", prob.F), ("G", prob.G), ("H", prob.H), ("phi", prob.phi)):
        for k, fn in enumerate(seq):
            out.append(f"{label}{k + 1} = {fn.source(names)}")
    out.append(f"f = {prob.f.source(names)}")
    if prob.psi_closed is not None:
        out.append(f"Psi = {prob.psi_closed.source(names)}")
    vec = lambda v: "(" + ", ".join(_fmt(Fraction(c)) for c in v) + ")"
    if prob.refpoint is not None:
        out.append(f"refpoint = {vec(prob.refpoint)}")
    for a, pt in prob.anchors.items():
        out.append(f"anchor {a} = {vec(pt)}")
    for a, spec in prob.cones.items():
        lhs = "D" if a is None else f"D@{a}"
        if spec.kind == "orthant":
            out.append(f"{lhs} = orthant({', '.join(spec.signs)})")
        else:
            out.append(f"{lhs} = pos{{ {', '.join(vec(g) for g in spec.generators)} }}")
    for (target, anchor), decl in prob.convexificators.items():
        t = target if anchor is None else f"{target}@{anchor}"
        out.append(f"convexificator {t} {decl.kind} = {{ {', '.join(vec(p) for p in decl.points)} }}")
    for k, v in prob.assertions.items():
        out.append(f"assert {k} = {'true' if v else 'false'}")
    return "\n".join(out) + "\n"


def load_problem(path) -> BilevelProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())
