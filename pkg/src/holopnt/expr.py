"""Coefficient and operator expressions, and the text grammar that produces them.

Grammar (whitespace insensitive, juxtaposition means multiplication)::

    expr    := ["+"|"-"] term (("+"|"-") term)* ["+" "H.c."]
    term    := power (["*"|"/"] power)*
    power   := atom [("^"|"**") integer]
    atom    := number | "i" | "pi" | name | func "(" expr ")" | ladder
             | "hc" "(" expr ")" | "(" expr ")"
    ladder  := "a'" "(" k ")" | "a" "(" k ")" | "n" "(" k ")"
             | "sp" "(" j ")" | "sm" "(" j ")"
    func    := "cos" | "sin" | "exp" | "sqrt" | "conj"

Mode indices ``k`` (bosons) and ``j`` (two-level systems) are 1-based and
count bosons and two-level systems separately.  ``n(k)`` expands to
``a'(k) a(k)``.  A trailing ``+ H.c.`` adds the conjugate transpose of
everything before it; ``hc(x)`` stands for ``x + x^dagger``.  Division is
allowed by scalar sub-expressions only.  Parameter names are identifiers
that are not reserved words.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from . import jets
from .errors import ModelInputError

RESERVED = frozenset({"a", "n", "sp", "sm", "i", "pi", "cos", "sin", "exp",
                      "sqrt", "conj", "hc", "H"})
_FUNCS = ("cos", "sin", "exp", "sqrt", "conj")


# ---------------------------------------------------------------------------
# coefficient trees

class Coeff:
    """Scalar expression over real parameters."""

    def evaluate(self, env: Mapping[str, float]) -> complex:
        raise NotImplementedError

    def jet(self, env, index: jets.JetIndex, slots: Mapping[str, int]) -> np.ndarray:
        raise NotImplementedError

    def symbols(self) -> frozenset:
        raise NotImplementedError

    def conj(self) -> "Coeff":
        return Conj(self)

    def rename(self, mapping: Mapping[str, str]) -> "Coeff":
        raise NotImplementedError

    # small constant-folding constructors keep expanded trees readable
    def __add__(self, other):
        if isinstance(other, Num) and other.value == 0:
            return self
        if isinstance(self, Num) and self.value == 0:
            return other
        if isinstance(self, Num) and isinstance(other, Num):
            return Num(self.value + other.value)
        return Bin("+", self, other)

    def __mul__(self, other):
        if isinstance(self, Num) and isinstance(other, Num):
            return Num(self.value * other.value)
        for a, b in ((self, other), (other, self)):
            if isinstance(a, Num):
                if a.value == 1:
                    return b
                if a.value == 0:
                    return Num(0)
        return Bin("*", self, other)

    def __neg__(self):
        if isinstance(self, Num):
            return Num(-self.value)
        return Neg(self)


def _fmt_num(v: complex) -> str:
    v = complex(v)
    if v.imag == 0:
        return repr(float(v.real)).rstrip("0").rstrip(".") if float(v.real).is_integer() else repr(float(v.real))
    if v.real == 0:
        return f"{float(v.imag)!r} i"
    return f"({float(v.real)!r} + {float(v.imag)!r} i)"


@dataclass(frozen=True)
class Num(Coeff):
    value: complex

    def evaluate(self, env):
        return complex(self.value)

    def jet(self, env, index, slots):
        return jets.constant(index, complex(self.value))

    def symbols(self):
        return frozenset()

    def conj(self):
        return Num(complex(self.value).conjugate())

    def rename(self, mapping):
        return self

    def __str__(self):
        return _fmt_num(self.value)


@dataclass(frozen=True)
class Sym(Coeff):
    name: str

    def evaluate(self, env):
        try:
            return complex(env[self.name])
        except KeyError:
            raise ModelInputError(f"unbound parameter '{self.name}'") from None

    def jet(self, env, index, slots):
        value = self.evaluate(env).real
        if self.name in slots:
            return jets.variable(index, slots[self.name], value).astype(complex)
        return jets.constant(index, complex(value))

    def symbols(self):
        return frozenset({self.name})

    def conj(self):
        return self

    def rename(self, mapping):
        return Sym(mapping.get(self.name, self.name))

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Coeff):
    arg: Coeff

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def jet(self, env, index, slots):
        return -self.arg.jet(env, index, slots)

    def symbols(self):
        return self.arg.symbols()

    def conj(self):
        return Neg(self.arg.conj())

    def rename(self, mapping):
        return Neg(self.arg.rename(mapping))

    def __str__(self):
        return f"-({self.arg})"


@dataclass(frozen=True)
class Bin(Coeff):
    op: str
    left: Coeff
    right: Coeff

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def jet(self, env, index, slots):
        a = self.left.jet(env, index, slots)
        b = self.right.jet(env, index, slots)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return jets.mul(index, a, b, index.order, matrix=False)
        return jets.mul(index, a, jets.scalar_power(index, b, -1.0), index.order, matrix=False)

    def symbols(self):
        return self.left.symbols() | self.right.symbols()

    def conj(self):
        return Bin(self.op, self.left.conj(), self.right.conj())

    def rename(self, mapping):
        return Bin(self.op, self.left.rename(mapping), self.right.rename(mapping))

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Pow(Coeff):
    base: Coeff
    exponent: int

    def evaluate(self, env):
        return self.base.evaluate(env) ** self.exponent

    def jet(self, env, index, slots):
        return jets.scalar_power(index, self.base.jet(env, index, slots), float(self.exponent))

    def symbols(self):
        return self.base.symbols()

    def conj(self):
        return Pow(self.base.conj(), self.exponent)

    def rename(self, mapping):
        return Pow(self.base.rename(mapping), self.exponent)

    def __str__(self):
        return f"({self.base})^{self.exponent}"


@dataclass(frozen=True)
class Call(Coeff):
    func: str
    arg: Coeff

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        if self.func == "conj":
            return x.conjugate()
        if self.func == "sqrt":
            return complex(np.sqrt(x))
        f = {"cos": np.cos, "sin": np.sin, "exp": np.exp}[self.func]
        return complex(f(x))

    def jet(self, env, index, slots):
        u = self.arg.jet(env, index, slots)
        if self.func == "conj":
            return np.conj(u)
        if self.func == "sqrt":
            return jets.scalar_power(index, u, 0.5)
        f = {"cos": jets.scalar_cos, "sin": jets.scalar_sin, "exp": jets.scalar_exp}[self.func]
        return f(index, u)

    def symbols(self):
        return self.arg.symbols()

    def conj(self):
        if self.func == "conj":
            return self.arg
        if self.func == "sqrt":
            return Conj(self)
        return Call(self.func, self.arg.conj())

    def rename(self, mapping):
        return Call(self.func, self.arg.rename(mapping))

    def __str__(self):
        return f"{self.func}({self.arg})"


@dataclass(frozen=True)
class Conj(Coeff):
    arg: Coeff

    def evaluate(self, env):
        return self.arg.evaluate(env).conjugate()

    def jet(self, env, index, slots):
        return np.conj(self.arg.jet(env, index, slots))

    def symbols(self):
        return self.arg.symbols()

    def conj(self):
        return self.arg

    def rename(self, mapping):
        return Conj(self.arg.rename(mapping))

    def __str__(self):
        return f"conj({self.arg})"


# ---------------------------------------------------------------------------
# ladder symbols and operator expressions

CREATE, ANNIHILATE, RAISE, LOWER = "create", "annihilate", "raise", "lower"
_DAGGER = {CREATE: ANNIHILATE, ANNIHILATE: CREATE, RAISE: LOWER, LOWER: RAISE}
_TEXT = {CREATE: "a'", ANNIHILATE: "a", RAISE: "sp", LOWER: "sm"}


@dataclass(frozen=True)
class Ladder:
    """One ladder symbol; ``mode`` is 0-based within its own kind."""

    kind: str
    mode: int

    @property
    def boson(self) -> bool:
        return self.kind in (CREATE, ANNIHILATE)

    @property
    def raising(self) -> bool:
        return self.kind in (CREATE, RAISE)

    def dagger(self) -> "Ladder":
        return Ladder(_DAGGER[self.kind], self.mode)

    def __str__(self):
        return f"{_TEXT[self.kind]}({self.mode + 1})"


@dataclass(frozen=True)
class OperatorTerm:
    coeff: Coeff
    factors: tuple[Ladder, ...]

    def dagger(self) -> "OperatorTerm":
        return OperatorTerm(self.coeff.conj(), tuple(f.dagger() for f in reversed(self.factors)))


@dataclass(frozen=True)
class OperatorExpression:
    """Sum of coefficient times ordered product of ladder symbols.

    Products act right to left, as operator products do.  ``hermitian``
    records that the term set was built closed under conjugate transpose;
    matrix construction checks it.
    """

    terms: tuple[OperatorTerm, ...]
    hermitian: bool = False

    def dagger(self) -> "OperatorExpression":
        return OperatorExpression(tuple(t.dagger() for t in self.terms), self.hermitian)

    def __add__(self, other: "OperatorExpression") -> "OperatorExpression":
        return OperatorExpression(self.terms + other.terms, self.hermitian and other.hermitian)

    def scaled(self, c: complex | Coeff) -> "OperatorExpression":
        c = c if isinstance(c, Coeff) else Num(complex(c))
        return OperatorExpression(tuple(OperatorTerm(c * t.coeff, t.factors) for t in self.terms))

    def with_hc(self) -> "OperatorExpression":
        return OperatorExpression(self.terms + self.dagger().terms, True)

    def shifted(self, bosons: int = 0, two_levels: int = 0) -> "OperatorExpression":
        def sh(f: Ladder) -> Ladder:
            return Ladder(f.kind, f.mode + (bosons if f.boson else two_levels))
        return OperatorExpression(tuple(OperatorTerm(t.coeff, tuple(sh(f) for f in t.factors))
                                        for t in self.terms), self.hermitian)

    def renamed(self, mapping: Mapping[str, str]) -> "OperatorExpression":
        return OperatorExpression(tuple(OperatorTerm(t.coeff.rename(mapping), t.factors)
                                        for t in self.terms), self.hermitian)

    def symbols(self) -> frozenset:
        out: frozenset = frozenset()
        for t in self.terms:
            out |= t.coeff.symbols()
        return out

    @cached_property
    def max_boson_mode(self) -> int:
        return max((f.mode for t in self.terms for f in t.factors if f.boson), default=-1)

    @cached_property
    def max_two_level_mode(self) -> int:
        return max((f.mode for t in self.terms for f in t.factors if not f.boson), default=-1)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for t in self.terms:
            ops = " ".join(str(f) for f in t.factors)
            parts.append(f"{t.coeff} {ops}".strip())
        return " + ".join(parts)


def is_number_conserving(expr: OperatorExpression) -> bool:
    """True iff every term has as many raising as lowering symbols."""
    for t in expr.terms:
        up = sum(1 for f in t.factors if f.raising)
        if 2 * up != len(t.factors):
            return False
    return True


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<hc>H\.c\.?)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<dag>a')
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<pow>\*\*|\^)
  | (?P<op>[-+*/(),])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise _err(text, i, f"unexpected character {text[i]!r}")
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), i))
        i = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


def _err(text: str, pos: int, msg: str) -> ModelInputError:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return ModelInputError(f"{msg} in expression {text!r}", line=line, column=col)


# polynomial = list of (Coeff, factors)
_Poly = list


class _Parser:
    def __init__(self, text: str, allow_operators: bool):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.allow_ops = allow_operators

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind=None, text=None) -> _Tok:
        t = self.toks[self.i]
        if (kind and t.kind != kind) or (text and t.text != text):
            want = text or kind
            raise _err(self.text, t.pos, f"expected {want!r}, found {t.text or 'end'!r}")
        self.i += 1
        return t

    def parse(self) -> _Poly:
        poly = self.expr(top=True)
        t = self.peek()
        if t.kind != "end":
            raise _err(self.text, t.pos, f"unexpected {t.text!r}")
        return poly

    def expr(self, top=False) -> _Poly:
        sign = 1
        t = self.peek()
        if t.kind == "op" and t.text in "+-":
            self.i += 1
            sign = -1 if t.text == "-" else 1
        poly = _scale(self.term(), sign)
        while True:
            t = self.peek()
            if t.kind == "op" and t.text in "+-":
                self.i += 1
                if self.peek().kind == "hc":
                    if not top or t.text != "+":
                        raise _err(self.text, t.pos, "'+ H.c.' only allowed at the end of the top level")
                    self.i += 1
                    poly = poly + _dagger(poly)
                    if self.peek().kind != "end":
                        raise _err(self.text, self.peek().pos, "'H.c.' must be the last term")
                    return poly
                nxt = self.term()
                poly = poly + (_scale(nxt, -1) if t.text == "-" else nxt)
            else:
                return poly

    def _starts_atom(self, t: _Tok) -> bool:
        return t.kind in ("num", "name", "dag") or (t.kind == "op" and t.text == "(")

    def term(self) -> _Poly:
        poly = self.power()
        while True:
            t = self.peek()
            if t.kind == "op" and t.text == "*":
                self.i += 1
                poly = _mul(poly, self.power())
            elif t.kind == "op" and t.text == "/":
                self.i += 1
                rhs = self.power()
                c = _as_scalar(rhs)
                if c is None:
                    raise _err(self.text, t.pos, "division by an operator")
                poly = [(Bin("/", k, c), f) for k, f in poly]
            elif self._starts_atom(t):
                poly = _mul(poly, self.power())
            else:
                return poly

    def power(self) -> _Poly:
        base = self.atom()
        t = self.peek()
        if t.kind == "pow":
            self.i += 1
            et = self.peek()
            neg = False
            if et.kind == "op" and et.text == "-":
                neg = True
                self.i += 1
                et = self.peek()
            e = self.take("num")
            if not re.fullmatch(r"\d+", e.text):
                raise _err(self.text, e.pos, "exponent must be an integer literal")
            k = int(e.text) * (-1 if neg else 1)
            c = _as_scalar(base)
            if c is not None:
                return [(Pow(c, k), ())]
            if k < 0:
                raise _err(self.text, e.pos, "negative power of an operator")
            out = [(Num(1), ())]
            for _ in range(k):
                out = _mul(out, base)
            return out
        return base

    def _index(self) -> int:
        self.take("op", "(")
        t = self.take("num")
        if not re.fullmatch(r"\d+", t.text) or int(t.text) < 1:
            raise _err(self.text, t.pos, "mode index must be a positive integer")
        self.take("op", ")")
        return int(t.text) - 1

    def atom(self) -> _Poly:
        t = self.peek()
        if t.kind == "num":
            self.i += 1
            return [(Num(float(t.text)), ())]
        if t.kind == "op" and t.text == "(":
            self.i += 1
            inner = self.expr()
            self.take("op", ")")
            return inner
        if t.kind == "dag":
            self._need_ops(t)
            self.i += 1
            return [(Num(1), (Ladder(CREATE, self._index()),))]
        if t.kind == "name":
            name = t.text
            if name in ("a", "n", "sp", "sm"):
                self._need_ops(t)
                self.i += 1
                k = self._index()
                if name == "a":
                    return [(Num(1), (Ladder(ANNIHILATE, k),))]
                if name == "n":
                    return [(Num(1), (Ladder(CREATE, k), Ladder(ANNIHILATE, k)))]
                if name == "sp":
                    return [(Num(1), (Ladder(RAISE, k),))]
                return [(Num(1), (Ladder(LOWER, k),))]
            self.i += 1
            if name == "i":
                return [(Num(1j), ())]
            if name == "pi":
                return [(Num(math.pi), ())]
            if name == "hc":
                self.take("op", "(")
                inner = self.expr()
                self.take("op", ")")
                return inner + _dagger(inner)
            if name in _FUNCS:
                self.take("op", "(")
                inner = self.expr()
                self.take("op", ")")
                c = _as_scalar(inner)
                if c is None:
                    raise _err(self.text, t.pos, f"{name}() of an operator")
                return [(Call(name, c), ())]
            if name in RESERVED:
                raise _err(self.text, t.pos, f"reserved word {name!r}")
            return [(Sym(name), ())]
        raise _err(self.text, t.pos, f"unexpected {t.text or 'end of input'!r}")

    def _need_ops(self, t: _Tok):
        if not self.allow_ops:
            raise _err(self.text, t.pos, "ladder operator in a scalar expression")


def _scale(poly: _Poly, s: int) -> _Poly:
    return poly if s == 1 else [(-c, f) for c, f in poly]


def _mul(p: _Poly, q: _Poly) -> _Poly:
    return [(a * b, fa + fb) for a, fa in p for b, fb in q]


def _dagger(p: _Poly) -> _Poly:
    return [(c.conj(), tuple(f.dagger() for f in reversed(fs))) for c, fs in p]


def _as_scalar(p: _Poly) -> Coeff | None:
    if any(fs for _, fs in p):
        return None
    out: Coeff = Num(0)
    for c, _ in p:
        out = out + c
    return out


def parse_coefficient(text: str) -> Coeff:
    """Parse a scalar expression (no ladder symbols)."""
    poly = _Parser(str(text), allow_operators=False).parse()
    return _as_scalar(poly)


def parse_operator(text: str, hermitian: bool = False) -> OperatorExpression:
    """Parse an operator expression; like factor sequences are merged."""
    poly = _Parser(str(text), allow_operators=True).parse()
    merged: dict[tuple, Coeff] = {}
    order = []
    for c, fs in poly:
        if fs not in merged:
            merged[fs] = c
            order.append(fs)
        else:
            merged[fs] = merged[fs] + c
    terms = tuple(OperatorTerm(merged[fs], fs) for fs in order
                  if not (isinstance(merged[fs], Num) and merged[fs].value == 0))
    return OperatorExpression(terms, hermitian)


def check_modes(expr: OperatorExpression, bosons: int, two_levels: int, where: str = "") -> None:
    """Raise ModelInputError when a ladder symbol points outside the system."""
    for t in expr.terms:
        for f in t.factors:
            limit = bosons if f.boson else two_levels
            if f.mode >= limit:
                kind = "boson mode" if f.boson else "two-level system"
                raise ModelInputError(f"{kind} {f.mode + 1} referenced but the system has {limit}",
                                      path=where or None)
