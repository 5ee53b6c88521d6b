"""Scalar expressions over coordinates and named parameters.

Grammar (loosest to tightest binding)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" exponent)?          # right-associative
    exponent := "-" exponent | power
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

so ``-q1^2`` is ``-(q1^2)`` and ``2^3^2`` is ``2^(3^2)``.  Exponents may not
reference coordinates.  Evaluation runs over :class:`~rsep.jets.Jet` values,
which gives exact derivatives up to the requested order.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from . import jets
from .errors import DomainError, NonConstantExponent, NonFiniteError, ParseError, UndeclaredIdentifier
from .jets import Jet

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Coord, Param, Neg, BinOp, Call]


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text, coords, params):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.coords = set(coords)
        self.params = set(params)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def offset(self, tok):
        return _byte_offset(self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(f"expected {value!r}, found {found}", self.offset(tok))
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", self.offset(tok))
        return e

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def exponent(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.exponent())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            exp_start = self.peek()
            exponent = self.exponent()
            bad = _first_coord(exponent)
            if bad is not None:
                raise NonConstantExponent(
                    f"exponent depends on coordinate '{bad}'", self.offset(exp_start))
            return BinOp("^", base, exponent)
        return base

    def atom(self):
        tok = self.take()
        kind, text = tok[0], tok[1]
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise UndeclaredIdentifier(text, self.offset(tok))
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise ParseError(f"function '{text}' used without an argument", self.offset(tok))
            if text in self.coords:
                return Coord(text)
            if text in self.params:
                return Param(text)
            raise UndeclaredIdentifier(text, self.offset(tok))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {found}", self.offset(tok))


def _first_coord(e: Expr):
    if isinstance(e, Coord):
        return e.name
    if isinstance(e, (Neg, Call)):
        return _first_coord(e.arg)
    if isinstance(e, BinOp):
        return _first_coord(e.left) or _first_coord(e.right)
    return None


def parse(text: str, declared_names: Sequence[str], params: Sequence[str] = ()) -> Expr:
    """Parse ``text``; ``declared_names`` are coordinates, ``params`` named constants."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    clash = set(declared_names) & set(params)
    if clash:
        raise ParseError(f"names declared both as coordinate and parameter: {sorted(clash)}")
    return _Parser(text, declared_names, params).parse()


def to_string(e: Expr) -> str:
    """Fully parenthesized source text that reparses to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, (Coord, Param)):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def names(e: Expr) -> set[str]:
    """Coordinate names referenced by ``e``."""
    if isinstance(e, Coord):
        return {e.name}
    if isinstance(e, (Neg, Call)):
        return names(e.arg)
    if isinstance(e, BinOp):
        return names(e.left) | names(e.right)
    return set()


# ---------------------------------------------------------------------------
# evaluation

_CALLS = {
    "sin": jets.sin,
    "cos": jets.cos,
    "tan": jets.tan,
    "exp": jets.exp,
    "ln": jets.log,
    "sqrt": jets.sqrt,
    "abs": jets.fabs,
}


def _apply(e, env, params):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Coord):
        return env[e.name]
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise UndeclaredIdentifier(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env, params)
    if isinstance(e, Call):
        return _CALLS[e.func](evaluate(e.arg, env, params))
    a = evaluate(e.left, env, params)
    b = evaluate(e.right, env, params)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if (b.value if isinstance(b, Jet) else b) == 0:
            raise DomainError("division by zero")
        return a / b
    # "^": exponent is a constant by construction
    if isinstance(b, Jet):
        b = b.value
    return jets.power(a, b)


def evaluate(e: Expr, env: Mapping[str, object], params: Mapping[str, float] = {}):
    """Evaluate ``e`` with coordinates bound to jets (or floats) in ``env``.

    Domain errors are re-raised with the offending sub-expression attached.
    """
    try:
        return _apply(e, env, params)
    except DomainError as exc:
        if exc.node is None:
            raise DomainError(f"{exc} in `{to_string(e)}`", node=e) from None
        raise
    except (OverflowError, ZeroDivisionError) as exc:
        raise NonFiniteError(f"{exc} in `{to_string(e)}`") from None


def eval_jet(e: Expr, point: Sequence[float], params: Mapping[str, float] = {}, order: int = 2,
             coord_names: Sequence[str] | None = None) -> Jet:
    """Value and all partials up to ``order`` of ``e`` at ``point``.

    Coordinates are matched to ``point`` through ``coord_names``; by default
    they are the coordinate names of ``e`` in sorted order.
    """
    if coord_names is None:
        coord_names = sorted(names(e))
    if len(coord_names) != len(point):
        raise ValueError(f"point has {len(point)} entries for coordinates {list(coord_names)}")
    q = jets.seed_point(point, order)
    out = evaluate(e, dict(zip(coord_names, q)), params)
    out = jets.as_jet(out, len(point), order)
    if not out.is_finite():
        raise NonFiniteError(f"non-finite result evaluating `{to_string(e)}` at {list(point)}")
    return out


def compile_field(e: Expr, coord_names: Sequence[str], params: Mapping[str, float] = {}):
    """Turn ``e`` into a field: a callable mapping coordinate jets to a jet (or float)."""
    coord_names = tuple(coord_names)
    params = dict(params)

    def field(q):
        return evaluate(e, dict(zip(coord_names, q)), params)

    field.expr = e
    field.__name__ = to_string(e)
    return field


def field_from_text(text: str, coord_names: Sequence[str], params: Mapping[str, float] = {}):
    return compile_field(parse(text, coord_names, list(params)), coord_names, params)

