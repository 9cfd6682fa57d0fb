"""A small expression language for closed-form surfaces and lifts.

Grammar (whitespace-insensitive)::

    surface := '(' expr (',' expr)+ ')'
    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := base ('^' integer)?
    base    := number | 'u' | 'v' | func '(' expr ')' | '(' expr ')' | '-' base
    func    := 'sin' | 'cos' | 'exp' | 'sqrt'

Note that ``-u^2`` parses as ``(-u)^2``: unary minus binds to a base.
Expressions evaluate to :class:`~gdeform.jetcalc.Jet2` germs at any set of
parameter points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .jetcalc import Jet2, JetDomainError, stack

FUNCTIONS = ("sin", "cos", "exp", "sqrt")
VARIABLES = ("u", "v")


class DSLError(ValueError):
    """Base class for surface-language errors; carries a byte offset when known."""

    def __init__(self, message, offset=None, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        where = f" at offset {offset}" if offset is not None else ""
        exp = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message}{where}{exp}")


class ParseError(DSLError):
    pass


class DomainError(DSLError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Func]


@dataclass(frozen=True)
class SurfaceExpr:
    components: tuple

    @property
    def arity(self):
        return len(self.components)

    def __str__(self):
        return to_text(self)


# --------------------------------------------------------------------------
# tokenizer

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)

_EXPECT_BASE = frozenset({"number", "u", "v", "func", "'('", "'-'"})


@dataclass
class _Tok:
    kind: str  # number | name | op | end
    text: str
    offset: int


def _byte_offset(text, i):
    return len(text[:i].encode("utf-8"))


def tokenize(text):
    toks = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            toks.append(_Tok("end", "", _byte_offset(text, pos)))
            return toks
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), _byte_offset(text, start)))
        pos = m.end()


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_op(self, op, expected=None):
        t = self.tok
        if t.kind == "op" and t.text == op:
            return self.advance()
        raise ParseError(f"unexpected {_describe(t)}", t.offset, expected or {f"'{op}'"})

    def surface(self):
        t = self.tok
        if not (t.kind == "op" and t.text == "("):
            raise ParseError(f"unexpected {_describe(t)}", t.offset, {"'('"})
        self.advance()
        items = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            items.append(self.expr())
        self.expect_op(")", {"'+'", "'-'", "'*'", "'/'", "'^'", "','", "')'"})
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {_describe(self.tok)}", self.tok.offset, {"end of input"})
        if len(items) < 3:
            raise ParseError(f"a surface needs at least 3 components, got {len(items)}", t.offset)
        return SurfaceExpr(tuple(items))

    def scalar(self):
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(
                f"unexpected {_describe(self.tok)}", self.tok.offset,
                {"'+'", "'-'", "'*'", "'/'", "'^'", "end of input"},
            )
        return e

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            t = self.tok
            if t.kind != "number" or not t.text.isdigit():
                raise ParseError(f"unexpected {_describe(t)}", t.offset, {"integer"})
            self.advance()
            node = Pow(node, int(t.text))
        return node

    def base(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return Num(float(t.text))
        if t.kind == "name":
            if t.text in VARIABLES:
                self.advance()
                return Var(t.text)
            if t.text in FUNCTIONS:
                self.advance()
                self.expect_op("(")
                arg = self.expr()
                if self.tok.kind == "op" and self.tok.text == ",":
                    raise ParseError(f"function {t.text} takes exactly one argument", self.tok.offset)
                self.expect_op(")", {"'+'", "'-'", "'*'", "'/'", "'^'", "')'"})
                return Func(t.text, arg)
            raise ParseError(f"unknown identifier {t.text!r}", t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner = self.expr()
            if self.tok.kind == "op" and self.tok.text == ",":
                raise ParseError("vector used where a scalar is required", self.tok.offset)
            self.expect_op(")", {"'+'", "'-'", "'*'", "'/'", "'^'", "')'"})
            return inner
        if t.kind == "op" and t.text == "-":
            self.advance()
            return Neg(self.base())
        raise ParseError(f"unexpected {_describe(t)}", t.offset, _EXPECT_BASE)


def _describe(t):
    return "end of input" if t.kind == "end" else repr(t.text)


def parse(text: str) -> SurfaceExpr:
    """Parse a vector-valued surface expression."""
    return _Parser(text).surface()


def parse_scalar(text: str) -> Node:
    """Parse a single scalar expression in u and v."""
    return _Parser(text).scalar()


# --------------------------------------------------------------------------
# canonical printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def _fmt_number(x):
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _is_base(node):
    return isinstance(node, (Num, Var, Func, Neg))


def node_text(node) -> str:
    if isinstance(node, Num):
        return _fmt_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Func):
        return f"{node.name}({node_text(node.arg)})"
    if isinstance(node, Neg):
        inner = node_text(node.arg)
        return f"-{inner}" if _is_base(node.arg) else f"-({inner})"
    if isinstance(node, Pow):
        inner = node_text(node.base)
        if not _is_base(node.base):
            inner = f"({inner})"
        return f"{inner}^{node.exponent}"
    p = _PREC[node.op]
    left = node_text(node.left)
    if _prec(node.left) < p:
        left = f"({left})"
    right = node_text(node.right)
    if _prec(node.right) <= p:
        right = f"({right})"
    sep = f" {node.op} " if p == 1 else node.op
    return f"{left}{sep}{right}"


def to_text(expr) -> str:
    if isinstance(expr, SurfaceExpr):
        return "(" + ", ".join(node_text(c) for c in expr.components) + ")"
    return node_text(expr)


# --------------------------------------------------------------------------
# evaluation


def _points(point):
    p = np.asarray(point, dtype=float)
    if p.shape == (2,):
        return p[0], p[1]
    if p.ndim >= 1 and p.shape[-1] == 2:
        return p[..., 0], p[..., 1]
    raise ValueError("points must have trailing dimension 2")


def eval_node(node, u, v, degree) -> Jet2:
    if isinstance(node, Num):
        return Jet2.constant(np.full(np.shape(u), node.value), degree)
    if isinstance(node, Var):
        return Jet2.variable(0 if node.name == "u" else 1, u if node.name == "u" else v, degree)
    if isinstance(node, Neg):
        return -eval_node(node.arg, u, v, degree)
    if isinstance(node, Pow):
        return eval_node(node.base, u, v, degree) ** node.exponent
    if isinstance(node, Func):
        arg = eval_node(node.arg, u, v, degree)
        try:
            return getattr(arg, node.name)()
        except JetDomainError as exc:
            raise DomainError(f"{exc} in {node_text(node)}") from None
    left = eval_node(node.left, u, v, degree)
    right = eval_node(node.right, u, v, degree)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    try:
        return left / right
    except JetDomainError:
        raise DomainError(f"division by zero in {node_text(node)}") from None


def eval_jet(expr, point, degree=3) -> Jet2:
    """Taylor jet of an expression at one point (u, v) or an array of points.

    A SurfaceExpr yields trailing shape (..., N); a scalar node yields (...).
    """
    u, v = _points(point)
    if isinstance(expr, SurfaceExpr):
        return stack([eval_node(c, u, v, degree) for c in expr.components], axis=-1)
    return eval_node(expr, u, v, degree)


def eval_value(expr, point):
    return eval_jet(expr, point, 0).value


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class ParamGrid:
    u_range: tuple = (0.0, 1.0)
    v_range: tuple = (0.0, 1.0)
    nu: int = 16
    nv: int = 16
    periodic_u: bool = False
    periodic_v: bool = False

    def __post_init__(self):
        if self.nu < 8 or self.nv < 8:
            raise ValueError("grids need at least 8 samples per direction")
        if not (self.u_range[1] > self.u_range[0] and self.v_range[1] > self.v_range[0]):
            raise ValueError("grid ranges must be non-empty intervals")

    def _axis(self, rng, n, periodic):
        return np.linspace(rng[0], rng[1], n, endpoint=not periodic)

    @property
    def us(self):
        return self._axis(self.u_range, self.nu, self.periodic_u)

    @property
    def vs(self):
        return self._axis(self.v_range, self.nv, self.periodic_v)

    @property
    def spacing(self):
        return self.us[1] - self.us[0], self.vs[1] - self.vs[0]

    @property
    def shape(self):
        return (self.nu, self.nv)

    def points(self):
        """(nu*nv, 2) array in row-major (u outer, v inner) order."""
        U, V = np.meshgrid(self.us, self.vs, indexing="ij")
        return np.stack([U.ravel(), V.ravel()], axis=-1)

    def interior_mask(self):
        m = np.ones(self.shape, dtype=bool)
        if not self.periodic_u:
            m[0, :] = m[-1, :] = False
        if not self.periodic_v:
            m[:, 0] = m[:, -1] = False
        return m.ravel()


# --------------------------------------------------------------------------
# built-in surfaces

BUILTINS = {
    "cylinder": "(cos(u), sin(u), v)",
    "sphere": "(cos(u)*cos(v), sin(u)*cos(v), sin(v))",
    "cone": "(v*cos(u), v*sin(u), v)",
    "saddle": "(u, v, u*v)",
    "uv": "(1, u, v, u*v)",
    "quadric": "(1, u, v, u*v)",
    "elliptic_paraboloid": "(1, u, v, u^2 + v^2)",
}


def resolve_surface(text_or_name: str) -> SurfaceExpr:
    """A built-in surface name or a DSL string."""
    return parse(BUILTINS.get(text_or_name, text_or_name))
