"""Small arithmetic expression language with forward-mode gradients.

Expressions are parsed into an immutable AST and evaluated with dual numbers:
each node carries its value and its gradient with respect to every input
variable. Evaluation is vectorised, so a single call can process a whole batch
of points stored as an ``(N, dim)`` array.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expression",
    "ExpressionSyntaxError",
    "ExpressionDomainError",
    "SubgradientWarning",
    "Var",
    "Num",
    "BinOp",
    "Pow",
    "Func",
    "parse",
    "serialize",
    "eval_with_gradient",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs", "neg")
CONSTANTS = {"pi": math.pi}


class ExpressionSyntaxError(ValueError):
    """Malformed expression text. ``offset`` is the 0-based character position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExpressionDomainError(ArithmeticError):
    """A sub-expression was evaluated outside its domain."""

    def __init__(self, message: str, node: "Node", point=None):
        text = f"{message} in '{serialize(node)}'"
        if point is not None:
            text += f" at {tuple(float(c) for c in np.atleast_1d(point))}"
        super().__init__(text)
        self.node = node
        self.point = point


class SubgradientWarning(RuntimeWarning):
    """abs/sqrt differentiated at 0; the gradient reported there is 0."""


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Var, Num, BinOp, Pow, Func]


def _max_var(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Num):
        return 0
    if isinstance(node, BinOp):
        return max(_max_var(node.left), _max_var(node.right))
    if isinstance(node, Pow):
        return _max_var(node.base)
    return _max_var(node.arg)


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()−])"
    r")"
)


@dataclass
class _Token:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tok = m.group(kind)
        start = m.start(kind)
        if tok == "−":
            tok = "-"
        tokens.append(_Token(kind, tok, start))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := term (("+"|"-") term)*
    # term   := unary (("*"|"/") unary)*
    # unary  := "-" unary | "+" unary | power
    # power  := base ("^" exponent)?
    # base   := number | ident | "(" expr ")" | func "(" expr ")"

    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind == "end":
            self._fail(f"expected {text!r}")
        self._advance()

    def _fail(self, message: str):
        t = self.tok
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionSyntaxError(f"{message}, found {found}", t.offset)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self._fail("unexpected token")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Func("neg", self.unary())
        if self.tok.kind == "op" and self.tok.text == "+":
            self._advance()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        paren = self.tok.kind == "op" and self.tok.text == "("
        if paren:
            self._advance()
        sign = 1.0
        while self.tok.kind == "op" and self.tok.text in "+-":
            if self._advance().text == "-":
                sign = -sign
        if self.tok.kind == "ident" and self.tok.text in CONSTANTS:
            value = CONSTANTS[self._advance().text]
        elif self.tok.kind == "num":
            value = float(self._advance().text)
        else:
            self._fail("exponent must be a constant number")
        if paren:
            self._expect(")")
        return sign * value

    def base(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self._advance()
            return Num(float(t.text))
        if t.kind == "op" and t.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        if t.kind == "ident":
            self._advance()
            name = t.text
            if name in FUNCTIONS:
                self._expect("(")
                arg = self.expr()
                self._expect(")")
                return Func(name, arg)
            if name in CONSTANTS:
                return Num(CONSTANTS[name])
            index = _variable_index(name, self.dim)
            if index is None:
                raise ExpressionSyntaxError(f"unknown identifier {name!r}", t.offset)
            if index > self.dim:
                raise ExpressionSyntaxError(
                    f"variable {name!r} has index {index} > dim {self.dim}", t.offset
                )
            return Var(index)
        self._fail("expected a number, variable, function or '('")


def _variable_index(name: str, dim: int) -> int | None:
    if name in ("x", "y", "z") and dim <= 3:
        return "xyz".index(name) + 1
    m = re.fullmatch(r"x([1-9]\d*)", name)
    if m:
        return int(m.group(1))
    return None


# --------------------------------------------------------------------------
# serialization


def _num_text(v: float) -> str:
    return repr(float(v))


def serialize(node: Node) -> str:
    """Fully parenthesised text that parses back to the identical AST."""
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Num):
        return _num_text(node.value)
    if isinstance(node, BinOp):
        return f"({serialize(node.left)} {node.op} {serialize(node.right)})"
    if isinstance(node, Pow):
        return f"({serialize(node.base)})^({_num_text(node.exponent)})"
    return f"{node.name}({serialize(node.arg)})"


@dataclass(frozen=True)
class Expression:
    """Parsed expression over ``dim`` variables."""

    root: Node
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if _max_var(self.root) > self.dim:
            raise ValueError("expression references a variable beyond dim")

    def __str__(self) -> str:
        return serialize(self.root)

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Value and gradient at a batch of points.

        ``points`` has shape ``(N, dim)``; returns values ``(N,)`` and
        gradients ``(N, dim)``. Domain violations raise
        :class:`ExpressionDomainError`. Non-differentiable points of abs and
        sqrt silently get a zero derivative.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (N, {self.dim})")
        ev = _Evaluator(pts)
        val, grad = ev.run(self.root)
        val = np.broadcast_to(val, (pts.shape[0],)).copy()
        grad = np.broadcast_to(grad, (self.dim, pts.shape[0])).T.copy()
        return val, grad

    def value(self, points) -> np.ndarray:
        return self.evaluate(points)[0]


def parse(text: str, dim: int) -> Expression:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return Expression(_Parser(text, dim).parse(), dim)


# --------------------------------------------------------------------------
# dual-number evaluation


class _Evaluator:
    """Propagates (value, gradient) pairs; gradient arrays have shape (dim, N)."""

    def __init__(self, pts: np.ndarray):
        self.pts = pts
        self.n, self.dim = pts.shape[0], pts.shape[1]
        self.nonsmooth = False

    def _domain(self, mask, message, node):
        bad = np.flatnonzero(np.broadcast_to(mask, (self.n,)))
        if bad.size:
            raise ExpressionDomainError(message, node, self.pts[bad[0]])

    def run(self, node: Node):
        if isinstance(node, Num):
            return np.float64(node.value), np.zeros((self.dim, 1))
        if isinstance(node, Var):
            g = np.zeros((self.dim, 1))
            g[node.index - 1, 0] = 1.0
            return self.pts[:, node.index - 1], g
        if isinstance(node, BinOp):
            a, da = self.run(node.left)
            b, db = self.run(node.right)
            if node.op == "+":
                return a + b, da + db
            if node.op == "-":
                return a - b, da - db
            if node.op == "*":
                return a * b, da * b + a * db
            self._domain(b == 0, "division by zero", node)
            return a / b, (da * b - a * db) / (b * b)
        if isinstance(node, Pow):
            return self._pow(node)
        return self._func(node)

    def _pow(self, node: Pow):
        u, du = self.run(node.base)
        p = node.exponent
        if p == 0.0:
            return np.ones_like(u, dtype=float), np.zeros_like(du)
        if p == 1.0:
            return u, du
        integral = float(p).is_integer()
        if not integral:
            self._domain(u < 0, "non-integer power of a negative number", node)
        if p < 0:
            self._domain(u == 0, "negative power of zero", node)
        if integral and abs(p) <= 64:
            ip = int(p)
            val = u**ip
            dval = ip * u ** (ip - 1) if ip != 1 else 1.0
            return val, dval * du
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.power(u, p)
            dval = p * np.power(u, p - 1.0)
        if p < 1:
            zero = u == 0
            if np.any(zero):
                self.nonsmooth = True
                dval = np.where(zero, 0.0, dval)
        return val, dval * du

    def _func(self, node: Func):
        u, du = self.run(node.arg)
        name = node.name
        if name == "neg":
            return -u, -du
        if name == "sin":
            return np.sin(u), np.cos(u) * du
        if name == "cos":
            return np.cos(u), -np.sin(u) * du
        if name == "exp":
            e = np.exp(u)
            return e, e * du
        if name == "log":
            self._domain(u <= 0, "log of a nonpositive number", node)
            return np.log(u), du / u
        if name == "sqrt":
            self._domain(u < 0, "sqrt of a negative number", node)
            s = np.sqrt(u)
            zero = s == 0
            if np.any(zero):
                self.nonsmooth = True
                with np.errstate(divide="ignore", invalid="ignore"):
                    d = np.where(zero, 0.0, 0.5 / s)
            else:
                d = 0.5 / s
            return s, d * du
        if name == "abs":
            sgn = np.sign(u)
            if np.any(sgn == 0):
                self.nonsmooth = True
            return np.abs(u), sgn * du
        raise AssertionError(name)


def eval_with_gradient(e: Expression, p) -> tuple[float, np.ndarray]:
    """Value and exact gradient of ``e`` at a single point ``p``.

    Issues a :class:`SubgradientWarning` when abs or sqrt is differentiated at
    0 (the derivative there is taken to be 0).
    """
    pt = np.atleast_1d(np.asarray(p, dtype=float))
    if pt.shape != (e.dim,):
        raise ValueError(f"point must have {e.dim} coordinates")
    if not np.all(np.isfinite(pt)):
        raise ValueError("point must be finite")
    ev = _Evaluator(pt[None, :])
    val, grad = ev.run(e.root)
    if ev.nonsmooth:
        warnings.warn(
            f"non-differentiable point of abs/sqrt at {tuple(pt)}; using 0",
            SubgradientWarning,
            stacklevel=2,
        )
    val = float(np.broadcast_to(val, (1,))[0])
    grad = np.broadcast_to(grad, (e.dim, 1))[:, 0].astype(float)
    return val, grad
