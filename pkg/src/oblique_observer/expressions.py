"""A small pointwise expression language for coefficients and initial data.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?          exponent must be constant
    atom   := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are ``x1``, ``x2``, ... , ``t`` and the constant ``pi``; functions are
``sin``, ``cos``, ``abs`` and ``exp``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = ["Expression", "ExpressionError", "parse_expression", "constant"]

_FUNCS = {"sin": np.sin, "cos": np.cos, "abs": np.abs, "exp": np.exp}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


class ExpressionError(ValueError):
    """Syntax or name error; ``offset`` is the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


# AST nodes are tuples: ("num", v) ("var", name) ("neg", a) ("bin", op, a, b)
# ("call", fname, a) ("pow", a, exponent)


def _tokenize(src: str):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            j = pos
            while j < n and src[j].isspace():
                j += 1
            raise ExpressionError(f"unexpected character {src[j]!r}", len(src[:j].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(src[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(src.encode())))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value:
            want = "end of input" if value == "" else repr(value)
            got = "end of input" if kind == "end" else repr(text)
            raise ExpressionError(f"expected {want}, found {got}", off)

    def parse(self):
        node = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected {text!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            inner = self.unary()
            return ("neg", inner) if text == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, off = self.peek()
        if kind == "op" and text == "^":
            self.take()
            exp_off = self.peek()[2]
            exponent = self.unary()
            if _free_names(exponent):
                raise ExpressionError("exponent must be constant", exp_off)
            return ("pow", base, float(_eval(exponent, None, 0.0)))
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return ("num", float(text))
        if kind == "name":
            if text in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", text, arg)
            if text == "pi":
                return ("num", math.pi)
            if text == "t" or re.fullmatch(r"x[1-9]\d*", text):
                return ("var", text)
            raise ExpressionError(f"unknown identifier {text!r}", off)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError("expected a value, found " + ("end of input" if kind == "end" else repr(text)), off)


def _free_names(node) -> set[str]:
    tag = node[0]
    if tag == "num":
        return set()
    if tag == "var":
        return {node[1]}
    if tag == "bin":
        return _free_names(node[2]) | _free_names(node[3])
    if tag == "call":
        return _free_names(node[2])
    return _free_names(node[1])


def _eval(node, x, t):
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        name = node[1]
        if name == "t":
            return t
        j = int(name[1:]) - 1
        if x is None or j >= x.shape[1]:
            raise ValueError(f"variable {name} is not defined for this domain")
        return x[:, j]
    if tag == "neg":
        return -_eval(node[1], x, t)
    if tag == "bin":
        a, b = _eval(node[2], x, t), _eval(node[3], x, t)
        op = node[1]
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        return a / b
    if tag == "call":
        return _FUNCS[node[1]](_eval(node[2], x, t))
    return _eval(node[1], x, t) ** node[2]


@dataclass(frozen=True)
class Expression:
    """Parsed expression; call with an (n, d) point array and a time."""

    source: str
    tree: tuple

    @property
    def names(self) -> frozenset[str]:
        return frozenset(_free_names(self.tree))

    @property
    def depends_on_t(self) -> bool:
        return "t" in self.names

    @property
    def max_dim(self) -> int:
        """Largest spatial index used (0 if the expression is spatially constant)."""
        return max((int(n[1:]) for n in self.names if n != "t"), default=0)

    def __call__(self, x, t: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        with np.errstate(all="ignore"):
            v = _eval(self.tree, x, float(t))
        return np.broadcast_to(np.asarray(v, dtype=float), (x.shape[0],)).copy()

    def __str__(self) -> str:
        return self.source


def parse_expression(src: str) -> Expression:
    """Parse ``src``; raises :class:`ExpressionError` with the byte offset of the fault."""
    if not isinstance(src, str):
        raise TypeError("expression source must be a string")
    return Expression(src, _Parser(src).parse())


def constant(value: float) -> Expression:
    return Expression(repr(float(value)), ("num", float(value)))
