"""Recursive-descent parser for vector fields written as expressions.

Grammar (components separated by ';')::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' factor)?
    base   := number | 'x' digits | func '(' expr ')' | '(' expr ')' | '-' base
    func   := sin | cos | tanh | exp | abs | sqrt

Variables are 1-based: ``x1 .. xn``. Parsed components compile to numpy
closures, so a field evaluates whole batches of points at once.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatch, ExpressionSyntaxError, UnknownIdentifier

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": np.sqrt,
}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.source = source
        self.dim = dim
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def error(self, message, offset=None, cls=ExpressionSyntaxError):
        return cls(message, self.source, self.tok.offset if offset is None else offset)

    def expect(self, text):
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def components(self):
        comps = [self.expr()]
        while self.tok.text == ";":
            self.advance()
            if self.tok.kind == "end":
                break
            comps.append(self.expr())
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return comps

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.advance()
            rhs = self.term_after(op)
            node = ("add" if op.text == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.tok.text in ("*", "/"):
            op = self.advance()
            rhs = self.factor_after(op)
            node = ("mul" if op.text == "*" else "div", node, rhs)
        return node

    def term_after(self, op):
        self._operand_after(op)
        return self.term()

    def factor_after(self, op):
        self._operand_after(op)
        return self.factor()

    def _operand_after(self, op):
        # a dangling operator is reported at the operator itself
        if self.tok.kind == "end" or self.tok.text in (";", ")", ","):
            raise self.error(f"missing operand after {op.text!r}", op.offset)

    def factor(self):
        base = self.base()
        if self.tok.text == "^":
            op = self.advance()
            return ("pow", base, self.factor_after(op))
        return base

    def base(self):
        t = self.tok
        if t.kind == "number":
            self.advance()
            return ("const", float(t.text))
        if t.text == "-":
            self.advance()
            self._operand_after(t)
            return ("neg", self.base())
        if t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if t.kind == "name":
            self.advance()
            var = re.fullmatch(r"x(\d+)", t.text)
            if var:
                idx = int(var.group(1))
                if not 1 <= idx <= self.dim:
                    raise self.error(f"variable {t.text!r} outside x1..x{self.dim}", t.offset,
                                     UnknownIdentifier)
                return ("var", idx - 1)
            if t.text not in FUNCTIONS:
                raise self.error(f"unknown identifier {t.text!r}", t.offset, UnknownIdentifier)
            if self.tok.text != "(":
                raise self.error(f"function {t.text!r} needs '('")
            self.advance()
            args = [self.expr()]
            while self.tok.text == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            if len(args) != 1:
                raise self.error(f"{t.text} takes 1 argument, got {len(args)}", t.offset, ArityMismatch)
            return ("call", t.text, args[0])
        if t.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {t.text!r}")


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "pow": np.power,
}


def compile_node(node):
    """Turn an AST node into a function of a batch ``X`` with shape (..., n)."""
    kind = node[0]
    if kind == "const":
        value = node[1]
        return lambda X: value
    if kind == "var":
        i = node[1]
        return lambda X: X[..., i]
    if kind == "neg":
        inner = compile_node(node[1])
        return lambda X: -inner(X)
    if kind == "call":
        fn = FUNCTIONS[node[1]]
        arg = compile_node(node[2])
        return lambda X: fn(arg(X))
    op = _BINARY[kind]
    lhs, rhs = compile_node(node[1]), compile_node(node[2])
    return lambda X: op(lhs(X), rhs(X))


def parse_components(source: str, dim: int):
    """Parse ``source`` into ``dim`` compiled component functions."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    parser = _Parser(source, dim)
    comps = parser.components()
    if len(comps) != dim:
        raise ArityMismatch(f"expected {dim} components, found {len(comps)}", source, len(source))
    return [compile_node(c) for c in comps], comps


def make_evaluator(source: str, dim: int):
    funcs, _ = parse_components(source, dim)

    def evaluate(x):
        X = np.asarray(x, dtype=float)
        batch = X.shape[:-1]
        with np.errstate(all="ignore"):
            cols = [np.broadcast_to(np.asarray(f(X), dtype=float), batch) for f in funcs]
        return np.stack(cols, axis=-1)

    return evaluate
