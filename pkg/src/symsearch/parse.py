"""Infix parser for reference formulas and rendered search results.

Grammar (lowest to highest precedence)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := primary (("^" | "**") unary)?
    primary := NUMBER | "pi" | xN | FUNC "(" expr ")" | "(" expr ")"

A minus sign directly followed by a numeric literal in operand position is
read as a negative literal, so ``(-2 ^ x1)`` means ``(-2) ^ x1``.  Numeric
literals become bound constant slots.
"""
import math
import re

from .expr import CONST_SYMBOL, Vocabulary, build_tree

FUNCTIONS = {"sin": "sin", "cos": "cos", "exp": "exp", "sqrt": "sqrt", "log": "log",
             "ln": "log", "abs": "abs"}

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
                       r"|(\*\*|[-+*/^(),])|([A-Za-z_][A-Za-z_0-9]*))")


class ParseError(ValueError):
    pass


def _lex(text):
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        num, op, name = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif op is not None:
            out.append(("op", "^" if op == "**" else op))
        else:
            out.append(("name", name))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ParseError(f"expected {value or kind}, got {tok[1]!r}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = ("add" if op == "+" else "sub", node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = ("mul" if op == "*" else "div", node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            nxt = self.peek()
            if nxt[0] == "num":
                self.take()
                return self.power(("num", -nxt[1]))
            return ("neg", self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power(self.primary())

    def power(self, base):
        if self.peek() == ("op", "^"):
            self.take()
            return ("pow", base, self.unary())
        return base

    def primary(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ("num", val)
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        if kind == "name":
            self.take()
            if val == "pi":
                return ("num", math.pi)
            if re.fullmatch(r"x[1-9]\d*", val):
                return ("var", int(val[1:]))
            if val in FUNCTIONS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return (FUNCTIONS[val], arg)
            raise ParseError(f"unknown name {val!r}")
        raise ParseError(f"unexpected token {val!r}")


def parse_ast(text):
    """Parse to a nested-tuple AST: ``("add", a, b)``, ``("var", j)``, ``("num", v)``."""
    p = _Parser(_lex(text))
    node = p.expr()
    if p.i != len(p.toks):
        raise ParseError(f"trailing input at token {p.i}: {p.toks[p.i][1]!r}")
    return node


def ast_max_var(node):
    if node[0] == "var":
        return node[1]
    if node[0] == "num":
        return 0
    return max(ast_max_var(c) for c in node[1:])


def ast_to_tree(node, vocab):
    symbols, constants = [], []

    def rec(n):
        if n[0] == "var":
            symbols.append(f"x{n[1]}")
        elif n[0] == "num":
            symbols.append(CONST_SYMBOL)
            constants.append(n[1])
        else:
            symbols.append(n[0])
            for c in n[1:]:
                rec(c)

    rec(node)
    return build_tree([vocab[s] for s in symbols]), constants


def parse_infix(text, n_variables=None):
    """Parse an infix formula into ``(ExprTree, constants)`` over the universal vocabulary."""
    node = parse_ast(text)
    n_vars = max(ast_max_var(node), n_variables or 1)
    return ast_to_tree(node, Vocabulary.universal(n_vars))
