"""Token vocabulary, preorder traversals, expression trees and evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _accel

BINARY, UNARY, VARIABLE, CONSTANT = "binary", "unary", "variable", "constant"
ARITY = {BINARY: 2, UNARY: 1, VARIABLE: 0, CONSTANT: 0}

# symbol -> (kind, opcode, infix rendering)
OPERATORS = {
    "add": (BINARY, _accel.ADD, "+"),
    "sub": (BINARY, _accel.SUB, "-"),
    "mul": (BINARY, _accel.MUL, "*"),
    "div": (BINARY, _accel.DIV, "/"),
    "pow": (BINARY, _accel.POW, "^"),
    "sin": (UNARY, _accel.SIN, "sin"),
    "cos": (UNARY, _accel.COS, "cos"),
    "exp": (UNARY, _accel.EXP, "exp"),
    "sqrt": (UNARY, _accel.SQRT, "sqrt"),
    "log": (UNARY, _accel.LOG, "log"),
    "neg": (UNARY, _accel.NEG, "-"),
    "inv": (UNARY, _accel.INV, "1 /"),
    "pow2": (UNARY, _accel.POW2, "^ 2"),
    "pow3": (UNARY, _accel.POW3, "^ 3"),
    "pow4": (UNARY, _accel.POW4, "^ 4"),
    "expneg": (UNARY, _accel.EXPNEG, "exp"),
    "abs": (UNARY, _accel.ABS, "abs"),
}
BASE_BINARY = ("add", "sub", "mul", "div", "pow")
BASE_UNARY = ("sin", "cos", "exp", "sqrt", "log")
EXTENSION_UNARY = ("neg", "inv", "pow2", "pow3", "pow4", "expneg", "abs")
CONST_SYMBOL = "c"


class StructureError(ValueError):
    """Raised for malformed or incomplete expressions."""


@dataclass(frozen=True)
class Token:
    id: int
    kind: str
    symbol: str

    @property
    def arity(self) -> int:
        return ARITY[self.kind]

    @property
    def var_index(self) -> int:
        """Zero-based column index for variable tokens."""
        if self.kind != VARIABLE:
            raise ValueError(f"{self.symbol} is not a variable")
        return int(self.symbol[1:]) - 1

    def __repr__(self):
        return self.symbol


def arity(token: Token) -> int:
    return token.arity


def variable_symbol(j: int) -> str:
    """Symbol for the j-th variable, 1-based (``x1``, ``x2``, ...)."""
    return f"x{j}"


class Vocabulary:
    """Ordered token set; ids are positions in ``tokens``.

    Two extra ids follow the real tokens: ``pad_id`` marks an empty
    parent/sibling slot and ``bos_id`` starts every network input.
    """

    def __init__(self, symbols: Sequence[str]):
        tokens = []
        seen = set()
        for i, sym in enumerate(symbols):
            if sym in seen:
                raise ValueError(f"duplicate symbol {sym!r}")
            seen.add(sym)
            if sym in OPERATORS:
                kind = OPERATORS[sym][0]
            elif sym == CONST_SYMBOL:
                kind = CONSTANT
            elif sym.startswith("x") and sym[1:].isdigit() and int(sym[1:]) >= 1:
                kind = VARIABLE
            else:
                raise ValueError(f"unknown symbol {sym!r}")
            tokens.append(Token(i, kind, sym))
        self.tokens = tuple(tokens)
        self._by_symbol = {t.symbol: t for t in self.tokens}
        self.n_variables = sum(t.kind == VARIABLE for t in self.tokens)
        self.arities = np.array([t.arity for t in self.tokens], dtype=np.int64)

    @classmethod
    def default(cls, n_variables=1, const=True, pow=True):
        """The standard library: five binary, five unary, variables and ``c``."""
        syms = [s for s in BASE_BINARY if pow or s != "pow"]
        syms += list(BASE_UNARY)
        syms += [variable_symbol(j) for j in range(1, n_variables + 1)]
        if const:
            syms.append(CONST_SYMBOL)
        return cls(syms)

    @classmethod
    def from_library(cls, n_variables=1, extensions: Iterable[str] = ()):
        """Base library ``[+, -, *, /, sin, cos, log, exp, sqrt, x1]`` plus extensions.

        Extensions are symbols to add (``x2``, ``const``, ``pow``, ``pow3``,
        ...) or ``-sym`` to drop a base symbol.  ``1`` and ``-1`` fold into
        the constant placeholder.
        """
        ops = ["add", "sub", "mul", "div"]
        unary = list(BASE_UNARY)
        n_vars = n_variables
        const = False
        removed = set()
        for ext in extensions:
            if ext.startswith("-") and ext[1:] in OPERATORS:
                removed.add(ext[1:])
            elif ext in ("const", CONST_SYMBOL, "1", "-1"):
                const = True
            elif ext.startswith("x") and ext[1:].isdigit():
                n_vars = max(n_vars, int(ext[1:]))
            elif ext == "pow":
                ops.append("pow")
            elif ext in EXTENSION_UNARY or ext in BASE_UNARY:
                if ext not in unary:
                    unary.append(ext)
            else:
                raise ValueError(f"unknown library extension {ext!r}")
        syms = [s for s in ops + unary if s not in removed]
        syms += [variable_symbol(j) for j in range(1, n_vars + 1)]
        if const:
            syms.append(CONST_SYMBOL)
        return cls(syms)

    @classmethod
    def universal(cls, n_variables=1):
        """Every known symbol; used for parsing reference expressions."""
        syms = list(BASE_BINARY) + list(BASE_UNARY) + list(EXTENSION_UNARY)
        syms += [variable_symbol(j) for j in range(1, n_variables + 1)]
        syms.append(CONST_SYMBOL)
        return cls(syms)

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, key) -> Token:
        if isinstance(key, str):
            return self._by_symbol[key]
        return self.tokens[key]

    def __contains__(self, symbol):
        return symbol in self._by_symbol

    def get(self, symbol):
        return self._by_symbol.get(symbol)

    @property
    def symbols(self):
        return [t.symbol for t in self.tokens]

    @property
    def pad_id(self) -> int:
        return len(self.tokens)

    @property
    def bos_id(self) -> int:
        return len(self.tokens) + 1

    @property
    def const_token(self):
        return self._by_symbol.get(CONST_SYMBOL)

    def encode(self, tokens: Iterable[Token]) -> np.ndarray:
        return np.array([t.id for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> tuple:
        return tuple(self.tokens[int(i)] for i in ids)

    def __repr__(self):
        return f"Vocabulary({self.symbols})"


@dataclass(frozen=True)
class Traversal:
    """A (possibly partial) preorder token sequence.

    ``counter`` is the number of still-open child slots; it is 1 for the
    empty traversal and 0 exactly when the sequence is one complete tree.
    """

    tokens: tuple = ()
    counter: int = 1
    max_length: int = 30

    @classmethod
    def from_tokens(cls, tokens: Iterable[Token], max_length=30):
        trav = cls(max_length=max_length)
        for t in tokens:
            trav = push_token(trav, t)
        return trav

    def __len__(self):
        return len(self.tokens)

    @property
    def complete(self) -> bool:
        return is_complete(self)

    def ids(self) -> np.ndarray:
        return np.array([t.id for t in self.tokens], dtype=np.int64)

    def key(self) -> tuple:
        return tuple(t.id for t in self.tokens)


def push_token(traversal: Traversal, token: Token) -> Traversal:
    if traversal.counter == 0 and len(traversal.tokens) > 0:
        raise StructureError("cannot push onto a complete traversal")
    if len(traversal.tokens) >= traversal.max_length:
        raise StructureError(f"traversal already at max_length={traversal.max_length}")
    return Traversal(traversal.tokens + (token,), traversal.counter + token.arity - 1,
                     traversal.max_length)


def is_complete(traversal: Traversal) -> bool:
    return traversal.counter == 0 and len(traversal.tokens) >= 1


@dataclass(frozen=True)
class Node:
    token: Token
    children: tuple = ()


@dataclass(frozen=True)
class ExprTree:
    """A structurally valid expression tree.

    ``tokens`` is the preorder serialization; constant slots are numbered
    in preorder.
    """

    root: Node
    tokens: tuple
    n_constants: int
    _program: tuple = field(default=None, repr=False, compare=False)

    def preorder(self) -> tuple:
        return self.tokens

    def program(self):
        """Return ``(ops, args, const_positions)`` for the evaluation kernels."""
        if self._program is None:
            ops = np.empty(len(self.tokens), dtype=np.int64)
            args = np.zeros(len(self.tokens), dtype=np.float64)
            slots = []
            for k, t in enumerate(self.tokens):
                if t.kind == VARIABLE:
                    ops[k] = _accel.VAR
                    args[k] = t.var_index
                elif t.kind == CONSTANT:
                    ops[k] = _accel.CONST
                    slots.append(k)
                else:
                    ops[k] = OPERATORS[t.symbol][1]
            object.__setattr__(self, "_program", (ops, args, np.array(slots, dtype=np.int64)))
        return self._program

    def variables(self) -> set:
        return {t.var_index for t in self.tokens if t.kind == VARIABLE}

    def max_variable(self) -> int:
        """Largest 1-based variable index used, or 0."""
        vs = self.variables()
        return max(vs) + 1 if vs else 0


def build_tree(traversal) -> ExprTree:
    """Build the unique tree whose preorder serialization is ``traversal``.

    Accepts a Traversal or any sequence of tokens.
    """
    tokens = tuple(traversal.tokens if isinstance(traversal, Traversal) else traversal)
    counter = 1
    for t in tokens:
        if counter == 0:
            raise StructureError("tokens continue past a complete expression")
        counter += t.arity - 1
    if counter != 0 or not tokens:
        raise StructureError(f"incomplete traversal (counter={counter})")

    pos = 0

    def rec():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        kids = tuple(rec() for _ in range(tok.arity))
        return Node(tok, kids)

    root = rec()
    n_const = sum(t.kind == CONSTANT for t in tokens)
    return ExprTree(root, tokens, n_const)


def evaluate(tree: ExprTree, X, constants=()):
    """Evaluate ``tree`` on every row of ``X``.

    Returns ``(y_hat, valid)``; ``valid`` is False when any intermediate
    value was non-finite, in which case ``y_hat`` is all-NaN.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    constants = np.asarray(constants, dtype=np.float64).reshape(-1)
    if constants.shape[0] != tree.n_constants:
        raise ValueError(f"expected {tree.n_constants} constants, got {constants.shape[0]}")
    if tree.max_variable() > X.shape[1]:
        raise ValueError(f"X has {X.shape[1]} columns; tree uses x{tree.max_variable()}")
    ops, args, slots = tree.program()
    if len(slots):
        args = args.copy()
        args[slots] = constants
    y, ok = _accel.eval_prefix(ops, args, np.ascontiguousarray(X))
    return y, bool(ok)


def open_slots(tokens: Sequence[Token]):
    """Stack of ``[token, filled_children, last_child_root]`` for nodes with open slots.

    The last entry is the parent of the next slot to be filled.
    """
    stack = []
    for t in tokens:
        if stack:
            stack[-1][1] += 1
            stack[-1][2] = t
        if t.arity > 0:
            stack.append([t, 0, None])
        while stack and stack[-1][1] == stack[-1][0].arity:
            stack.pop()
    return stack


def pending_ancestors(traversal: Traversal) -> list:
    """Ancestors of the next slot to be filled, nearest first."""
    return [entry[0] for entry in reversed(open_slots(traversal.tokens))]


def parent_sibling(traversal: Traversal):
    """Parent and left sibling of the next token to be generated.

    Empty positions are ``None``.
    """
    tokens = traversal.tokens
    if is_complete(traversal):
        raise StructureError("complete traversal has no pending slot")
    if not tokens:
        return None, None
    if tokens[-1].arity > 0:
        return tokens[-1], None
    counter = 0
    for i in range(len(tokens) - 1, -1, -1):
        counter += tokens[i].arity - 1
        if counter == 0:
            return tokens[i], tokens[i + 1]
    raise StructureError("malformed traversal")


def contains_variable(tree: ExprTree, j: int) -> bool:
    """True iff ``x_j`` (1-based) appears in the tree."""
    return any(t.kind == VARIABLE and t.var_index == j - 1 for t in tree.tokens)


def format_constant(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_infix(tree: ExprTree, constants=()) -> str:
    """Fully parenthesized infix rendering, parseable by :func:`symsearch.parse.parse_infix`."""
    constants = list(np.asarray(constants, dtype=np.float64).reshape(-1))
    if len(constants) != tree.n_constants:
        raise ValueError(f"expected {tree.n_constants} constants, got {len(constants)}")
    it = iter(constants)

    def rec(node):
        t = node.token
        if t.kind == VARIABLE:
            return t.symbol
        if t.kind == CONSTANT:
            return format_constant(next(it))
        args = [rec(c) for c in node.children]
        sym = t.symbol
        if t.kind == BINARY:
            return f"({args[0]} {OPERATORS[sym][2]} {args[1]})"
        if sym == "neg":
            return f"(-({args[0]}))" if args[0].startswith("-") else f"(-{args[0]})"
        if sym == "inv":
            return f"(1 / {args[0]})"
        if sym in ("pow2", "pow3", "pow4"):
            return f"({args[0]} ^ {sym[-1]})"
        if sym == "expneg":
            inner = f"(-({args[0]}))" if args[0].startswith("-") else f"(-{args[0]})"
            return f"exp({inner})"
        return f"{sym}({args[0]})"

    return rec(tree.root)
