"""Canonical forms and equivalence checking for recovered expressions.

Canonical nodes are nested tuples:

    ("num", value) | ("var", j) | ("add", terms) | ("mul", factors)
    | ("pow", base, exponent) | ("fn", name, arg)

The rewrite set is deliberately small (folding, flattening, sorting,
subtraction/division elimination, identity removal); anything it cannot
prove falls through to a numeric probe.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from ..expr import CONSTANT, VARIABLE, ExprTree, evaluate

PROBE_POINTS = 64
MIN_VALID = 32
PROBE_RTOL = 1e-9
CONST_RTOL = 1e-6

_FN = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt,
       "log": math.log, "abs": abs}


def _fold(fn, *args):
    try:
        v = fn(*args)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    if isinstance(v, complex) or not math.isfinite(v):
        return None
    return ("num", float(v))


def _order_key(node):
    kind = node[0]
    if kind == "num":
        return (0, node[1])
    if kind == "var":
        return (1, node[1])
    if kind == "add":
        return (2, tuple(_order_key(t) for t in node[1]))
    if kind == "mul":
        return (3, tuple(_order_key(t) for t in node[1]))
    if kind == "pow":
        return (4, _order_key(node[1]), _order_key(node[2]))
    return (5, node[1], _order_key(node[2]))


def _add(terms):
    flat = []
    for t in terms:
        flat.extend(t[1] if t[0] == "add" else [t])
    total = sum(t[1] for t in flat if t[0] == "num")
    rest = [t for t in flat if t[0] != "num"]
    if total != 0.0 or not rest:
        rest.append(("num", float(total)))
    if len(rest) == 1:
        return rest[0]
    return ("add", tuple(sorted(rest, key=_order_key)))


def _mul(factors):
    flat = []
    for f in factors:
        flat.extend(f[1] if f[0] == "mul" else [f])
    prod = 1.0
    for f in flat:
        if f[0] == "num":
            prod *= f[1]
    if prod == 0.0:
        return ("num", 0.0)
    rest = [f for f in flat if f[0] != "num"]
    if prod != 1.0 or not rest:
        rest.append(("num", float(prod)))
    if len(rest) == 1:
        return rest[0]
    return ("mul", tuple(sorted(rest, key=_order_key)))


def _pow(base, exp):
    if exp[0] == "num":
        if exp[1] == 1.0:
            return base
        if exp[1] == 0.0:
            return ("num", 1.0)
        if base[0] == "num":
            folded = _fold(lambda a, b: a ** b, base[1], exp[1])
            if folded is not None:
                return folded
    return ("pow", base, exp)


def _fn(name, arg):
    if arg[0] == "num":
        folded = _fold(_FN[name], arg[1])
        if folded is not None:
            return folded
    return ("fn", name, arg)


def _neg(a):
    return _mul([("num", -1.0), a])


def _from_tree(tree: ExprTree, constants):
    it = iter(np.asarray(constants, dtype=np.float64).reshape(-1))

    def rec(node):
        t = node.token
        if t.kind == VARIABLE:
            return ("var", t.var_index + 1)
        if t.kind == CONSTANT:
            return ("num", float(next(it)))
        a = [rec(c) for c in node.children]
        s = t.symbol
        if s == "add":
            return _add(a)
        if s == "sub":
            return _add([a[0], _neg(a[1])])
        if s == "mul":
            return _mul(a)
        if s == "div":
            return _mul([a[0], _pow(a[1], ("num", -1.0))])
        if s == "pow":
            return _pow(a[0], a[1])
        if s == "neg":
            return _neg(a[0])
        if s == "inv":
            return _pow(a[0], ("num", -1.0))
        if s in ("pow2", "pow3", "pow4"):
            return _pow(a[0], ("num", float(s[-1])))
        if s == "expneg":
            return _fn("exp", _neg(a[0]))
        return _fn(s, a[0])

    return rec(tree.root)


def _rebuild(node):
    kind = node[0]
    if kind == "add":
        return _add([_rebuild(t) for t in node[1]])
    if kind == "mul":
        return _mul([_rebuild(t) for t in node[1]])
    if kind == "pow":
        return _pow(_rebuild(node[1]), _rebuild(node[2]))
    if kind == "fn":
        return _fn(node[1], _rebuild(node[2]))
    return node


def canonicalize(expr, constants=None):
    """Canonical form of ``(tree, constants)``, a tree, or an existing canonical node."""
    if isinstance(expr, tuple) and len(expr) == 2 and isinstance(expr[0], ExprTree):
        expr, constants = expr
    if isinstance(expr, ExprTree):
        return _from_tree(expr, () if constants is None else constants)
    return _rebuild(expr)


def canonical_match(a, b, rtol=CONST_RTOL) -> bool:
    """Structural equality with numeric leaves compared to ``rtol``."""
    if a[0] != b[0]:
        return False
    kind = a[0]
    if kind == "num":
        return abs(a[1] - b[1]) <= rtol * max(abs(a[1]), abs(b[1])) + 1e-12
    if kind == "var":
        return a[1] == b[1]
    if kind in ("add", "mul"):
        return len(a[1]) == len(b[1]) and all(canonical_match(x, y, rtol) for x, y in zip(a[1], b[1]))
    if kind == "pow":
        return canonical_match(a[1], b[1], rtol) and canonical_match(a[2], b[2], rtol)
    return a[1] == b[1] and canonical_match(a[2], b[2], rtol)


def _as_pair(e):
    if isinstance(e, ExprTree):
        return e, ()
    return e


def _pointwise(tree, consts, X):
    out = np.full(X.shape[0], np.nan)
    valid = np.zeros(X.shape[0], dtype=bool)
    for i in range(X.shape[0]):
        v, ok = evaluate(tree, X[i:i + 1], consts)
        if ok:
            out[i], valid[i] = v[0], True
    return out, valid


def symbolically_equivalent(e1, e2, rng=None, box=(-1.0, 1.0), n_variables=None) -> bool:
    """Equivalence of two bound expressions ``(tree, constants)``.

    Canonical forms are compared first; otherwise both are probed at
    random points in ``box`` and must agree to 1e-9 relative on at least
    32 mutually valid points.
    """
    t1, c1 = _as_pair(e1)
    t2, c2 = _as_pair(e2)
    if canonical_match(canonicalize(t1, c1), canonicalize(t2, c2)):
        return True
    rng = np.random.default_rng(0) if rng is None else rng
    m = max(t1.max_variable(), t2.max_variable(), n_variables or 1)
    X = rng.uniform(box[0], box[1], size=(PROBE_POINTS, m))
    y1, ok1 = _pointwise(t1, c1, X)
    y2, ok2 = _pointwise(t2, c2, X)
    both = ok1 & ok2
    if both.sum() < MIN_VALID:
        warnings.warn(f"equivalence probe inconclusive: only {int(both.sum())} valid points",
                      RuntimeWarning, stacklevel=2)
        return False
    diff = np.abs(y1[both] - y2[both])
    return bool(np.all(diff <= PROBE_RTOL * (1.0 + np.abs(y1[both]))))
