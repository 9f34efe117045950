"""Legality masks over the vocabulary for a partial traversal."""
from dataclasses import dataclass, field

import numpy as np

from .expr import Traversal, Vocabulary, is_complete, pending_ancestors

TRIG = frozenset({"sin", "cos"})
DEFAULT_INVERSE_PAIRS = (("exp", "log"), ("sqrt", "pow2"))


@dataclass(frozen=True)
class ConstraintConfig:
    max_length: int = 30
    forbid_inverse_chain: bool = True
    forbid_nested_trig: bool = True
    forbid_negative_into_log_sqrt: bool = True
    # "ancestor": no trig anywhere above a trig node; "parent": only the direct parent
    trig_scope: str = "ancestor"
    inverse_pairs: tuple = field(default=DEFAULT_INVERSE_PAIRS)

    def __post_init__(self):
        if self.max_length < 3:
            raise ValueError("max_length must be >= 3")
        if self.trig_scope not in ("ancestor", "parent"):
            raise ValueError(f"trig_scope must be 'ancestor' or 'parent', got {self.trig_scope!r}")

    @classmethod
    def feasibility_only(cls, max_length=30):
        return cls(max_length=max_length, forbid_inverse_chain=False, forbid_nested_trig=False,
                   forbid_negative_into_log_sqrt=False)

    def inverse_of(self, symbol):
        out = set()
        for a, b in self.inverse_pairs:
            if a == symbol:
                out.add(b)
            if b == symbol:
                out.add(a)
        return out


def legal_mask(traversal: Traversal, vocab: Vocabulary, cfg: ConstraintConfig) -> np.ndarray:
    if is_complete(traversal):
        raise ValueError("complete traversal has no legal continuation")
    n = len(traversal)
    if n >= cfg.max_length:
        raise ValueError("traversal is already at max_length")
    room = cfg.max_length - (n + 1)
    mask = (traversal.counter + vocab.arities - 1) <= room

    ancestors = pending_ancestors(traversal)
    parent = ancestors[0].symbol if ancestors else None
    banned = set()
    if parent is not None:
        if cfg.forbid_inverse_chain:
            banned |= cfg.inverse_of(parent)
        if cfg.forbid_nested_trig:
            scope = ancestors if cfg.trig_scope == "ancestor" else ancestors[:1]
            if any(a.symbol in TRIG for a in scope):
                banned |= TRIG
        if cfg.forbid_negative_into_log_sqrt and parent in ("log", "sqrt"):
            banned |= TRIG
    for sym in banned:
        tok = vocab.get(sym)
        if tok is not None:
            mask[tok.id] = False
    return mask


def apply_mask(probs, mask) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise AssertionError("legal mask excludes every token")
    out = np.where(mask, probs, 0.0)
    total = out.sum()
    if total <= 0.0 or not np.isfinite(total):
        return mask / mask.sum()
    return out / total


def violations(tokens, cfg: ConstraintConfig = ConstraintConfig()) -> list:
    """List every constraint broken by a token sequence.

    Independent of :func:`legal_mask`: walks the explicit tree and reports
    ``(kind, position)`` pairs.
    """
    from .expr import build_tree

    tree = build_tree(tokens)
    found = []
    pos = 0

    def walk(node, ancestors):
        nonlocal pos
        here = pos
        pos += 1
        sym = node.token.symbol
        if ancestors:
            par = ancestors[-1]
            if cfg.forbid_inverse_chain and sym in cfg.inverse_of(par):
                found.append(("inverse", here))
            if cfg.forbid_negative_into_log_sqrt and par in ("log", "sqrt") and sym in TRIG:
                found.append(("log_sqrt_trig", here))
            if cfg.forbid_nested_trig and sym in TRIG:
                scope = ancestors if cfg.trig_scope == "ancestor" else ancestors[-1:]
                if any(a in TRIG for a in scope):
                    found.append(("nested_trig", here))
        for child in node.children:
            walk(child, ancestors + [sym])

    walk(tree.root, [])
    if len(tokens) > cfg.max_length:
        found.append(("length", len(tokens)))
    return found
