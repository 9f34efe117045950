"""Symbolic regression by network-guided Monte Carlo tree search."""
from .expr import ExprTree, Traversal, Vocabulary, build_tree, evaluate, to_infix
from .parse import parse_infix
from .selfsearch import RunConfig, SearchResult, run_search

__version__ = "0.1.0"

__all__ = [
    "ExprTree", "RunConfig", "SearchResult", "Traversal", "Vocabulary", "build_tree", "evaluate",
    "parse_infix", "run_search", "to_infix",
]
