"""Network-guided Monte Carlo tree search over preorder traversals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .constraints import ConstraintConfig, legal_mask
from .expr import Traversal, Vocabulary, build_tree, push_token
from .guidance import Encoder, entropy, evaluate_state
from .objective import ConstOptOptions, optimize_constants


@dataclass(frozen=True)
class NodeStats:
    P: float
    N: int
    W: float

    @property
    def Q(self) -> float:
        return self.W / self.N if self.N > 0 else 0.0


@dataclass(frozen=True)
class SearchConfig:
    c_puct: float = 1.0
    n_evaluate: int = 50
    lam: float = 0.1
    const_opts: ConstOptOptions = field(default_factory=ConstOptOptions)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    # simulations stop early once a terminal scores above this
    stop_reward: float = math.inf
    seed: int = 0
    record_trace: bool = False
    # mix uniform mass into stored priors: P = (1 - eps) p + eps / |legal|
    prior_mix: float = 0.0


class TreeNode:
    __slots__ = ("traversal", "expanded", "legal", "P", "N", "W", "children", "visits",
                 "value", "terminal", "reward", "constants")

    def __init__(self, traversal: Traversal):
        self.traversal = traversal
        self.expanded = False
        self.legal = None
        self.P = self.N = self.W = None
        self.children = {}
        self.visits = 0
        self.value = None
        self.terminal = traversal.complete
        self.reward = None
        self.constants = None

    def child_index(self, token_id) -> int:
        i = int(np.searchsorted(self.legal, token_id))
        if i >= len(self.legal) or self.legal[i] != token_id:
            raise KeyError(f"token {token_id} is not a legal child")
        return i

    def stats(self, token_id) -> NodeStats:
        i = self.child_index(token_id)
        return NodeStats(float(self.P[i]), int(self.N[i]), float(self.W[i]))


class SearchTree:
    """Search state for one run: nodes keyed by traversal prefix.

    The tree persists across moves and episodes, so the subtree under each
    chosen token is reused.
    """

    def __init__(self, vocab: Vocabulary, cfg: SearchConfig = SearchConfig(), reward_cache=None):
        self.vocab = vocab
        # terminal key -> (reward, constants); may be shared between trees
        self.reward_cache = {} if reward_cache is None else reward_cache
        self.cfg = cfg
        self.encoder = Encoder.for_vocab(vocab)
        self.nodes = {}
        self.root = self.node(Traversal(max_length=cfg.constraints.max_length))
        self.best_reward = 0.0
        self.best_key = None
        self.best_constants = None
        self.n_simulations = 0
        self.n_expansions = 0
        self.entropies = []  # entropy of every network policy produced
        self.trace = [] if cfg.record_trace else None

    def node(self, traversal: Traversal) -> TreeNode:
        key = traversal.key()
        n = self.nodes.get(key)
        if n is None:
            n = self.nodes[key] = TreeNode(traversal)
        return n

    def child(self, node: TreeNode, token_id) -> TreeNode:
        c = node.children.get(token_id)
        if c is None:
            c = self.node(push_token(node.traversal, self.vocab[token_id]))
            node.children[token_id] = c
        return c

    def expand(self, node: TreeNode, net):
        mask = legal_mask(node.traversal, self.vocab, self.cfg.constraints)
        out = evaluate_state(net, self.encoder, node.traversal.key(), mask)
        node.legal = np.flatnonzero(mask)
        node.P = out.p[node.legal].copy()
        if self.cfg.prior_mix:
            eps = self.cfg.prior_mix
            node.P = (1.0 - eps) * node.P + eps / len(node.legal)
        node.N = np.zeros(len(node.legal))
        node.W = np.zeros(len(node.legal))
        node.value = out.v
        node.expanded = True
        self.n_expansions += 1
        self.entropies.append(entropy(out.p))
        return out

    def terminal_value(self, node: TreeNode, dataset) -> float:
        if node.reward is None:
            key = node.traversal.key()
            hit = self.reward_cache.get(key)
            if hit is None:
                tree = build_tree(node.traversal)
                rng = np.random.default_rng([self.cfg.seed, 0x5EED, *key])
                c, m = optimize_constants(tree, dataset.X, dataset.y, self.cfg.const_opts,
                                          lam=self.cfg.lam, rng=rng)
                hit = self.reward_cache[key] = (m.reward, c)
            node.reward, node.constants = hit
            if node.reward > self.best_reward:
                self.best_reward, self.best_key, self.best_constants = node.reward, key, node.constants
        return node.reward

    def backpropagate(self, path, leaf: TreeNode, value: float):
        """Add ``value`` to every (node, child index) edge on ``path``."""
        leaf.visits += 1
        for n, i in path:
            n.N[i] += 1
            n.W[i] += value
            n.visits += 1
        if self.trace is not None:
            self.trace.append(([(n.traversal.key(), int(n.legal[i])) for n, i in path], value))

    def counts(self, node: TreeNode) -> np.ndarray:
        out = np.zeros(len(self.vocab))
        if node.expanded:
            out[node.legal] = node.N
        return out

    def edges(self):
        """Yield ``(prefix_key, token_id, NodeStats)`` for every expanded edge."""
        for key, n in self.nodes.items():
            if n.expanded:
                for i, a in enumerate(n.legal):
                    yield key, int(a), NodeStats(float(n.P[i]), int(n.N[i]), float(n.W[i]))


def uct(parent_N, child: NodeStats, c_puct: float) -> float:
    return child.Q + c_puct * child.P * math.sqrt(parent_N) / (1 + child.N)


def simulate_once(tree: SearchTree, traversal: Traversal, net, dataset, cfg=None) -> float:
    """One select/expand/evaluate/backpropagate pass starting at ``traversal``."""
    cfg = cfg or tree.cfg
    node = tree.node(traversal)
    path = []
    while True:
        if node.terminal:
            value = tree.terminal_value(node, dataset)
            break
        if not node.expanded:
            value = tree.expand(node, net).v
            break
        i = _accel.uct_select(node.W, node.N, node.P, node.visits, cfg.c_puct)
        path.append((node, i))
        node = tree.child(node, int(node.legal[i]))
    tree.backpropagate(path, node, value)
    tree.n_simulations += 1
    return value


def run_simulations(tree: SearchTree, traversal: Traversal, net, dataset, n_evaluate=None,
                    cfg=None) -> np.ndarray:
    """Run ``n_evaluate`` simulations below ``traversal``; return child visit counts.

    The node is expanded first if needed, so every simulation passes
    through exactly one of its children.  Stops early when a terminal
    scoring above ``cfg.stop_reward`` is found.
    """
    cfg = cfg or tree.cfg
    n_evaluate = cfg.n_evaluate if n_evaluate is None else n_evaluate
    if n_evaluate < 1:
        raise ValueError("n_evaluate must be >= 1")
    node = tree.node(traversal)
    if node.terminal:
        raise ValueError("cannot search below a complete traversal")
    if not node.expanded:
        tree.expand(node, net)
        node.visits += 1
    for _ in range(n_evaluate):
        simulate_once(tree, traversal, net, dataset, cfg)
        if tree.best_reward > cfg.stop_reward:
            break
    return tree.counts(node)


def search_policy(counts, tau: float = 1.0, mode: str = "power") -> np.ndarray:
    """Visit counts to a move distribution.

    ``power``: pi_i proportional to N_i^(1/tau).  ``log_count``:
    pi_i proportional to log(N_i^(1/tau)), with counts of 1 or less
    replaced by N_i + 1 so every visited move keeps positive weight.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if counts.sum() < 1 or np.any(counts < 0):
        raise ValueError("counts must be nonnegative with a positive sum")
    visited = counts > 0
    if mode == "power" and tau == 1.0:
        w = counts
    elif mode == "power":
        # scale by the max first so large 1/tau cannot overflow
        w = np.where(visited, (counts / counts.max()) ** (1.0 / tau), 0.0)
    elif mode == "log_count":
        guarded = np.where(counts <= 1, counts + 1, counts)
        w = np.where(visited, np.log(guarded) / tau, 0.0)
    else:
        raise ValueError(f"unknown policy mode {mode!r}")
    return w / w.sum()
