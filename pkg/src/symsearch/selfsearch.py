"""The self-search loop: searched moves, episode rewards, replay and training."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import ConstraintConfig, apply_mask, legal_mask
from .expr import Traversal, Vocabulary, build_tree, push_token, to_infix
from .guidance import Encoder, ReplayBuffer, ReplayEntry, train_step
from .mcts import SearchConfig, SearchTree, run_simulations, search_policy
from .network import ModelConfig, PolicyValueNet
from .objective import ConstOptOptions

# named random substreams derived from the run seed
STREAMS = {"dataset": 0, "episode": 1, "restarts": 2, "model": 3, "noise": 4, "probe": 5,
           "train": 6}


def substream(seed: int, name: str, *extra) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAMS[name], *[int(e) for e in extra]])


@dataclass(frozen=True)
class RunConfig:
    reward_threshold: float = 0.9999
    max_episodes: int = 200
    max_wall_seconds: float = math.inf
    n_evaluate: int = 50
    tau_early: float = 1.0
    tau_late: float = 1.0
    switch_move: int = 4
    seed: int = 0
    c_puct: float = 1.0
    policy_mode: str = "power"
    lam: float = 0.1
    batch_size: int = 64
    buffer_capacity: int = 1000
    episodes_per_generation: int = 1
    # "episode": fresh search tree per episode; "run": one tree for the whole run
    tree_scope: str = "run"
    # with tree_scope "run": start a fresh tree after this many episodes
    # without a new running best (0 disables)
    restart_patience: int = 0
    prior_mix: float = 0.0
    # stop simulations as soon as any terminal clears the threshold
    stop_on_simulation_hit: bool = True
    const_opts: ConstOptOptions = field(default_factory=ConstOptOptions)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    record_trace: bool = False

    def __post_init__(self):
        if not 0 < self.reward_threshold <= 1:
            raise ValueError("reward_threshold must lie in (0, 1]")
        if self.n_evaluate < 1:
            raise ValueError("n_evaluate must be >= 1")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if self.tree_scope not in ("episode", "run"):
            raise ValueError(f"unknown tree_scope {self.tree_scope!r}")

    def search_config(self) -> SearchConfig:
        stop = self.reward_threshold if self.stop_on_simulation_hit else math.inf
        return SearchConfig(c_puct=self.c_puct, n_evaluate=self.n_evaluate, lam=self.lam,
                            const_opts=self.const_opts, constraints=self.constraints,
                            stop_reward=stop, seed=self.seed, record_trace=self.record_trace,
                            prior_mix=self.prior_mix)


@dataclass
class EpisodeRecord:
    traversal: Traversal
    constants: np.ndarray
    z: float
    pairs: list  # (state ids, pi, mask) per move
    wall_seconds: float

    def replay_entries(self):
        return [ReplayEntry(s, pi, self.z, mask) for s, pi, mask in self.pairs]


@dataclass
class SearchResult:
    best_traversal: Traversal | None
    best_constants: np.ndarray | None
    best_reward: float
    best_infix: str | None
    episodes: int
    trace: list  # (episode_index, reward, running_best, wall_seconds)
    stop_reason: str
    solved: bool
    simulations: int = 0
    mean_entropy: float | None = None
    train_stats: list = field(default_factory=list)
    tree: SearchTree | None = field(default=None, repr=False)

    @property
    def best_tree(self):
        return None if self.best_traversal is None else build_tree(self.best_traversal)


def _argmax_lowest(pi):
    return int(np.flatnonzero(pi == pi.max())[0])


def run_episode(tree: SearchTree, dataset, net, cfg: RunConfig, rng) -> EpisodeRecord:
    """Build one expression move by move from the empty traversal.

    Each move runs the simulations, turns visit counts into a policy,
    masks it and picks a token (sampled during the first
    ``cfg.switch_move`` moves when ``tau_early > 0``, argmax afterwards).
    Once the tree holds a terminal above the threshold below the current
    prefix, the remaining moves follow it.
    """
    t0 = time.perf_counter()
    scfg = tree.cfg
    vocab = tree.vocab
    trav = tree.root.traversal
    pairs = []
    path = []
    move = 0
    while not trav.complete:
        node = tree.node(trav)
        hit = tree.best_reward > cfg.reward_threshold and tree.best_key is not None
        forced = None
        if hit and tree.best_key[:len(trav)] == trav.key():
            forced = tree.best_key[len(trav)]
            counts = tree.counts(node) if node.expanded else None
            if counts is None or counts.sum() < 1:
                counts = run_simulations(tree, trav, net, dataset, 1, scfg)
        else:
            counts = run_simulations(tree, trav, net, dataset, cfg.n_evaluate, scfg)
            if tree.best_reward > cfg.reward_threshold and tree.best_key[:len(trav)] == trav.key():
                forced = tree.best_key[len(trav)]
        early = move < cfg.switch_move
        tau = cfg.tau_early if early else cfg.tau_late
        pi = search_policy(counts, tau if tau > 0 else 1.0, cfg.policy_mode)
        mask = legal_mask(trav, vocab, scfg.constraints)
        pi = apply_mask(pi, mask)
        if forced is not None:
            a = int(forced)
        elif early and cfg.tau_early > 0:
            a = int(rng.choice(len(pi), p=pi))
        else:
            a = _argmax_lowest(pi)
        pairs.append((trav.key(), pi, mask))
        path.append((node, node.child_index(a)))
        tree.child(node, a)
        trav = push_token(trav, vocab[a])
        move += 1
    leaf = tree.node(trav)
    z = tree.terminal_value(leaf, dataset)
    tree.backpropagate(path, leaf, z)
    return EpisodeRecord(trav, leaf.constants, z, pairs, time.perf_counter() - t0)


def run_search(dataset, run_cfg: RunConfig = RunConfig(), model_cfg: ModelConfig | None = None,
               vocab: Vocabulary | None = None, net: PolicyValueNet | None = None,
               keep_tree=False) -> SearchResult:
    """Alternate episodes and training until the reward threshold or a budget is hit."""
    t0 = time.perf_counter()
    vocab = vocab or Vocabulary.default(dataset.X.shape[1])
    max_len = run_cfg.constraints.max_length
    if model_cfg is None:
        model_cfg = ModelConfig(vocab_size=len(vocab), max_seq_len=max_len + 1)
    if model_cfg.vocab_size != len(vocab):
        model_cfg = replace(model_cfg, vocab_size=len(vocab))
    if model_cfg.max_seq_len < max_len + 1:
        raise ValueError("model max_seq_len must be >= constraints.max_length + 1")
    if net is None:
        net = PolicyValueNet(model_cfg, rng=substream(run_cfg.seed, "model"))
    encoder = Encoder.for_vocab(vocab)
    scfg = run_cfg.search_config()
    cache = {}
    tree = SearchTree(vocab, scfg, cache)
    entropies = []
    n_sims = 0
    buffer = ReplayBuffer(run_cfg.buffer_capacity)
    train_rng = substream(run_cfg.seed, "train")

    trace = []
    stats = []
    best = (0.0, None, None)
    last_gain = 0
    episode = 0
    reason = "max_episodes"
    while episode < run_cfg.max_episodes:
        if time.perf_counter() - t0 > run_cfg.max_wall_seconds:
            reason = "max_wall_seconds"
            break
        snapshot = net.snapshot()
        records = []
        for _ in range(run_cfg.episodes_per_generation):
            stalled = (run_cfg.restart_patience > 0
                       and episode - last_gain >= run_cfg.restart_patience)
            if episode > 0 and (run_cfg.tree_scope == "episode" or stalled):
                last_gain = episode
                entropies.extend(tree.entropies)
                n_sims += tree.n_simulations
                tree = SearchTree(vocab, scfg, cache)
            rec = run_episode(tree, dataset, snapshot, run_cfg,
                              substream(run_cfg.seed, "episode", episode))
            records.append(rec)
            prev = best[0]
            if rec.z > best[0]:
                best = (rec.z, rec.traversal, rec.constants)
            if tree.best_reward > best[0]:
                best = (tree.best_reward, build_tree_key(tree, tree.best_key), tree.best_constants)
            if best[0] > prev:
                last_gain = episode
            trace.append((episode, rec.z, best[0], time.perf_counter() - t0))
            episode += 1
            if best[0] > run_cfg.reward_threshold or episode >= run_cfg.max_episodes:
                break
        if best[0] > run_cfg.reward_threshold:
            reason = "threshold"
            break
        for rec in records:
            buffer.push(rec.replay_entries())
            batch = buffer.sample(run_cfg.batch_size, train_rng)
            if batch:
                stats.append(train_step(net, encoder, batch))

    entropies.extend(tree.entropies)
    n_sims += tree.n_simulations
    best_reward, best_trav, best_c = best
    infix = None
    if best_trav is not None:
        infix = to_infix(build_tree(best_trav), best_c)
    ent = float(np.mean(entropies)) if entropies else None
    return SearchResult(best_trav, best_c, best_reward, infix, episode, trace, reason,
                        best_reward > run_cfg.reward_threshold, n_sims, ent, stats,
                        tree if keep_tree else None)


def build_tree_key(tree: SearchTree, key) -> Traversal:
    return tree.nodes[key].traversal
