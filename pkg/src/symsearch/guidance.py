"""Policy/value guidance: network evaluation, loss, replay buffer and training."""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from .network import ModelConfig, PolicyValueNet, backward, forward

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class PolicyValueOutput:
    p: np.ndarray
    v: float


@dataclass(frozen=True)
class ReplayEntry:
    state: tuple  # token ids, without the begin token
    pi: np.ndarray
    z: float
    mask: np.ndarray  # legal tokens at this state


def parent_sibling_ids(state, arities, pad_id):
    """Parent/sibling token ids of the next slot; ``pad_id`` marks an empty position."""
    if not state:
        return pad_id, pad_id
    if arities[state[-1]] > 0:
        return state[-1], pad_id
    counter = 0
    for i in range(len(state) - 1, -1, -1):
        counter += arities[state[i]] - 1
        if counter == 0:
            return state[i], state[i + 1]
    raise ValueError("state is a complete expression")


class Encoder:
    """Turns token-id states into padded network inputs for one vocabulary."""

    def __init__(self, arities, pad_id, bos_id):
        self.arities = np.asarray(arities)
        self.pad_id = pad_id
        self.bos_id = bos_id

    @classmethod
    def for_vocab(cls, vocab):
        return cls(vocab.arities, vocab.pad_id, vocab.bos_id)

    def batch(self, states):
        B = len(states)
        T = max(len(s) for s in states) + 1
        ids = np.full((B, T), self.pad_id, dtype=np.int64)
        ids[:, 0] = self.bos_id
        lengths = np.empty(B, dtype=np.int64)
        par = np.empty(B, dtype=np.int64)
        sib = np.empty(B, dtype=np.int64)
        for i, s in enumerate(states):
            ids[i, 1:len(s) + 1] = s
            lengths[i] = len(s) + 1
            par[i], sib[i] = parent_sibling_ids(s, self.arities, self.pad_id)
        return ids, lengths, par, sib


def evaluate_state(net: PolicyValueNet, encoder: Encoder, state, mask) -> PolicyValueOutput:
    """Single-state forward pass: masked policy ``p`` and value ``v``."""
    state = tuple(int(s) for s in state)
    if len(state) > net.cfg.max_seq_len - 1:
        raise ValueError(f"state of length {len(state)} exceeds max_seq_len - 1")
    ids, lengths, par, sib = encoder.batch([state])
    p, _, v, _ = forward(net.params, net.cfg, ids, lengths, par, sib,
                         np.asarray(mask, dtype=bool)[None, :])
    return PolicyValueOutput(p[0], float(v[0]))


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def mean_entropy(outputs) -> float:
    """Mean of -p^T log p (natural log) over a nonempty collection of distributions."""
    outputs = list(outputs)
    if not outputs:
        raise ValueError("mean_entropy needs at least one distribution")
    return float(np.mean([entropy(getattr(o, "p", o)) for o in outputs]))


def loss(output: PolicyValueOutput, pi, z, params, cfg: ModelConfig) -> float:
    """Per-sample objective: (z-v)^2 - pi.log p [+ H(p)] + xi*||theta||^2."""
    p = np.asarray(output.p, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    logp = np.log(np.maximum(p, LOG_FLOOR))
    val = (z - output.v) ** 2 - float(pi @ logp)
    if cfg.entropy_term_enabled:
        val += -float(p @ logp)
    if cfg.xi:
        val += cfg.xi * float(sum(np.sum(w * w) for w in params.values()))
    return float(val)


def batch_loss_and_grads(net: PolicyValueNet, encoder: Encoder, batch):
    """Mean loss over ``batch`` with gradients for every parameter.

    Returns ``(loss, grads, mean_entropy)``.
    """
    cfg = net.cfg
    states = [e.state for e in batch]
    ids, lengths, par, sib = encoder.batch(states)
    mask = np.stack([np.asarray(e.mask, dtype=bool) for e in batch])
    pi = np.stack([np.asarray(e.pi, dtype=np.float64) for e in batch])
    z = np.array([e.z for e in batch], dtype=np.float64)
    p, logp, v, cache = forward(net.params, cfg, ids, lengths, par, sib, mask)
    B = len(batch)
    H = -(p * logp).sum(1)
    per = (z - v) ** 2 - (pi * logp).sum(1)
    dlogits = p - pi
    if cfg.entropy_term_enabled:
        per = per + H
        dlogits = dlogits - p * (logp + H[:, None])
    dlogits = np.where(mask, dlogits, 0.0) / B
    dav = -2.0 * (z - v) * v * (1.0 - v) / B
    grads = backward(net.params, cfg, cache, dlogits, dav)
    total = float(per.mean())
    if cfg.xi:
        total += cfg.xi * net.l2()
        for k, w in net.params.items():
            grads[k] += 2.0 * cfg.xi * w
    return total, grads, float(H.mean())


def train_step(net: PolicyValueNet, encoder: Encoder, batch):
    """One gradient-descent update on the mean batch loss (in place).

    Returns stats ``{mean_loss, mean_entropy, skipped}``.
    """
    if not batch:
        raise ValueError("train_step needs a nonempty batch")
    total, grads, ent = batch_loss_and_grads(net, encoder, batch)
    if not np.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        return {"mean_loss": total, "mean_entropy": ent, "skipped": True}
    lr = net.cfg.learning_rate
    if net.cfg.optimizer == "sgd":
        for k, g in grads.items():
            net.params[k] = net.params[k] - lr * g
    else:
        _adam_update(net, grads, lr)
    net.step_count += 1
    return {"mean_loss": total, "mean_entropy": ent, "skipped": False}


def _adam_update(net, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    if net._adam is None:
        net._adam = ({k: np.zeros_like(v) for k, v in net.params.items()},
                     {k: np.zeros_like(v) for k, v in net.params.items()})
    m, s = net._adam
    t = net.step_count + 1
    for k, g in grads.items():
        m[k] = b1 * m[k] + (1 - b1) * g
        s[k] = b2 * s[k] + (1 - b2) * g * g
        mhat = m[k] / (1 - b1 ** t)
        shat = s[k] / (1 - b2 ** t)
        net.params[k] = net.params[k] - lr * mhat / (np.sqrt(shat) + eps)


class ReplayBuffer:
    """Bounded FIFO of replay entries; safe for concurrent pushes."""

    def __init__(self, capacity=1000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._q)

    def push(self, entries):
        with self._lock:
            self._q.extend(entries)

    def entries(self):
        with self._lock:
            return list(self._q)

    def sample(self, batch_size, rng):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        with self._lock:
            items = list(self._q)
        if not items:
            return []
        replace = len(items) < batch_size
        idx = rng.choice(len(items), size=batch_size, replace=replace)
        return [items[i] for i in idx]


def buffer_push(buffer: ReplayBuffer, entries):
    buffer.push(entries)


def sample_batch(buffer: ReplayBuffer, batch_size, rng):
    return buffer.sample(batch_size, rng)
