"""Causal-attention policy/value network in numpy with a hand-written backward pass.

Shapes: B batch, T positions (begin token + state), D width, H heads,
dh = D / H, V vocabulary size.  Sequences are right-padded; only the last
real position of each row feeds the heads, so padding never leaks into
the outputs under the causal mask.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _accel

CHECKPOINT_VERSION = 1
_NEG = -1e30


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    max_seq_len: int = 32
    xi: float = 1e-4
    learning_rate: float = 1e-3
    entropy_term_enabled: bool = True
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.xi < 0:
            raise ValueError("xi must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_params(cfg: ModelConfig, rng) -> dict:
    D, V = cfg.embed_dim, cfg.vocab_size
    n_emb = V + 2  # + pad + begin
    std = 0.02
    p = {
        "tok_emb": rng.normal(0, std, (n_emb, D)),
        "pos_emb": rng.normal(0, std, (cfg.max_seq_len, D)),
        "lnf_g": np.ones(D), "lnf_b": np.zeros(D),
        "Wp": rng.normal(0, std, (3 * D, V)), "bp": np.zeros(V),
        "wv": rng.normal(0, std, 3 * D), "bv": np.zeros(1),
    }
    for l in range(cfg.layers):
        p[f"l{l}.ln1_g"] = np.ones(D)
        p[f"l{l}.ln1_b"] = np.zeros(D)
        p[f"l{l}.Wqkv"] = rng.normal(0, std, (D, 3 * D))
        p[f"l{l}.bqkv"] = np.zeros(3 * D)
        p[f"l{l}.Wo"] = rng.normal(0, std / np.sqrt(2 * cfg.layers), (D, D))
        p[f"l{l}.bo"] = np.zeros(D)
        p[f"l{l}.ln2_g"] = np.ones(D)
        p[f"l{l}.ln2_b"] = np.zeros(D)
        p[f"l{l}.W1"] = rng.normal(0, std, (D, 4 * D))
        p[f"l{l}.b1"] = np.zeros(4 * D)
        p[f"l{l}.W2"] = rng.normal(0, std / np.sqrt(2 * cfg.layers), (4 * D, D))
        p[f"l{l}.b2"] = np.zeros(D)
    return p


def _ln_fwd(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dxhat = dy * g
    dx = inv / n * (n * dxhat - dxhat.sum(-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(red), dy.sum(red)


def masked_softmax(logits, mask):
    z = np.where(mask, logits, _NEG)
    z = z - z.max(-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    s = e.sum(-1, keepdims=True)
    logp = np.where(mask, z - np.log(s), 0.0)
    return e / s, logp


def forward(params, cfg: ModelConfig, ids, lengths, parent_ids, sibling_ids, mask):
    """Batched forward pass.

    ``ids`` is (B, T) with the begin token at column 0; ``lengths`` gives
    the real length of each row.  Returns ``(p, logp, v, cache)``.
    """
    B, T = ids.shape
    D, H = cfg.embed_dim, cfg.heads
    dh = D // H
    if T > cfg.max_seq_len:
        raise ValueError(f"sequence length {T} exceeds max_seq_len={cfg.max_seq_len}")
    x = params["tok_emb"][ids] + params["pos_emb"][:T]
    causal = np.triu(np.full((T, T), _NEG), k=1)
    layer_caches = []
    for l in range(cfg.layers):
        pre = f"l{l}."
        h, ln1 = _ln_fwd(x, params[pre + "ln1_g"], params[pre + "ln1_b"])
        qkv = h @ params[pre + "Wqkv"] + params[pre + "bqkv"]
        q, k, v = np.split(qkv.reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4), 3)
        q, k, v = q[0], k[0], v[0]  # (B, H, T, dh)
        s = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh) + causal
        s = s - s.max(-1, keepdims=True)
        a = np.exp(s)
        a /= a.sum(-1, keepdims=True)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
        x = x + o @ params[pre + "Wo"] + params[pre + "bo"]
        h2, ln2 = _ln_fwd(x, params[pre + "ln2_g"], params[pre + "ln2_b"])
        u = h2 @ params[pre + "W1"] + params[pre + "b1"]
        g, t = _accel.gelu(u)
        x = x + g @ params[pre + "W2"] + params[pre + "b2"]
        layer_caches.append((h, ln1, q, k, v, a, o, h2, ln2, u, g, t))
    hf, lnf = _ln_fwd(x, params["lnf_g"], params["lnf_b"])
    rows = np.arange(B)
    last = hf[rows, lengths - 1]
    emb = params["tok_emb"]
    feat = np.concatenate([last, emb[parent_ids], emb[sibling_ids]], axis=1)
    logits = feat @ params["Wp"] + params["bp"]
    p, logp = masked_softmax(logits, mask)
    av = feat @ params["wv"] + params["bv"][0]
    val = 1.0 / (1.0 + np.exp(-av))
    cache = (ids, lengths, parent_ids, sibling_ids, layer_caches, lnf, feat, T)
    return p, logp, val, cache


def backward(params, cfg: ModelConfig, cache, dlogits, dav) -> dict:
    """Gradients of a scalar loss given d/dlogits (B, V) and d/d(value pre-activation) (B,)."""
    ids, lengths, parent_ids, sibling_ids, layer_caches, lnf, feat, T = cache
    B = ids.shape[0]
    D, H = cfg.embed_dim, cfg.heads
    dh = D // H
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    grads["Wp"] = feat.T @ dlogits
    grads["bp"] = dlogits.sum(0)
    grads["wv"] = feat.T @ dav
    grads["bv"] = np.array([dav.sum()])
    dfeat = dlogits @ params["Wp"].T + dav[:, None] * params["wv"]
    np.add.at(grads["tok_emb"], parent_ids, dfeat[:, D:2 * D])
    np.add.at(grads["tok_emb"], sibling_ids, dfeat[:, 2 * D:])
    dhf = np.zeros((B, T, D))
    dhf[np.arange(B), lengths - 1] = dfeat[:, :D]
    dx, grads["lnf_g"], grads["lnf_b"] = _ln_bwd(dhf, lnf)
    for l in reversed(range(cfg.layers)):
        pre = f"l{l}."
        h, ln1, q, k, v, a, o, h2, ln2, u, g, t = layer_caches[l]
        # MLP block
        grads[pre + "W2"] = g.reshape(-1, 4 * D).T @ dx.reshape(-1, D)
        grads[pre + "b2"] = dx.sum((0, 1))
        du = _accel.gelu_backward(dx @ params[pre + "W2"].T, u, t)
        grads[pre + "W1"] = h2.reshape(-1, D).T @ du.reshape(-1, 4 * D)
        grads[pre + "b1"] = du.sum((0, 1))
        dln2, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = _ln_bwd(du @ params[pre + "W1"].T, ln2)
        dx = dx + dln2
        # attention block
        grads[pre + "Wo"] = o.reshape(-1, D).T @ dx.reshape(-1, D)
        grads[pre + "bo"] = dx.sum((0, 1))
        do = (dx @ params[pre + "Wo"].T).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = a * (da - (da * a).sum(-1, keepdims=True)) / np.sqrt(dh)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, T, 3 * D)
        grads[pre + "Wqkv"] = h.reshape(-1, D).T @ dqkv.reshape(-1, 3 * D)
        grads[pre + "bqkv"] = dqkv.sum((0, 1))
        dln1, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = _ln_bwd(dqkv @ params[pre + "Wqkv"].T, ln1)
        dx = dx + dln1
    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"][:T] += dx.sum(0)
    return grads


class PolicyValueNet:
    """Parameters plus configuration; snapshots are read-only copies."""

    def __init__(self, cfg: ModelConfig, params=None, rng=None):
        self.cfg = cfg
        if params is None:
            rng = np.random.default_rng(0) if rng is None else rng
            params = init_params(cfg, rng)
        self.params = params
        self._adam = None
        self.step_count = 0

    def snapshot(self) -> "PolicyValueNet":
        frozen = {}
        for k, v in self.params.items():
            c = v.copy()
            c.setflags(write=False)
            frozen[k] = c
        return PolicyValueNet(self.cfg, frozen)

    def copy(self) -> "PolicyValueNet":
        return PolicyValueNet(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def l2(self) -> float:
        return float(sum(np.sum(v * v) for v in self.params.values()))

    def save(self, path):
        """Write an ``.npz`` checkpoint with a JSON header under ``__header__``."""
        header = json.dumps({"version": CHECKPOINT_VERSION, "config": asdict(self.cfg),
                             "step_count": self.step_count}, sort_keys=True)
        arrays = {k: np.asarray(v) for k, v in self.params.items()}
        with open(path, "wb") as fh:
            np.savez(fh, __header__=np.array(header), **arrays)

    @classmethod
    def load(cls, path) -> "PolicyValueNet":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["__header__"]))
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {header.get('version')}")
            params = {k: data[k].copy() for k in data.files if k != "__header__"}
        net = cls(ModelConfig(**header["config"]), params)
        net.step_count = header.get("step_count", 0)
        return net
