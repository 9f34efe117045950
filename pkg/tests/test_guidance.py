import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gradient_check, random_entry
from symsearch.expr import Vocabulary
from symsearch.guidance import (Encoder, PolicyValueOutput, ReplayBuffer, ReplayEntry,
                                buffer_push, evaluate_state, loss, mean_entropy, sample_batch,
                                train_step)
from symsearch.network import ModelConfig, PolicyValueNet

V = Vocabulary.default(1)
ENC = Encoder.for_vocab(V)


def small_net(seed=0, **kw):
    cfg = ModelConfig(vocab_size=len(V), embed_dim=16, layers=1, heads=2, max_seq_len=31, **kw)
    return PolicyValueNet(cfg, rng=np.random.default_rng(seed))


def test_one_legal_token_gives_one_hot():
    net = small_net()
    mask = np.zeros(len(V), dtype=bool)
    mask[3] = True
    out = evaluate_state(net, ENC, (V["add"].id,), mask)
    assert out.p[3] == 1.0 and out.p.sum() == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_forward_contract(seed):
    rng = np.random.default_rng(seed)
    net = small_net(seed)
    e = random_entry(V, rng)
    out = evaluate_state(net, ENC, e.state, e.mask)
    assert abs(out.p.sum() - 1.0) <= 1e-9
    assert np.all(out.p[~e.mask] == 0.0)
    assert 0.0 <= out.v <= 1.0
    again = evaluate_state(net, ENC, e.state, e.mask)
    assert np.array_equal(out.p, again.p) and out.v == again.v


def test_oversize_state_rejected():
    net = small_net()
    with pytest.raises(ValueError):
        evaluate_state(net, ENC, (V["sin"].id,) * 31, np.ones(len(V), dtype=bool))


def test_loss_examples():
    cfg = ModelConfig(vocab_size=4, embed_dim=8, heads=2, xi=0.0)
    onehot = np.array([0.0, 1.0, 0.0, 0.0])
    assert loss(PolicyValueOutput(onehot, 0.7), onehot, 0.7, {}, cfg) == 0.0
    uni = np.full(4, 0.25)
    assert loss(PolicyValueOutput(uni, 0.7), onehot, 0.7, {}, cfg) == pytest.approx(2 * math.log(4))
    off = ModelConfig(vocab_size=4, embed_dim=8, heads=2, xi=0.0, entropy_term_enabled=False)
    assert loss(PolicyValueOutput(uni, 0.7), onehot, 0.7, {}, off) == pytest.approx(math.log(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_loss_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(6))
    pi = rng.dirichlet(np.ones(6))
    cfg = ModelConfig(vocab_size=6, embed_dim=8, heads=2)
    params = {"w": rng.normal(size=3)}
    assert loss(PolicyValueOutput(p, rng.uniform()), pi, rng.uniform(), params, cfg) >= 0


@pytest.mark.parametrize("entropy", [True, False])
def test_gradient_matches_finite_differences(entropy):
    assert gradient_check(V, 3, entropy=entropy) <= 1e-4


def test_train_step_overfits_single_entry():
    # one-hot pi and xi=0, so the loss can reach zero
    net = small_net(1, learning_rate=0.05, xi=0.0)
    e = random_entry(V, np.random.default_rng(2))
    pi = np.zeros(len(V))
    pi[np.flatnonzero(e.mask)[0]] = 1.0
    e = ReplayEntry(e.state, pi, 0.8, e.mask)
    first = train_step(net, ENC, [e])["mean_loss"]
    for _ in range(199):
        last = train_step(net, ENC, [e])["mean_loss"]
    assert last <= 0.05 * first


def test_train_step_rejects_empty_batch_and_skips_nonfinite():
    net = small_net()
    with pytest.raises(ValueError):
        train_step(net, ENC, [])
    e = random_entry(V, np.random.default_rng(0))
    bad = ReplayEntry(e.state, e.pi, float("nan"), e.mask)
    before = {k: v.copy() for k, v in net.params.items()}
    stats = train_step(net, ENC, [bad])
    assert stats["skipped"]
    assert all(np.array_equal(before[k], net.params[k]) for k in before)


def test_snapshot_is_frozen():
    net = small_net()
    snap = net.snapshot()
    e = random_entry(V, np.random.default_rng(0))
    p0 = evaluate_state(snap, ENC, e.state, e.mask).p
    train_step(net, ENC, [e] * 4)
    assert np.array_equal(evaluate_state(snap, ENC, e.state, e.mask).p, p0)
    with pytest.raises(ValueError):
        next(iter(snap.params.values()))[...] = 0.0


def test_save_load_roundtrip(tmp_path):
    net = small_net(4)
    e = random_entry(V, np.random.default_rng(1))
    net.save(tmp_path / "ck.npz")
    back = PolicyValueNet.load(tmp_path / "ck.npz")
    a = evaluate_state(net, ENC, e.state, e.mask)
    b = evaluate_state(back, ENC, e.state, e.mask)
    assert np.array_equal(a.p, b.p) and a.v == b.v


def test_buffer_fifo_and_sampling():
    buf = ReplayBuffer(3)
    buffer_push(buf, [1, 2, 3, 4])
    assert buf.entries() == [2, 3, 4]
    small = ReplayBuffer(10)
    buffer_push(small, ["a", "b"])
    got = sample_batch(small, 5, np.random.default_rng(0))
    assert len(got) == 5 and set(got) <= {"a", "b"}
    big = ReplayBuffer(10)
    buffer_push(big, list(range(10)))
    got = sample_batch(big, 10, np.random.default_rng(0))
    assert sorted(got) == list(range(10))
    assert sample_batch(ReplayBuffer(4), 3, np.random.default_rng(0)) == []


def test_mean_entropy_examples():
    assert mean_entropy([np.eye(5)[1], np.eye(5)[2]]) == 0.0
    assert mean_entropy([np.full(12, 1 / 12)] * 3) == pytest.approx(math.log(12))
