import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symsearch import _accel
from symsearch.constraints import ConstraintConfig, legal_mask
from symsearch.expr import Traversal, Vocabulary, build_tree, push_token

V = Vocabulary.universal(2)
CFG = ConstraintConfig(max_length=15)

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba path not active")


def random_program(rng):
    t = Traversal(max_length=15)
    while not t.complete:
        m = legal_mask(t, V, CFG)
        t = push_token(t, V[int(rng.choice(np.flatnonzero(m)))])
    ops, args, slots = build_tree(t).program()
    args = args.copy()
    args[slots] = rng.uniform(-3, 3, len(slots))
    return ops, args


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_eval_prefix_parity(seed):
    rng = np.random.default_rng(seed)
    ops, args = random_program(rng)
    X = rng.uniform(-2, 2, (17, 2))
    a, ok_a = _accel.eval_prefix(ops, args, X)
    b, ok_b = _accel.eval_prefix_numpy(ops, args, X)
    assert ok_a == ok_b
    if ok_a:
        # libm and numpy transcendentals differ by ulps; compare only rows whose
        # value is stable under a relative input nudge of 1e-13
        c, ok_c = _accel.eval_prefix_numpy(ops, args, X * (1 + 1e-13))
        stable = np.abs(c - b) <= 1e-7 * (1 + np.abs(b)) if ok_c else np.zeros(len(b), bool)
        np.testing.assert_allclose(a[stable], b[stable], rtol=1e-9, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_uct_select_parity(seed, k):
    rng = np.random.default_rng(seed)
    N = rng.integers(0, 5, k).astype(float)
    W = N * rng.uniform(0, 1, k)
    P = rng.dirichlet(np.ones(k))
    n = N.sum() + 1
    assert _accel.uct_select(W, N, P, n, 1.5) == _accel.uct_select_numpy(W, N, P, n, 1.5)


@pytest.mark.parametrize("shape", [(3, 5, 8), (64, 31, 256)])
def test_gelu_backward_parity(shape):
    rng = np.random.default_rng(0)
    u = rng.normal(0, 3, shape)
    dg = rng.normal(size=shape)
    g, t = _accel.gelu(u)
    np.testing.assert_allclose(_accel.gelu_backward(dg, u, t),
                               _accel.gelu_backward_numpy(dg, u, t), rtol=1e-13, atol=1e-15)
    # derivative against central differences of the forward
    h = 1e-6
    fd = (_accel.gelu_numpy(u + h)[0] - _accel.gelu_numpy(u - h)[0]) / (2 * h)
    np.testing.assert_allclose(_accel.gelu_backward(np.ones(shape), u, t), fd, atol=1e-8)


def test_env_flag_selects_numpy():
    code = "from symsearch import _accel; print(_accel.HAVE_NUMBA, _accel.eval_prefix is _accel.eval_prefix_numpy)"
    env = dict(os.environ, SYMSEARCH_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["False", "True"]
