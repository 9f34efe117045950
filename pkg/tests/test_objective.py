import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symsearch.expr import Traversal, Vocabulary, build_tree
from symsearch.objective import (INVALID, ConstOptOptions, fit_metrics, nrmse, optimize_constants,
                                 reward, s_nrmse)

V = Vocabulary.default(2)


def tree(*symbols):
    return build_tree(Traversal.from_tokens([V[s] for s in symbols]))


def test_nrmse_examples():
    assert nrmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert nrmse([0.0, 2.0], [1.0, 1.0]) == 1.0
    assert nrmse([1.0, 1.0], [1.0, 2.0]) == INVALID
    assert nrmse([1.0, np.nan], [1.0, 2.0]) == INVALID


def test_s_nrmse_penalty():
    X = np.array([[0.0, 1.0], [2.0, -1.0]])
    y = np.array([0.0, 2.0])
    t1 = tree("x1")
    assert s_nrmse(t1, X, y, y, lam=1.0) == pytest.approx(1.0)
    assert s_nrmse(t1, X, y, y, lam=0.0) == 0.0
    t12 = tree("add", "x1", "mul", "c", "x2")
    assert s_nrmse(t12, X, y, np.array([1.0, 1.0]), lam=1.0) == nrmse(y, [1.0, 1.0])
    # a constant missing column carries no penalty
    Xc = np.array([[0.0, 5.0], [2.0, 5.0]])
    assert s_nrmse(t1, Xc, y, y, lam=1.0) == 0.0
    with pytest.raises(ValueError):
        s_nrmse(t1, X, y, y, lam=1.5)


def test_reward_examples():
    assert reward(0.0) == 1.0
    assert reward(1.0) == 0.5
    assert reward(3.0) == 0.25
    assert reward(INVALID) == 0.0


@given(st.floats(0, 1e6))
def test_reward_in_unit_interval_and_decreasing(s):
    r = reward(s)
    assert 0 < r <= 1
    assert reward(s + 1.0) < r


@given(arrays(np.float64, 20, elements=st.floats(-100, 100)),
       arrays(np.float64, 20, elements=st.floats(-100, 100)))
def test_nrmse_nonnegative(y, y_hat):
    v = nrmse(y, y_hat)
    assert v == INVALID or v >= 0


def test_optimize_constants_worked_example():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(20, 1))
    y = 2.2 * np.sin(X[:, 0]) + 1.3
    t = tree("add", "mul", "c", "sin", "x1", "c")
    c1, m1 = optimize_constants(t, X, y, rng=np.random.default_rng(5))
    assert np.allclose(c1, [2.2, 1.3], atol=1e-3)
    assert m1.reward > 0.9999
    c2, _ = optimize_constants(t, X, y, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(c1, c2)


def test_optimize_constants_least_squares_oracle():
    rng = np.random.default_rng(2)
    X = rng.uniform(-2, 2, size=(20, 1))
    y = 3.0 * X[:, 0] + rng.normal(0, 0.1, 20)
    t = tree("mul", "c", "x1")
    c, _ = optimize_constants(t, X, y)
    closed = float(X[:, 0] @ y / (X[:, 0] @ X[:, 0]))
    assert c[0] == pytest.approx(closed, abs=1e-6)


def test_no_constants_evaluates_directly():
    X = np.linspace(-1, 1, 10)[:, None]
    c, m = optimize_constants(tree("x1"), X, X[:, 0])
    assert c.shape == (0,) and m.reward == 1.0
    assert fit_metrics(tree("log", "x1"), X, X[:, 0]).reward == 0.0


def test_const_opt_options_validate():
    with pytest.raises(ValueError):
        ConstOptOptions(restarts=0)
    with pytest.raises(ValueError):
        ConstOptOptions(init_range=(1.0, -1.0))


def test_all_invalid_fit_gives_zero_reward():
    X = -np.linspace(1, 2, 10)[:, None]
    y = np.linspace(0, 1, 10)
    c, m = optimize_constants(tree("log", "mul", "c", "x1"), X, y,
                              ConstOptOptions(init_range=(0.1, 1.0), restarts=2),
                              rng=np.random.default_rng(0))
    # positive starts all give log of negatives; the ones-start too
    assert not m.valid and m.reward == 0.0 and math.isfinite(c[0])
