"""Fit metrics, reward and constant fitting.

An invalid fit (domain violation, non-finite prediction, constant target)
is represented by an infinite error, which maps to reward 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .expr import ExprTree, evaluate

INVALID = math.inf


@dataclass(frozen=True)
class FitMetrics:
    nrmse: float
    s_nrmse: float
    reward: float
    valid: bool

    @classmethod
    def invalid(cls):
        return cls(INVALID, INVALID, 0.0, False)


@dataclass(frozen=True)
class ConstOptOptions:
    max_iterations: int = 200
    restarts: int = 4
    init_range: tuple = (-2.0, 2.0)
    gradient_step: float = 1e-6
    convergence_tol: float = 1e-10

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.init_range[0] < self.init_range[1]:
            raise ValueError("init_range must satisfy low < high")
        if self.gradient_step <= 0 or self.convergence_tol <= 0:
            raise ValueError("gradient_step and convergence_tol must be positive")


def _pop_std(a):
    return float(np.sqrt(np.mean((a - a.mean()) ** 2)))


def nrmse(y, y_hat) -> float:
    """RMSE normalized by the population standard deviation of ``y``."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or y.shape[0] < 2:
        raise ValueError("y and y_hat must be 1-d with equal length >= 2")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
        return INVALID
    sigma = _pop_std(y)
    if sigma == 0.0:
        return INVALID
    with np.errstate(over="ignore"):
        err = float(np.sqrt(np.mean((y - y_hat) ** 2)) / sigma)
    return err if math.isfinite(err) else INVALID


def omission_penalty(tree: ExprTree, X) -> float:
    """Sum over variables absent from ``tree`` of rms(x_j) / std(x_j)."""
    X = np.asarray(X, dtype=np.float64)
    present = tree.variables()
    total = 0.0
    for j in range(X.shape[1]):
        if j in present:
            continue
        col = X[:, j]
        sigma = _pop_std(col)
        if sigma == 0.0:
            continue
        total += float(np.sqrt(np.mean(col ** 2))) / sigma
    return total


def s_nrmse(tree: ExprTree, X, y, y_hat, lam: float = 0.1) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    base = nrmse(y, y_hat)
    if base == INVALID or lam == 0.0:
        return base
    return base + lam * omission_penalty(tree, X)


def reward(s: float) -> float:
    if s is None or not math.isfinite(s):
        return 0.0
    if s < 0:
        raise ValueError("s_nrmse must be nonnegative")
    return 1.0 / (1.0 + s)


def fit_metrics(tree: ExprTree, X, y, constants=(), lam: float = 0.1) -> FitMetrics:
    y_hat, ok = evaluate(tree, X, constants)
    if not ok:
        return FitMetrics.invalid()
    base = nrmse(y, y_hat)
    if base == INVALID:
        return FitMetrics.invalid()
    s = s_nrmse(tree, X, y, y_hat, lam)
    return FitMetrics(base, s, reward(s), True)


def central_gradient(f, x, step):
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def bfgs(f, x0, opts: ConstOptOptions):
    """Minimize ``f`` with BFGS using central-difference gradients."""
    res = minimize(f, np.asarray(x0, dtype=np.float64), method="BFGS",
                   jac=lambda x: central_gradient(f, x, opts.gradient_step),
                   options={"maxiter": opts.max_iterations, "gtol": opts.convergence_tol})
    return res.x, float(res.fun)


def optimize_constants(tree: ExprTree, X, y, opts: ConstOptOptions = ConstOptOptions(),
                       lam: float = 0.1, rng=None):
    """Fit the constant slots of ``tree`` to ``(X, y)``.

    Starts from all-ones and from ``opts.restarts`` uniform draws in
    ``opts.init_range``; keeps the best.  Returns ``(constants, FitMetrics)``.
    """
    k = tree.n_constants
    if k == 0:
        return np.zeros(0), fit_metrics(tree, X, y, (), lam)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sigma2 = float(np.mean((y - y.mean()) ** 2))
    if sigma2 == 0.0 or not np.all(np.isfinite(y)):
        return np.ones(k), FitMetrics.invalid()
    rng = np.random.default_rng(0) if rng is None else rng

    penalty = 1e10

    # squared NRMSE: same minimizer as NRMSE but smooth at a perfect fit
    def objective(c):
        y_hat, ok = evaluate(tree, X, c)
        if not ok:
            return penalty
        v = float(np.mean((y - y_hat) ** 2)) / sigma2
        return v if math.isfinite(v) else penalty

    starts = [np.ones(k)]
    lo, hi = opts.init_range
    starts += [rng.uniform(lo, hi, size=k) for _ in range(opts.restarts)]

    best_c, best_m = starts[0], fit_metrics(tree, X, y, starts[0], lam)
    for x0 in starts:
        if objective(x0) >= penalty:
            continue
        with np.errstate(all="ignore"):
            c, _ = bfgs(objective, x0, opts)
        if not np.all(np.isfinite(c)):
            continue
        m = fit_metrics(tree, X, y, c, lam)
        if m.valid and (not best_m.valid or m.s_nrmse < best_m.s_nrmse):
            best_c, best_m = c, m
    return np.asarray(best_c, dtype=np.float64), best_m
