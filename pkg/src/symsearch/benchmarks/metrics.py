"""Aggregate metrics for benchmark reports."""
import numpy as np


def recovery_rate(results) -> float:
    results = list(results)
    if not results:
        raise ValueError("recovery_rate needs at least one result")
    return sum(bool(r) for r in results) / len(results)


def r_squared(y, y_hat):
    """Coefficient of determination, or None when ``y`` is constant."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.shape[0] < 2:
        raise ValueError("y and y_hat must have equal length >= 2")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return None
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot
