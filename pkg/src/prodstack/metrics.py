"""R^2, RMSE and MAE."""

from dataclasses import dataclass

import numpy as np


class LengthMismatch(ValueError):
    pass


class ConstantTruth(ValueError):
    pass


def _pair(y_hat, y, min_len=1):
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if y_hat.shape != y.shape:
        raise LengthMismatch(f"lengths differ: {y_hat.size} vs {y.size}")
    if y.size < min_len:
        raise LengthMismatch(f"need at least {min_len} values, got {y.size}")
    return y_hat, y


def r2_score(y_hat, y) -> float:
    y_hat, y = _pair(y_hat, y, 2)
    ss_tot = float(np.sum((y.mean() - y) ** 2))
    if ss_tot == 0.0:
        raise ConstantTruth("R^2 undefined: true series is constant")
    ss_res = float(np.sum((y_hat - y) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(y_hat, y) -> float:
    y_hat, y = _pair(y_hat, y)
    return float(np.sqrt(np.mean((y_hat - y) ** 2)))


def mae(y_hat, y) -> float:
    y_hat, y = _pair(y_hat, y)
    return float(np.mean(np.abs(y_hat - y)))


@dataclass(frozen=True)
class MetricTriple:
    r2: float
    mae: float
    rmse: float


def evaluate(y_hat, y) -> MetricTriple:
    return MetricTriple(r2_score(y_hat, y), mae(y_hat, y), rmse(y_hat, y))
