"""Linear readout: pseudoinverse training, prediction, NMSE and capacity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import DEFAULT_RCOND, pseudoinverse

__all__ = ["ReadoutWeights", "TaskResult", "Trainer", "train", "predict", "nmse", "capacity", "evaluate"]


@dataclass(frozen=True)
class ReadoutWeights:
    weights: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("readout weights are not finite")


@dataclass(frozen=True)
class TaskResult:
    nmse: float
    capacity: float

    @classmethod
    def from_nmse(cls, value: float) -> "TaskResult":
        return cls(float(value), capacity(value))


def _values(O) -> np.ndarray:
    return np.asarray(getattr(O, "values", O), dtype=float)


class Trainer:
    """Caches ``pinv(O_train)`` so many targets share one decomposition."""

    def __init__(self, O_train, rcond: float = DEFAULT_RCOND):
        O = _values(O_train)
        if O.ndim != 2 or O.shape[0] == 0:
            raise ValueError("training matrix must be 2-d and nonempty")
        self.n_rows, self.n_cols = O.shape
        self.pinv, self.rank = pseudoinverse(O, rcond, return_rank=True)

    def fit(self, y_train) -> ReadoutWeights:
        y = np.asarray(y_train, dtype=float)
        if y.shape[0] != self.n_rows:
            raise ValueError(f"target has {y.shape[0]} rows, features have {self.n_rows}")
        return ReadoutWeights(self.pinv @ y)


def train(O_train, y_train, rcond: float = DEFAULT_RCOND) -> ReadoutWeights:
    """Least-squares minimum-norm weights ``pinv(O_train) @ y_train``.

    ``y_train`` may be a vector or a ``(rows, targets)`` matrix.
    """
    return Trainer(O_train, rcond).fit(y_train)


def predict(O, W: ReadoutWeights | np.ndarray) -> np.ndarray:
    O = _values(O)
    w = np.asarray(getattr(W, "weights", W), dtype=float)
    if O.shape[1] != w.shape[0]:
        raise ValueError(f"features have {O.shape[1]} columns, weights {w.shape[0]} rows")
    return O @ w


def nmse(y_target, y_pred) -> float | np.ndarray:
    """``sum((y - yhat)^2) / sum(y^2)``; columnwise for 2-d input."""
    y = np.asarray(y_target, dtype=float)
    yh = np.asarray(y_pred, dtype=float)
    if y.shape != yh.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yh.shape}")
    denom = np.sum(y * y, axis=0)
    if np.any(denom <= 0):
        raise ValueError("target is identically zero")
    return np.sum((y - yh) ** 2, axis=0) / denom


def capacity(value):
    """``max(0, 1 - NMSE)``."""
    if np.any(np.asarray(value) < 0):
        raise ValueError("NMSE must be nonnegative")
    c = np.clip(1.0 - np.asarray(value, dtype=float), 0.0, 1.0)
    return float(c) if c.ndim == 0 else c


def evaluate(O_train, y_train, O_test, y_test, rcond: float = DEFAULT_RCOND) -> TaskResult:
    """Train on one window and score NMSE / capacity on the other."""
    W = train(O_train, y_train, rcond)
    return TaskResult.from_nmse(nmse(y_test, predict(O_test, W)))
