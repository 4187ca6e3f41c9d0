"""Small shared numeric helpers (stable softmax family)."""

from __future__ import annotations

import numpy as np


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def nll_of_logits(logits: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log likelihood of integer labels under softmax(logits)."""
    logp = log_softmax(logits, axis=1)
    return float(-logp[np.arange(y.shape[0]), y].mean())
