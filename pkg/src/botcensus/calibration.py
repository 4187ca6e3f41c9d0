"""Per-model confidence calibration: temperature scaling fitted by NLL on a
held-out split, plus expected calibration error measurement.

All functions are pure; per-model fitting is independent and safe to run
concurrently.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BadTemperature, DimensionError, EmptyValidation, SingleClassError
from .numerics import nll_of_logits, softmax

# Search window and tolerance for the golden-section fit over log T.
LOG_T_LOW = math.log(0.05)
LOG_T_HIGH = math.log(20.0)
LOG_T_TOL = 1e-4
MIN_VALIDATION = 10
DEFAULT_ECE_BINS = 10


def apply_temperature(z: np.ndarray, T: float) -> np.ndarray:
    """softmax(z / T); preserves argmax for every T > 0."""
    if not (np.isfinite(T) and T > 0):
        raise BadTemperature(f"temperature must be finite and > 0, got {T}")
    return softmax(np.asarray(z, dtype=np.float64) / T, axis=-1)


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Deterministic golden-section minimizer on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def fit_temperature(Z: np.ndarray, y: np.ndarray) -> float:
    """Temperature minimizing validation NLL, via golden-section search on
    log T in [log 0.05, log 20] at tolerance 1e-4.

    The returned temperature never scores worse than T = 1 on the same data.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise DimensionError(f"logits {Z.shape} and labels {y.shape} do not align")
    if Z.shape[0] < MIN_VALIDATION:
        raise EmptyValidation(
            f"temperature fit needs >= {MIN_VALIDATION} samples, got {Z.shape[0]}"
        )
    if np.unique(y).size < 2:
        raise SingleClassError("validation labels contain a single class")

    def nll_at(log_t: float) -> float:
        return nll_of_logits(Z / math.exp(log_t), y)

    best_log_t = _golden_section(nll_at, LOG_T_LOW, LOG_T_HIGH, LOG_T_TOL)
    T = math.exp(best_log_t)
    if nll_at(best_log_t) > nll_at(0.0):
        T = 1.0
    return T


def expected_calibration_error(
    P: np.ndarray, y: np.ndarray, bins: int = DEFAULT_ECE_BINS
) -> float:
    """ECE over equal-width confidence bins on the max-class probability.

    ECE = sum_b (n_b / N) * |acc_b - conf_b|, skipping empty bins.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    P = np.asarray(P, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if P.ndim != 2 or P.shape[0] != y.shape[0]:
        raise DimensionError(f"probs {P.shape} and labels {y.shape} do not align")
    n = P.shape[0]
    conf = P.max(axis=1)
    pred = P.argmax(axis=1)
    correct = (pred == y).astype(np.float64)
    idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    ece = 0.0
    for b in range(bins):
        mask = idx == b
        nb = int(mask.sum())
        if nb == 0:
            continue
        ece += (nb / n) * abs(correct[mask].mean() - conf[mask].mean())
    return float(ece)
