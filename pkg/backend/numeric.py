"""
Float summaries that cannot overflow on finite input.

Values are rescaled by a power of two before they are summed, so the rescaling
is exact and results match a plain correctly rounded sum whenever that sum
stays in range. Functions raise OverflowError only when the true result
itself is larger than the largest float.
"""

import math
from typing import Sequence, Tuple

import numpy as np


def _exponent(*arrays: np.ndarray) -> int:
    peak = max((float(np.max(np.abs(a))) for a in arrays if a.size), default=0.0)
    if peak == 0.0 or not math.isfinite(peak):
        return 0
    return math.frexp(peak)[1]


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and population standard deviation; independent of value order."""
    data = np.asarray(values, dtype=float)
    exp = _exponent(data)
    scaled = np.ldexp(data, -exp)
    mean = math.fsum(scaled) / len(scaled)
    dev = scaled - mean
    variance = math.fsum(dev * dev) / len(scaled)
    return math.ldexp(mean, exp), math.ldexp(math.sqrt(variance), exp)


def mean(values: Sequence[float]) -> float:
    data = np.asarray(values, dtype=float)
    exp = _exponent(data)
    return math.ldexp(math.fsum(np.ldexp(data, -exp)) / len(data), exp)


def _scaled_difference(y_true: Sequence[float], y_pred: Sequence[float]) -> Tuple[np.ndarray, int]:
    truth = np.asarray(y_true, dtype=float)
    pred = np.asarray(y_pred, dtype=float)
    exp = _exponent(truth, pred)
    return np.ldexp(truth, -exp) - np.ldexp(pred, -exp), exp


def rms_difference(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    diff, exp = _scaled_difference(y_true, y_pred)
    return math.ldexp(math.sqrt(math.fsum(diff * diff) / len(diff)), exp)


def mean_abs_difference(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    diff, exp = _scaled_difference(y_true, y_pred)
    return math.ldexp(math.fsum(np.abs(diff)) / len(diff), exp)
