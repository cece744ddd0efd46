"""
Central finite-difference gradient checks.
"""

from typing import Callable

import numpy as np


def numerical_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        original = x.flat[i]
        x.flat[i] = original + step
        upper = func(x)
        x.flat[i] = original - step
        lower = func(x)
        x.flat[i] = original
        grad.flat[i] = (upper - lower) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """
    Largest per-coordinate relative discrepancy.

    The denominator is max(|analytic|, |numeric|, floor) so coordinates whose
    true gradient is (near) zero are compared absolutely.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0
