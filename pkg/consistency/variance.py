"""
Monte-Carlo check that averaging K noisy positions divides the variance by K.
"""

from typing import Tuple

import numpy as np

from app.errors import ContractViolation

MIN_TRIALS = 10_000


def variance_probe(sigma: float, k: int, trials: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Empirical variance of one N(0, sigma^2) position and of the mean of K.

    Args:
        sigma: Per-coordinate standard deviation of each position
        k: Number of positions averaged
        trials: Monte-Carlo repetitions, at least 10^4
        seed: RNG seed

    Returns:
        Per-coordinate (x, y) variances of a single draw and of the K-average
    """
    if trials < MIN_TRIALS:
        raise ContractViolation(f"variance_probe needs at least {MIN_TRIALS} trials, got {trials}")
    if k < 1:
        raise ContractViolation(f"k must be at least 1, got {k}")
    if sigma < 0:
        raise ContractViolation(f"sigma must be non-negative, got {sigma}")

    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, sigma, (trials, k, 2))
    single = draws[:, 0, :].var(axis=0)
    aggregated = draws.mean(axis=1).var(axis=0)
    return single, aggregated
