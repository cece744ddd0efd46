"""
Adam optimizer over a flat parameter vector.
"""

from typing import Tuple

import numpy as np

from app.config import OptimizerConfig


class AdamOptimizer:
    """Stateless Adam: moments live in the trainer state, not here."""

    def __init__(self, config: OptimizerConfig):
        self.config = config

    def step(
        self,
        theta: np.ndarray,
        grad: np.ndarray,
        m: np.ndarray,
        v: np.ndarray,
        t: int
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        One bias-corrected Adam update.

        Args:
            theta: Current parameters
            grad: Gradient at theta
            m: First-moment estimate
            v: Second-moment estimate
            t: 1-based update count

        Returns:
            New (theta, m, v)
        """
        cfg = self.config
        m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad
        v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad
        m_hat = m / (1.0 - cfg.adam_beta1 ** t)
        v_hat = v / (1.0 - cfg.adam_beta2 ** t)
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        return theta, m, v


def ema_update(teacher: np.ndarray, student: np.ndarray, decay: float) -> np.ndarray:
    """teacher <- decay * teacher + (1 - decay) * student."""
    return decay * teacher + (1.0 - decay) * student
