"""
Counting metrics: MAE and the root of the mean squared count error.
"""

import math
from typing import Sequence, Tuple

from app.errors import ContractViolation
from app.models import CountingReport


def counting_report(pairs: Sequence[Tuple[int, int]]) -> CountingReport:
    """
    Counting errors over images.

    Args:
        pairs: (gt_count, pred_count) per image

    Returns:
        MAE = mean |y - y_hat| and MSE = sqrt(mean (y - y_hat)^2)
    """
    if not pairs:
        raise ContractViolation("counting_report needs at least one image")
    errors = [float(gt - pred) for gt, pred in pairs]
    n_images = len(errors)
    return CountingReport(
        mae=math.fsum(abs(e) for e in errors) / n_images,
        mse=math.sqrt(math.fsum(e * e for e in errors) / n_images),
        n_images=n_images,
    )
