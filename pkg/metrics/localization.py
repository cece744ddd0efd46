"""
Localization precision / recall / F1 at a distance threshold.

A prediction is a true positive when it is matched one-to-one to a ground-truth
point no farther than sigma away. The matching maximizes the number of such
pairs and breaks ties by minimum total distance.
"""

from typing import Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from app.errors import ContractViolation
from app.models import LocalizationReport, PointSet, ProposalSet, ScoredProposal
from geometry.points import pairwise_distances

SCORE_THRESHOLD = 0.5

Predictions = Union[ProposalSet, Sequence[ScoredProposal]]


def predicted_points(pred: Predictions, score_threshold: float = SCORE_THRESHOLD) -> np.ndarray:
    """(K, 2) positions of predictions scoring at least the threshold."""
    if isinstance(pred, ProposalSet):
        return np.array(pred.positions[pred.scores >= score_threshold])
    kept = [(p.position.x, p.position.y) for p in pred if p.score >= score_threshold]
    return np.array(kept, dtype=np.float64).reshape(-1, 2)


def match_within(gt: np.ndarray, predictions: np.ndarray, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Maximum-cardinality, minimum-distance one-to-one matching within sigma.

    Returns:
        Matched prediction indices and matched ground-truth indices
    """
    if gt.shape[0] == 0 or predictions.shape[0] == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    distances = pairwise_distances(predictions, gt)
    feasible = distances <= sigma
    # any infeasible pair costs more than every feasible matching combined
    penalty = sigma * (min(distances.shape) + 1) + 1.0
    rows, cols = linear_sum_assignment(np.where(feasible, distances, penalty))
    keep = feasible[rows, cols]
    return rows[keep], cols[keep]


def localization_report(
    gt: PointSet,
    pred: Predictions,
    sigma: float,
    score_threshold: float = SCORE_THRESHOLD
) -> LocalizationReport:
    """
    Precision, recall and F1 of predictions against ground truth.

    Args:
        gt: Ground-truth points
        pred: Scored proposals; those below score_threshold are ignored
        sigma: True-positive distance threshold in pixels
        score_threshold: Minimum score of a prediction

    Returns:
        Counts and rates at this threshold
    """
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    predictions = predicted_points(pred, score_threshold)
    matched_pred, _ = match_within(gt.coords, predictions, sigma)
    tp = int(matched_pred.size)
    return LocalizationReport.from_counts(
        tp=tp,
        fp=int(predictions.shape[0]) - tp,
        fn=len(gt) - tp,
        threshold=sigma,
    )
