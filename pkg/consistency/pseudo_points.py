"""
Consistent pseudo-labels from teacher proposals.

Pipeline: positive proposals of the teacher become pseudo-points, Position
Aggregation averages each with the regressed positions of its K neighbouring
proposals, and Instance-wise Uncertainty Calibration weights each pseudo-point
by w = (c - 0.5) / 0.5.
"""

import math
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from loguru import logger

from app.config import PAConfig
from app.errors import ContractViolation
from app.models import ConsistentPseudoLabels, Point2D, PointSet, ProposalSet

PSEUDO_THRESHOLD = 0.5


def extract_pseudo_points(
    teacher_proposals: ProposalSet,
    threshold: float = PSEUDO_THRESHOLD
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Positively classified teacher proposals.

    Args:
        teacher_proposals: Teacher output over the full anchor grid
        threshold: Inclusive score threshold

    Returns:
        Anchor indices (anchor order) and their scores
    """
    indices = np.flatnonzero(teacher_proposals.scores >= threshold)
    return indices, teacher_proposals.scores[indices]


@lru_cache(maxsize=None)
def auxiliary_offsets(k_aux: int) -> Tuple[Tuple[int, int], ...]:
    """
    (dcol, drow) offsets of the K anchor cells nearest a pseudo-point's cell.

    Cells are taken in whole 90-degree rotation orbits ordered by distance, so
    every neighbourhood is rotationally symmetric; K = 4 gives the four
    edge-adjacent cells.
    """
    if k_aux % 4 != 0:
        raise ContractViolation(f"k_aux must be a multiple of 4, got {k_aux}")
    radius = math.isqrt(k_aux) + 2
    # one representative per orbit: dcol > 0, drow >= 0
    representatives = sorted(
        ((dc, dr) for dc in range(1, radius + 1) for dr in range(0, radius + 1)),
        key=lambda o: (o[0] ** 2 + o[1] ** 2, o[1]),
    )
    offsets = []
    for dc, dr in representatives[:k_aux // 4]:
        offsets.extend([(dc, dr), (-dr, dc), (-dc, -dr), (dr, -dc)])
    return tuple(offsets)


def aggregate_positions(
    indices: np.ndarray,
    teacher_proposals: ProposalSet,
    config: PAConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Position Aggregation for many pseudo-points at once.

    Returns:
        (n, 2) aggregated positions and (n,) achieved auxiliary counts
    """
    indices = np.asarray(indices, dtype=np.int64)
    positions = teacher_proposals.positions
    if config.k_aux == 0 or indices.size == 0:
        return np.array(positions[indices]), np.zeros(indices.size, dtype=np.int64)

    grid = teacher_proposals.grid
    rows, cols = np.divmod(indices, grid.cols)
    offsets = np.array(auxiliary_offsets(config.k_aux), dtype=np.int64)
    neighbour_rows = rows[:, None] + offsets[None, :, 1]
    neighbour_cols = cols[:, None] + offsets[None, :, 0]
    # truncate at the border instead of shifting the block
    valid = (
        (neighbour_rows >= 0) & (neighbour_rows < grid.rows)
        & (neighbour_cols >= 0) & (neighbour_cols < grid.cols)
    )
    neighbours = np.where(valid, neighbour_rows * grid.cols + neighbour_cols, 0)
    auxiliary = positions[neighbours] * valid[..., None]
    counts = valid.sum(axis=1)
    aggregated = (positions[indices] + auxiliary.sum(axis=1)) / (1 + counts)[:, None]
    return aggregated, counts.astype(np.int64)


def position_aggregate(pseudo_idx: int, teacher_proposals: ProposalSet, config: PAConfig) -> Point2D:
    """
    Position-consistent location of one pseudo-point.

    Args:
        pseudo_idx: Anchor index of a positive proposal
        teacher_proposals: Teacher output
        config: Aggregation settings (K)

    Returns:
        Mean of the pseudo-point and its in-grid auxiliary positions
    """
    if not 0 <= pseudo_idx < len(teacher_proposals):
        raise ContractViolation(f"anchor index {pseudo_idx} outside grid of {len(teacher_proposals)}")
    aggregated, _ = aggregate_positions(np.array([pseudo_idx]), teacher_proposals, config)
    return Point2D(x=float(aggregated[0, 0]), y=float(aggregated[0, 1]))


def iuc_weight(score: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Instance-wise uncertainty weight w = (c - 0.5) / 0.5.

    Args:
        score: Teacher classification score in [0.5, 1], or an array of them

    Returns:
        Weight in [0, 1], with the same shape as score
    """
    scores = np.asarray(score, dtype=np.float64)
    if not np.all((scores >= 0.5) & (scores <= 1.0)):
        raise ContractViolation(f"IUC weight needs scores in [0.5, 1], got {score}")
    weights = (scores - 0.5) / 0.5
    return float(weights) if weights.ndim == 0 else weights


class PseudoLabeler:
    """Turns teacher proposals into consistent pseudo-labels."""

    def __init__(self, config: PAConfig, calibrate: bool = True, threshold: float = PSEUDO_THRESHOLD):
        """
        Initialize the labeler.

        Args:
            config: Position Aggregation settings
            calibrate: Apply IUC weights (False gives every pseudo-point weight 1)
            threshold: Score threshold for pseudo-points, at least 0.5
        """
        if threshold < 0.5:
            raise ContractViolation(f"pseudo-point threshold must be >= 0.5, got {threshold}")
        self.config = config
        self.calibrate = calibrate
        self.threshold = threshold
        self.logger = logger.bind(component="PseudoLabeler")

    def label(self, teacher_proposals: ProposalSet) -> ConsistentPseudoLabels:
        indices, scores = extract_pseudo_points(teacher_proposals, self.threshold)
        coords, counts = aggregate_positions(indices, teacher_proposals, self.config)
        weights = iuc_weight(scores) if self.calibrate else np.ones(indices.size)
        return ConsistentPseudoLabels(
            points=PointSet(coords=coords),
            weights=weights,
            source_scores=scores,
            source_anchor_indices=indices,
            aux_counts=counts,
            calibrated=self.calibrate,
        )


def build_consistent_labels(
    teacher_proposals: ProposalSet,
    config: PAConfig,
    calibrate: bool = True
) -> ConsistentPseudoLabels:
    """Convenience function: extract, aggregate and weight pseudo-points."""
    return PseudoLabeler(config, calibrate=calibrate).label(teacher_proposals)
