"""
Pseudo-label drift between teacher snapshots.
Tracks the position and count (class) inconsistency of pseudo-points on a fixed scene.
"""

import numpy as np

from app.models import CostMatrix, DriftReport, PointSet
from geometry.points import pairwise_distances
from matching.hungarian import hungarian_match


def pseudo_label_drift(previous: PointSet, current: PointSet) -> DriftReport:
    """
    Compare two pseudo-label sets of the same scene.

    The smaller set is matched one-to-one into the larger one by distance.

    Args:
        previous: Pseudo-points from the earlier snapshot
        current: Pseudo-points from the later snapshot

    Returns:
        Matched count, mean displacement of matched points and count change
    """
    small, large = (previous, current) if len(previous) <= len(current) else (current, previous)
    matched = len(small)
    mean_displacement = 0.0
    if matched:
        distances = pairwise_distances(small.coords, large.coords)
        match = hungarian_match(CostMatrix(values=distances))
        mean_displacement = float(np.mean(distances[np.arange(matched), match.assignment]))
    return DriftReport(
        previous_count=len(previous),
        current_count=len(current),
        matched=matched,
        mean_displacement=mean_displacement,
        count_change=len(current) - len(previous),
    )
