"""
Cost matrix construction for proposal/target matching.
"""

from app.errors import AssignmentError
from app.models import CostMatrix, PointSet, ProposalSet
from geometry.points import pairwise_distances


def build_cost_matrix(targets: PointSet, proposals: ProposalSet, score_weight: float) -> CostMatrix:
    """
    Pair-wise matching cost D[i][j] = ||p_i - p_hat_j|| - mu * c_hat_j.

    Args:
        targets: N target points
        proposals: M proposals
        score_weight: mu >= 0, pull towards confident proposals

    Returns:
        N x M cost matrix
    """
    if score_weight < 0:
        raise AssignmentError(f"score_weight must be non-negative, got {score_weight}")
    n, m = len(targets), len(proposals)
    if n > m:
        raise AssignmentError(
            f"{n} targets but only {m} proposals: raise proposal density (smaller stride) "
            f"so every target can be matched one-to-one"
        )
    distances = pairwise_distances(targets.coords, proposals.positions)
    return CostMatrix(values=distances - score_weight * proposals.scores[None, :])
