"""
One-to-one Hungarian matching of targets to proposals.
Rectangular N <= M problems are solved directly by scipy's Kuhn-Munkres solver.
"""

import numpy as np
from scipy.optimize import linear_sum_assignment

from app.errors import AssignmentError
from app.models import CostMatrix, MatchResult


def hungarian_match(cost: CostMatrix) -> MatchResult:
    """
    Minimum-cost injective assignment of every target to a proposal.

    Args:
        cost: N x M cost matrix with N <= M

    Returns:
        Assignment, achieved cost, and the positive / negative proposal split
    """
    n, m = cost.n_targets, cost.m_proposals
    if n > m:
        raise AssignmentError(f"cannot match {n} targets to {m} proposals one-to-one")
    if n == 0:
        return MatchResult(
            assignment=np.zeros(0, dtype=np.int64),
            total_cost=0.0,
            positive_set=np.zeros(0, dtype=np.int64),
            negative_set=np.arange(m),
            n_proposals=m,
        )

    rows, cols = linear_sum_assignment(cost.values)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rows] = cols
    # summed in target order so equal assignments give bit-equal costs
    total = 0.0
    for i in range(n):
        total += float(cost.values[i, assignment[i]])

    matched = np.zeros(m, dtype=bool)
    matched[assignment] = True
    return MatchResult(
        assignment=assignment,
        total_cost=total,
        positive_set=np.flatnonzero(matched),
        negative_set=np.flatnonzero(~matched),
        n_proposals=m,
    )
