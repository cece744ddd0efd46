"""
Point localization and classification losses.

Both the labeled and the unlabeled objective share one implementation:
    l_loc = (1/N) sum_i ||p_i - p_hat_xi(i)||^2
    l_cls = -(1/M) [ sum_i w_i log c_hat_xi(i) + lambda1 sum_neg log(1 - c_hat) ]
    total = l_cls + lambda2 * l_loc
Labeled data uses w_i = 1; pseudo-labels use their calibration weights.
"""

from typing import List, Literal, Optional

import numpy as np

from app.errors import ContractViolation, ShapeMismatchError
from app.models import CombinedLoss, ConsistentPseudoLabels, LossBreakdown, MatchResult, PointSet, ProposalSet

LOG_CLAMP_EPS = 1e-7


def _point_loss(
    flavor: Literal["labeled", "unlabeled"],
    targets: PointSet,
    weights: np.ndarray,
    proposals: ProposalSet,
    match: MatchResult,
    lambda1: float,
    lambda2: float,
    weight_loc_loss: bool = False
) -> LossBreakdown:
    n, m = len(targets), len(proposals)
    if match.n_targets != n or match.n_proposals != m:
        raise ShapeMismatchError(
            f"match covers {match.n_targets} targets x {match.n_proposals} proposals, "
            f"inputs have {n} x {m}"
        )

    scores = proposals.scores
    clipped = np.clip(scores, LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS)
    active = clipped == scores
    pos, neg = match.assignment, match.negative_set

    pos_term = np.sum(weights * np.log(clipped[pos]))
    neg_term = lambda1 * np.sum(np.log(1.0 - clipped[neg]))
    l_cls = -(pos_term + neg_term) / m

    grad_scores = np.zeros(m)
    grad_scores[pos] = -weights / (m * clipped[pos]) * active[pos]
    grad_scores[neg] = lambda1 / (m * (1.0 - clipped[neg])) * active[neg]

    grad_positions = np.zeros((m, 2))
    if n > 0:
        loc_weights = weights if weight_loc_loss else np.ones(n)
        residual = proposals.positions[pos] - targets.coords
        l_loc = float(np.sum(loc_weights * np.sum(residual ** 2, axis=1)) / n)
        grad_positions[pos] = lambda2 * 2.0 * loc_weights[:, None] * residual / n
    else:
        l_loc = 0.0

    return LossBreakdown(
        flavor=flavor,
        l_loc=l_loc,
        l_cls=float(l_cls),
        total=float(l_cls + lambda2 * l_loc),
        grad_positions=grad_positions,
        grad_scores=grad_scores,
        clamp_count=int(np.count_nonzero(~active)),
        n_targets=n,
    )


def labeled_loss(
    gt: PointSet,
    proposals: ProposalSet,
    match: MatchResult,
    lambda1: float,
    lambda2: float
) -> LossBreakdown:
    """
    Supervised loss on annotated points.

    Args:
        gt: Ground-truth points (targets of the match)
        proposals: Student proposals
        match: Hungarian match of gt to proposals
        lambda1: Negative-class weight
        lambda2: Localization loss weight

    Returns:
        Loss values with per-anchor gradients
    """
    return _point_loss("labeled", gt, np.ones(len(gt)), proposals, match, lambda1, lambda2)


def unlabeled_loss(
    pseudo: ConsistentPseudoLabels,
    proposals: ProposalSet,
    match: MatchResult,
    lambda1: float,
    lambda2: float,
    weight_loc_loss: bool = False
) -> LossBreakdown:
    """
    Loss on teacher pseudo-points, IUC weights on the positive class terms.

    Args:
        pseudo: Consistent pseudo-labels (targets of the match)
        proposals: Student proposals on the same view
        match: Hungarian match of pseudo-points to proposals
        lambda1: Negative-class weight
        lambda2: Localization loss weight
        weight_loc_loss: Also weight the localization term (ablation)

    Returns:
        Loss values with per-anchor gradients
    """
    return _point_loss(
        "unlabeled", pseudo.points, pseudo.weights, proposals, match, lambda1, lambda2, weight_loc_loss
    )


def combine(labeled: LossBreakdown, unlabeled: Optional[LossBreakdown], lam: float) -> CombinedLoss:
    """
    L = L^L + lambda * L^U, with parameter gradients merged the same way.

    An absent unlabeled part contributes nothing.
    """
    if lam < 0:
        raise ContractViolation(f"lambda must be non-negative, got {lam}")
    unlabeled_total = unlabeled.total if unlabeled is not None else 0.0
    param_grad = None
    if labeled.param_grad is not None:
        param_grad = np.array(labeled.param_grad)
        if unlabeled is not None and unlabeled.param_grad is not None:
            param_grad = param_grad + lam * unlabeled.param_grad
    return CombinedLoss(
        total=labeled.total + lam * unlabeled_total,
        labeled_total=labeled.total,
        unlabeled_total=unlabeled_total,
        lam=lam,
        param_grad=param_grad,
    )


def average_breakdowns(breakdowns: List[LossBreakdown]) -> LossBreakdown:
    """
    Batch summary: mean losses and mean parameter gradient over scenes.

    Per-anchor gradients are per-scene quantities and are left empty.
    """
    if not breakdowns:
        raise ContractViolation("cannot average an empty list of loss breakdowns")
    count = len(breakdowns)
    param_grad = None
    if all(b.param_grad is not None for b in breakdowns):
        param_grad = np.sum([b.param_grad for b in breakdowns], axis=0) / count
    return LossBreakdown(
        flavor="batch",
        l_loc=sum(b.l_loc for b in breakdowns) / count,
        l_cls=sum(b.l_cls for b in breakdowns) / count,
        total=sum(b.total for b in breakdowns) / count,
        grad_positions=np.zeros((0, 2)),
        grad_scores=np.zeros(0),
        clamp_count=sum(b.clamp_count for b in breakdowns),
        n_targets=sum(b.n_targets for b in breakdowns),
        param_grad=param_grad,
    )
