"""
Holdout evaluation of a parameter set over many scenes.
"""

from typing import Dict, List, Sequence

from loguru import logger

from app.errors import ContractViolation
from app.models import EvaluationReport, LocalizationReport, Scene
from metrics.counting import counting_report
from metrics.localization import SCORE_THRESHOLD, localization_report, predicted_points
from net.proposal_net import ModelParams, forward


def evaluate_scenes(
    params: ModelParams,
    scenes: Sequence[Scene],
    sigmas: Sequence[float],
    score_threshold: float = SCORE_THRESHOLD,
    step: int = 0,
    model_name: str = "teacher"
) -> EvaluationReport:
    """
    Localization (micro-averaged over scenes) and counting metrics.

    Args:
        params: Model to evaluate
        scenes: Scenes carrying ground truth
        sigmas: Distance thresholds
        score_threshold: Minimum score of a prediction
        step: Training step recorded in the report
        model_name: Which model produced the predictions

    Returns:
        One localization row per sigma and one counting row
    """
    if not scenes:
        raise ContractViolation("evaluation needs at least one scene")
    totals: Dict[float, List[int]] = {float(s): [0, 0, 0] for s in sigmas}
    count_pairs = []
    for scene in scenes:
        if scene.gt_points is None:
            raise ContractViolation(f"scene {scene.scene_id} has no ground truth to evaluate against")
        proposals, _ = forward(params, scene.field)
        for sigma in totals:
            row = localization_report(scene.gt_points, proposals, sigma, score_threshold)
            totals[sigma][0] += row.tp
            totals[sigma][1] += row.fp
            totals[sigma][2] += row.fn
        count_pairs.append((len(scene.gt_points), int(predicted_points(proposals, score_threshold).shape[0])))

    report = EvaluationReport(
        step=step,
        model=model_name,
        localization=[
            LocalizationReport.from_counts(tp=tp, fp=fp, fn=fn, threshold=sigma)
            for sigma, (tp, fp, fn) in totals.items()
        ],
        counting=counting_report(count_pairs),
    )
    logger.bind(component="Evaluation").debug(
        f"step {step}: MAE={report.counting.mae:.3f} "
        + " ".join(f"F1@{r.threshold:g}={r.f1:.3f}" for r in report.localization)
    )
    return report
