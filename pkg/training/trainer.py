"""
Mean-teacher training loop with consistent pseudo-labels.

One step: supervised loss on augmented labeled crops, teacher pseudo-labels on
clean unlabeled crops, unlabeled loss on the student's (possibly flipped) view,
one Adam update of the student, then an EMA update of the teacher.
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from app.config import TrainConfig, apply_overrides
from app.errors import ArtifactIOError, ContractViolation, NumericalAbort
from app.models import (
    ConsistencyRow,
    LossBreakdown,
    LossRow,
    PointSet,
    RunReport,
    Scene,
)
from consistency.drift import pseudo_label_drift
from consistency.pseudo_points import PseudoLabeler
from losses.point_losses import average_breakdowns, combine, labeled_loss, unlabeled_loss
from matching.cost import build_cost_matrix
from matching.hungarian import hungarian_match
from metrics.evaluation import evaluate_scenes
from net.checkpoint import save_params
from net.proposal_net import backward, forward
from synth.storage import SyntheticDataset
from training.augment import flip_pseudo_labels, labeled_view, unlabeled_view
from training.optimizer import AdamOptimizer, ema_update
from training.state import TrainerState, save_checkpoint

VARIANTS = ("labeled_only", "baseline", "pa", "pa_iuc")


def variant_name(config: TrainConfig) -> str:
    """Which ablation arm a configuration corresponds to."""
    if config.lam == 0:
        return "labeled_only"
    if config.pa.k_aux > 0:
        return "pa_iuc" if config.iuc else "pa"
    return "iuc" if config.iuc else "baseline"


def apply_variant(config: TrainConfig, variant: str, k_aux: int = 4) -> TrainConfig:
    """
    Switch a configuration to one ablation arm.

    Args:
        config: Base configuration
        variant: One of labeled_only, baseline, pa, pa_iuc
        k_aux: Auxiliary point count used when PA is on and the base has it off

    Returns:
        The adjusted configuration
    """
    if variant not in VARIANTS:
        raise ContractViolation(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    k_on = config.pa.k_aux or k_aux
    update = {
        "labeled_only": {"lam": 0.0},
        "baseline": {"pa.k_aux": 0, "iuc": False},
        "pa": {"pa.k_aux": k_on, "iuc": False},
        "pa_iuc": {"pa.k_aux": k_on, "iuc": True},
    }[variant]
    return apply_overrides(config, **update)


class MeanTeacherTrainer:
    """Runs training steps and whole runs for one configuration."""

    def __init__(self, config: TrainConfig):
        if config.crop_size < config.model.patch_size:
            raise ContractViolation(
                f"crop_size {config.crop_size} is smaller than patch_size {config.model.patch_size}"
            )
        self.config = config
        self.optimizer = AdamOptimizer(config.optimizer)
        self.labeler = PseudoLabeler(config.pa, calibrate=config.iuc, threshold=config.pseudo_threshold)
        self.logger = logger.bind(component="MeanTeacherTrainer")

    def initial_state(self) -> TrainerState:
        return TrainerState.fresh(self.config)

    def _labeled_part(self, scene: Scene, state: TrainerState, rng: np.random.Generator) -> LossBreakdown:
        cfg = self.config
        field, points = labeled_view(scene, cfg, rng)
        proposals, cache = forward(state.student, field)
        match = hungarian_match(build_cost_matrix(points, proposals, cfg.score_weight))
        part = labeled_loss(points, proposals, match, cfg.lambda1, cfg.lambda2)
        return part.with_param_grad(backward(cache, part.grad_positions, part.grad_scores))

    def _unlabeled_part(
        self,
        scene: Scene,
        state: TrainerState,
        rng: np.random.Generator
    ) -> Tuple[LossBreakdown, int]:
        cfg = self.config
        view = unlabeled_view(scene, cfg, rng)
        teacher_proposals, _ = forward(state.teacher, view.clean)
        pseudo = flip_pseudo_labels(self.labeler.label(teacher_proposals), view.width, view.flipped)

        proposals, cache = forward(state.student, view.student)
        match = hungarian_match(build_cost_matrix(pseudo.points, proposals, cfg.score_weight))
        part = unlabeled_loss(pseudo, proposals, match, cfg.lambda1, cfg.lambda2, cfg.weight_loc_loss)
        return part.with_param_grad(backward(cache, part.grad_positions, part.grad_scores)), len(pseudo)

    def train_step(
        self,
        state: TrainerState,
        labeled_batch: Sequence[Scene],
        unlabeled_batch: Sequence[Scene] = ()
    ) -> Tuple[TrainerState, LossRow]:
        """
        Advance the state by one update.

        Args:
            state: Current trainer state (left untouched)
            labeled_batch: At least one labeled scene
            unlabeled_batch: Unlabeled scenes; empty means supervised-only

        Returns:
            The next state and the step's loss row

        Raises:
            NumericalAbort: The loss or gradient is not finite
        """
        if not labeled_batch:
            raise ContractViolation("a training step needs at least one labeled scene")
        cfg = self.config
        rng = state.generator()

        labeled = average_breakdowns([self._labeled_part(scene, state, rng) for scene in labeled_batch])

        unlabeled: Optional[LossBreakdown] = None
        n_pseudo = 0
        if unlabeled_batch:
            parts = []
            for scene in unlabeled_batch:
                part, count = self._unlabeled_part(scene, state, rng)
                parts.append(part)
                n_pseudo += count
            unlabeled = average_breakdowns(parts)

        combined = combine(labeled, unlabeled, cfg.lam)
        grad = combined.param_grad
        if not np.isfinite(combined.total) or grad is None or not np.all(np.isfinite(grad)):
            raise NumericalAbort(
                f"non-finite loss at step {state.step + 1}",
                {
                    "step": state.step + 1,
                    "labeled_total": labeled.total,
                    "unlabeled_total": unlabeled.total if unlabeled is not None else None,
                    "clamp_count": labeled.clamp_count + (unlabeled.clamp_count if unlabeled else 0),
                },
            )

        step = state.step + 1
        theta, adam_m, adam_v = self.optimizer.step(state.student.theta, grad, state.adam_m, state.adam_v, step)
        student = state.student.with_theta(theta)
        teacher = state.teacher.with_theta(ema_update(state.teacher.theta, student.theta, cfg.ema_decay))

        clamp_count = labeled.clamp_count + (unlabeled.clamp_count if unlabeled is not None else 0)
        counters = dict(state.counters)
        counters["clamp_count"] = counters.get("clamp_count", 0) + clamp_count
        counters["pseudo_points"] = counters.get("pseudo_points", 0) + n_pseudo

        new_state = state.model_copy(update={
            "student": student,
            "teacher": teacher,
            "adam_m": adam_m,
            "adam_v": adam_v,
            "step": step,
            "rng_state": rng.bit_generator.state,
            "counters": counters,
        })
        row = LossRow(
            step=step,
            total=combined.total,
            labeled_total=labeled.total,
            labeled_loc=labeled.l_loc,
            labeled_cls=labeled.l_cls,
            unlabeled_active=unlabeled is not None,
            unlabeled_total=unlabeled.total if unlabeled is not None else None,
            unlabeled_loc=unlabeled.l_loc if unlabeled is not None else None,
            unlabeled_cls=unlabeled.l_cls if unlabeled is not None else None,
            n_pseudo=n_pseudo,
            clamp_count=clamp_count,
        )
        return new_state, row

    def sample_batches(
        self,
        state: TrainerState,
        dataset: SyntheticDataset
    ) -> Tuple[TrainerState, List[Scene], List[Scene]]:
        """Draw the next labeled and unlabeled batch from the state's generator."""
        cfg = self.config
        rng = state.generator()
        picks = rng.integers(0, len(dataset.labeled), size=cfg.batch_labeled)
        labeled = [dataset.labeled[i] for i in picks]

        unlabeled: List[Scene] = []
        use_unlabeled = (
            cfg.lam > 0
            and cfg.batch_unlabeled > 0
            and dataset.unlabeled
            and state.step >= cfg.warmup_steps
        )
        if use_unlabeled:
            picks = rng.integers(0, len(dataset.unlabeled), size=cfg.batch_unlabeled)
            unlabeled = [dataset.unlabeled[i] for i in picks]
        return state.model_copy(update={"rng_state": rng.bit_generator.state}), labeled, unlabeled

    def probe_pseudo_points(self, state: TrainerState, scene: Scene) -> PointSet:
        """Teacher pseudo-points on a whole probe scene."""
        proposals, _ = forward(state.teacher, scene.field)
        return self.labeler.label(proposals).points

    def run(
        self,
        dataset: SyntheticDataset,
        out_dir: Optional[Union[str, Path]] = None,
        state: Optional[TrainerState] = None
    ) -> Tuple[TrainerState, RunReport]:
        """
        Train until config.steps, evaluating the teacher on the holdout split.

        Args:
            dataset: Labeled, unlabeled and holdout scenes
            out_dir: Where report.json and checkpoints go; None keeps everything in memory
            state: Resume from this state instead of a fresh one

        Returns:
            Final state and the run report
        """
        cfg = self.config
        if not dataset.labeled:
            raise ContractViolation("training needs at least one labeled scene")
        eval_scenes = dataset.holdout or dataset.labeled
        probe = dataset.unlabeled[0] if dataset.unlabeled else None
        out = Path(out_dir) if out_dir is not None else None
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise ArtifactIOError(f"Cannot create run directory {out}: {e}") from e

        state = state or self.initial_state()
        report = RunReport(config=cfg.model_dump(mode="json"), variant=variant_name(cfg))
        previous_probe: Optional[PointSet] = None

        def record_evaluation(current: TrainerState) -> None:
            nonlocal previous_probe
            report.metric_rows.append(evaluate_scenes(
                current.teacher, eval_scenes, cfg.eval_sigmas, cfg.score_threshold, step=current.step
            ))
            if probe is not None:
                points = self.probe_pseudo_points(current, probe)
                drift = pseudo_label_drift(previous_probe, points) if previous_probe is not None else None
                report.consistency_rows.append(ConsistencyRow(step=current.step, n_pseudo=len(points), drift=drift))
                previous_probe = points
            final = report.metric_rows[-1]
            self.logger.info(
                f"step {current.step}/{cfg.steps}: MAE={final.counting.mae:.3f} "
                + " ".join(f"F1@{r.threshold:g}={r.f1:.3f}" for r in final.localization)
            )

        self.logger.info(
            f"Training variant={report.variant} from step {state.step} to {cfg.steps} "
            f"({len(dataset.labeled)} labeled, {len(dataset.unlabeled)} unlabeled)"
        )
        record_evaluation(state)
        while state.step < cfg.steps:
            before = state
            state, labeled_batch, unlabeled_batch = self.sample_batches(state, dataset)
            try:
                state, row = self.train_step(state, labeled_batch, unlabeled_batch)
            except NumericalAbort as e:
                self.logger.error(f"Aborting run: {e}")
                report.aborted = True
                report.abort_reason = str(e)
                # resuming must replay the failed batch
                self._finish(before, report, out)
                raise
            report.loss_rows.append(row)
            if state.step % cfg.eval_every == 0 or state.step == cfg.steps:
                record_evaluation(state)

        self._finish(state, report, out)
        return state, report

    def _finish(self, state: TrainerState, report: RunReport, out: Optional[Path]) -> None:
        report.steps_completed = state.step
        report.diagnostics = dict(state.counters)
        if out is None:
            return
        paths: Dict[str, Path] = {
            "student": out / "student.params",
            "teacher": out / "teacher.params",
            "trainer_state": out / "trainer.ckpt",
        }
        save_params(state.student, paths["student"])
        save_params(state.teacher, paths["teacher"])
        save_checkpoint(state, paths["trainer_state"])
        report.checkpoints = {name: path.name for name, path in paths.items()}
        report_path = out / "report.json"
        try:
            report_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        except OSError as e:
            raise ArtifactIOError(f"Cannot write run report {report_path}: {e}") from e
        self.logger.info(f"Wrote {report_path}")


def train_step(
    state: TrainerState,
    labeled_batch: Sequence[Scene],
    unlabeled_batch: Sequence[Scene],
    config: TrainConfig
) -> Tuple[TrainerState, LossRow]:
    """Convenience function: one update with a throwaway trainer."""
    return MeanTeacherTrainer(config).train_step(state, labeled_batch, unlabeled_batch)


def run_training(
    dataset: SyntheticDataset,
    config: TrainConfig,
    out_dir: Optional[Union[str, Path]] = None,
    state: Optional[TrainerState] = None
) -> Tuple[TrainerState, RunReport]:
    """Convenience function: a whole run."""
    return MeanTeacherTrainer(config).run(dataset, out_dir, state)
