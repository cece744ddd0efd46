"""
Subcommand implementations: gen, train, eval, match, ablate.

Every command writes a manifest.json into its output directory that echoes the
command line, the validated config, the format versions and the artifacts.
"""

import csv
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

from loguru import logger
from pydantic import BaseModel

from app.config import SynthConfig, TrainConfig, apply_overrides, load_config, settings
from app.errors import ArtifactIOError, ConfigError, ConsistentPointError
from app.logging_setup import add_run_log, remove_run_log
from app.models import EvaluationReport, MatchResult, RunManifest, RunReport, SweepRow
from matching.cost import build_cost_matrix
from matching.hungarian import hungarian_match
from metrics.evaluation import evaluate_scenes
from net.checkpoint import FORMAT_VERSION as PARAMS_VERSION
from net.checkpoint import load_params
from net.proposal_net import forward
from synth.generator import SceneGenerator
from synth.storage import FORMAT_VERSION as DATASET_VERSION
from synth.storage import SPLITS, SyntheticDataset, load_dataset_dir, save_dataset_dir
from training.state import FORMAT_VERSION as STATE_VERSION
from training.state import load_checkpoint
from training.trainer import VARIANTS, MeanTeacherTrainer, apply_variant

FORMAT_VERSIONS = {"dataset": DATASET_VERSION, "params": PARAMS_VERSION, "trainer_state": STATE_VERSION}

ABLATION_AXES: Dict[str, Tuple[Any, ...]] = {
    "k_aux": (0, 4, 16),
    "lam": (0.01, 0.05, 0.1, 0.5, 1.0),
    "variant": VARIANTS,
}

PathLike = Union[str, Path]

cli_logger = logger.bind(component="CLI")


def default_out_dir(subcommand: str) -> Path:
    """Output directory under the configured root (CPOINT_OUTPUT_ROOT)."""
    return Path(settings.output_root) / subcommand


def _ensure_dir(path: PathLike) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"Cannot create output directory {out}: {e}") from e
    return out


def _write_json(path: Path, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> None:
    text = payload.model_dump_json(indent=2) if isinstance(payload, BaseModel) else json.dumps(payload, indent=2)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}") from e


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    try:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}") from e


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@contextmanager
def run_manifest(
    out_dir: Path,
    subcommand: str,
    argv: Sequence[str],
    config: Optional[BaseModel] = None,
    seed: Optional[int] = None
) -> Iterator[RunManifest]:
    """
    Record a command in out_dir/manifest.json and mirror its log into run.log.

    The manifest is written as "running" on entry and rewritten with the final
    status and artifacts on exit.
    """
    manifest = RunManifest(
        command=list(argv),
        subcommand=subcommand,
        config=config.model_dump(mode="json") if config is not None else None,
        format_versions=FORMAT_VERSIONS,
        seed=seed,
        started_at=_now(),
    )
    manifest_path = out_dir / "manifest.json"
    _write_json(manifest_path, manifest)
    sink = add_run_log(out_dir)
    try:
        yield manifest
        manifest.status = "succeeded"
    except BaseException:
        manifest.status = "failed"
        raise
    finally:
        manifest.finished_at = _now()
        remove_run_log(sink)
        _write_json(manifest_path, manifest)


# gen
def cmd_gen(
    config_path: Optional[PathLike],
    out_dir: Optional[PathLike] = None,
    argv: Sequence[str] = (),
    **overrides: Any
) -> Dict[str, str]:
    """
    Generate a synthetic dataset.

    Args:
        config_path: SynthConfig JSON, or None for defaults
        out_dir: Dataset directory
        argv: Command line echoed into the manifest
        **overrides: Config fields that win over the file

    Returns:
        Artifact name to path
    """
    config = apply_overrides(load_config(config_path, SynthConfig), **overrides)
    out = _ensure_dir(out_dir or default_out_dir("gen"))
    with run_manifest(out, "gen", argv, config, config.seed) as manifest:
        labeled, unlabeled, holdout = SceneGenerator(config).generate()
        dataset = SyntheticDataset(labeled=labeled, unlabeled=unlabeled, holdout=holdout, config=config)
        artifacts = save_dataset_dir(dataset, out)
        manifest.artifacts = artifacts
    cli_logger.info(f"Generated {len(labeled)}/{len(unlabeled)}/{len(holdout)} scenes into {out}")
    return artifacts


# train
def resolve_train_config(
    config_path: Optional[PathLike],
    labeled_only: bool = False,
    no_pa: bool = False,
    no_iuc: bool = False,
    **overrides: Any
) -> TrainConfig:
    """Load a TrainConfig and apply the ablation flags and overrides."""
    config = load_config(config_path, TrainConfig)
    if config_path is None and overrides.get("seed") is None:
        overrides["seed"] = settings.default_seed
    flags: Dict[str, Any] = {}
    if labeled_only:
        flags["lam"] = 0.0
    if no_pa:
        flags["pa.k_aux"] = 0
    if no_iuc:
        flags["iuc"] = False
    # ablation flags win over explicit values for the same field
    return apply_overrides(config, **{**overrides, **flags})


def train_into(
    config: TrainConfig,
    dataset: SyntheticDataset,
    out_dir: Path,
    argv: Sequence[str] = (),
    resume: Optional[PathLike] = None
) -> RunReport:
    """One training run with its own manifest, log and artifacts."""
    out = _ensure_dir(out_dir)
    with run_manifest(out, "train", argv, config, config.seed) as manifest:
        state = load_checkpoint(resume) if resume is not None else None
        trainer = MeanTeacherTrainer(config)
        try:
            _, report = trainer.run(dataset, out, state)
        finally:
            manifest.artifacts = {
                name: str(out / file_name)
                for name, file_name in {
                    "report": "report.json",
                    "student": "student.params",
                    "teacher": "teacher.params",
                    "trainer_state": "trainer.ckpt",
                }.items()
                if (out / file_name).exists()
            }
    return report


def cmd_train(
    config_path: Optional[PathLike],
    dataset_dir: PathLike,
    out_dir: Optional[PathLike] = None,
    labeled_only: bool = False,
    no_pa: bool = False,
    no_iuc: bool = False,
    resume: Optional[PathLike] = None,
    argv: Sequence[str] = (),
    **overrides: Any
) -> RunReport:
    """
    Train one model.

    Args:
        config_path: TrainConfig JSON, or None for defaults
        dataset_dir: Directory written by cmd_gen
        out_dir: Run directory
        labeled_only: Set lambda to 0
        no_pa: Set K to 0
        no_iuc: Give every pseudo-point weight 1
        resume: Trainer checkpoint to continue from
        argv: Command line echoed into the manifest
        **overrides: Config fields that win over the file

    Returns:
        The run report
    """
    config = resolve_train_config(config_path, labeled_only, no_pa, no_iuc, **overrides)
    dataset = load_dataset_dir(dataset_dir)
    return train_into(config, dataset, Path(out_dir or default_out_dir("train")), argv, resume)


# eval
def evaluation_table(report: EvaluationReport) -> Tuple[List[str], List[List[Any]]]:
    """CSV rows: one per sigma plus one counting row."""
    header = ["metric", "threshold", "tp", "fp", "fn", "precision", "recall", "f1", "mae", "mse"]
    rows: List[List[Any]] = [
        ["localization", r.threshold, r.tp, r.fp, r.fn, r.precision, r.recall, r.f1, "", ""]
        for r in report.localization
    ]
    rows.append(["counting", "", "", "", "", "", "", "", report.counting.mae, report.counting.mse])
    return header, rows


def cmd_eval(
    checkpoint: PathLike,
    dataset_dir: PathLike,
    sigmas: Sequence[float] = (4.0, 8.0),
    out_dir: Optional[PathLike] = None,
    split: str = "holdout",
    score_threshold: float = 0.5,
    argv: Sequence[str] = ()
) -> EvaluationReport:
    """
    Evaluate a parameter checkpoint on one dataset split.

    Returns:
        Localization rows per sigma and the counting row (also written as eval.json / eval.csv)
    """
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; choose from {', '.join(SPLITS)}")
    if not sigmas or any(s <= 0 for s in sigmas):
        raise ConfigError(f"sigma list must be non-empty and positive, got {list(sigmas)}")
    out = _ensure_dir(out_dir or default_out_dir("eval"))
    with run_manifest(out, "eval", argv) as manifest:
        params = load_params(checkpoint)
        dataset = load_dataset_dir(dataset_dir)
        report = evaluate_scenes(params, dataset.split(split), sigmas, score_threshold, model_name=Path(checkpoint).stem)
        _write_json(out / "eval.json", report)
        header, rows = evaluation_table(report)
        _write_csv(out / "eval.csv", header, rows)
        manifest.artifacts = {"json": str(out / "eval.json"), "csv": str(out / "eval.csv")}
    return report


# match
def cmd_match(
    checkpoint: PathLike,
    dataset_dir: PathLike,
    scene_id: str,
    out_path: Optional[PathLike] = None,
    score_weight: float = 0.05
) -> Dict[str, Any]:
    """
    Dump the Hungarian assignment of one scene's ground truth to the model's proposals.

    Returns:
        JSON-ready dict with the assignment, its cost and the negative set
    """
    params = load_params(checkpoint)
    dataset = load_dataset_dir(dataset_dir)
    scene = next(
        (s for name in SPLITS for s in dataset.split(name) if s.scene_id == scene_id),
        None,
    )
    if scene is None:
        raise ConfigError(f"scene {scene_id!r} not found in {dataset_dir}")
    if scene.gt_points is None:
        raise ConfigError(f"scene {scene_id!r} has no points to match")

    proposals, _ = forward(params, scene.field)
    match: MatchResult = hungarian_match(build_cost_matrix(scene.gt_points, proposals, score_weight))
    payload = {
        "scene_id": scene_id,
        "score_weight": score_weight,
        "total_cost": match.total_cost,
        "assignment": [
            {
                "target": i,
                "target_position": scene.gt_points.coords[i].tolist(),
                "proposal": int(j),
                "proposal_position": proposals.positions[j].tolist(),
                "proposal_score": float(proposals.scores[j]),
            }
            for i, j in enumerate(match.assignment)
        ],
        "negative_count": int(match.negative_set.size),
        "n_proposals": match.n_proposals,
    }
    if out_path is not None:
        _write_json(Path(out_path), payload)
    return payload


# ablate
def parse_axis_value(axis: str, raw: Any) -> Any:
    """Coerce a sweep value given on the command line."""
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {', '.join(ABLATION_AXES)}")
    try:
        if axis == "k_aux":
            return int(raw)
        if axis == "lam":
            return float(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value {raw!r} for axis {axis}") from e
    if raw not in VARIANTS:
        raise ConfigError(f"unknown variant {raw!r}; choose from {', '.join(VARIANTS)}")
    return raw


def config_for_value(base: TrainConfig, axis: str, value: Any, seed: int) -> TrainConfig:
    if axis == "variant":
        config = apply_variant(base, value)
    elif axis == "k_aux":
        config = apply_overrides(base, **{"pa.k_aux": value})
    else:
        config = apply_overrides(base, lam=value)
    return apply_overrides(config, seed=seed)


def _sweep_row(axis: str, value: Any, seed: int, run_dir: Path, report: RunReport) -> SweepRow:
    final = report.final_metrics()
    return SweepRow(
        axis=axis,
        value=str(value),
        seed=seed,
        mae=final.counting.mae,
        mse=final.counting.mse,
        f1={f"{r.threshold:g}": r.f1 for r in final.localization},
        run_dir=str(run_dir),
    )


def run_ablation_point(
    base: TrainConfig,
    dataset_dir: str,
    axis: str,
    value: Any,
    seed: int,
    run_dir: str
) -> SweepRow:
    """One sweep run; failures become a failed row instead of an exception."""
    try:
        config = config_for_value(base, axis, value, seed)
        report = train_into(config, load_dataset_dir(dataset_dir), Path(run_dir), ["ablate", axis, str(value)])
        return _sweep_row(axis, value, seed, Path(run_dir), report)
    except ConsistentPointError as e:
        logger.bind(component="Ablation").error(f"{axis}={value} seed={seed} failed: {e}")
        return SweepRow(axis=axis, value=str(value), seed=seed, status="failed", run_dir=run_dir, error=str(e))


def median_rows(rows: Sequence[SweepRow]) -> List[SweepRow]:
    """Median over seeds of every value that has at least one successful run."""
    medians = []
    for value in dict.fromkeys(r.value for r in rows):
        done = [r for r in rows if r.value == value and r.status == "succeeded"]
        if not done:
            continue
        medians.append(SweepRow(
            axis=done[0].axis,
            value=value,
            status="median",
            mae=statistics.median(r.mae for r in done),
            mse=statistics.median(r.mse for r in done),
            f1={key: statistics.median(r.f1[key] for r in done) for key in done[0].f1},
        ))
    return medians


def sweep_table(rows: Sequence[SweepRow], sigmas: Sequence[float]) -> Tuple[List[str], List[List[Any]]]:
    keys = [f"{s:g}" for s in sigmas]
    header = ["value", "mae", "mse"] + [f"f1_{k}" for k in keys] + ["seed", "status"]
    table = [
        [r.value, r.mae, r.mse] + [r.f1.get(k) for k in keys] + [r.seed, r.status]
        for r in rows
    ]
    return header, table


def cmd_ablate(
    config_path: Optional[PathLike],
    dataset_dir: PathLike,
    axis: str,
    out_dir: Optional[PathLike] = None,
    values: Optional[Sequence[Any]] = None,
    seeds: Optional[Sequence[int]] = None,
    parallel: bool = False,
    workers: Optional[int] = None,
    argv: Sequence[str] = (),
    **overrides: Any
) -> List[SweepRow]:
    """
    Sweep one axis with a full training run per value and seed.

    Args:
        config_path: Base TrainConfig JSON
        dataset_dir: Directory written by cmd_gen
        axis: k_aux, lam or variant
        out_dir: Sweep directory; each run gets a subdirectory
        values: Values to sweep (defaults per axis)
        seeds: Training seeds; more than one adds median rows
        parallel: Run points in a process pool
        workers: Pool size
        argv: Command line echoed into the manifest
        **overrides: Config fields that win over the file

    Returns:
        One row per run, followed by the median rows when several seeds are swept
    """
    if axis == "lambda":
        axis = "lam"
    sweep_values = [parse_axis_value(axis, v) for v in (values or ABLATION_AXES.get(axis, ()))]
    if not sweep_values:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {', '.join(ABLATION_AXES)}")
    base = resolve_train_config(config_path, **overrides)
    seed_list = list(seeds) if seeds else [base.seed]
    if not Path(dataset_dir, "index.json").exists():
        raise ArtifactIOError(f"Dataset not found: {Path(dataset_dir, 'index.json')} does not exist")
    out = _ensure_dir(out_dir or default_out_dir("ablate"))

    points = [
        (value, seed, str(out / f"{axis}={value}" / f"seed-{seed}"))
        for value in sweep_values
        for seed in seed_list
    ]
    with run_manifest(out, "ablate", argv, base, seed_list[0]) as manifest:
        cli_logger.info(f"Sweeping {axis} over {sweep_values} with seeds {seed_list} ({len(points)} runs)")
        if parallel:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(run_ablation_point, base, str(dataset_dir), axis, value, seed, run_dir)
                    for value, seed, run_dir in points
                ]
                rows = [future.result() for future in futures]
        else:
            rows = [
                run_ablation_point(base, str(dataset_dir), axis, value, seed, run_dir)
                for value, seed, run_dir in points
            ]
        if len(seed_list) > 1:
            rows = rows + median_rows(rows)

        _write_json(out / "sweep.json", [row.model_dump(mode="json") for row in rows])
        header, table = sweep_table(rows, base.eval_sigmas)
        _write_csv(out / "sweep.csv", header, table)
        manifest.artifacts = {"json": str(out / "sweep.json"), "csv": str(out / "sweep.csv")}

    failed = sum(1 for r in rows if r.status == "failed")
    if failed:
        cli_logger.warning(f"{failed} of {len(points)} sweep runs failed")
    return rows
