"""
Command-line entry point for the Consistent-Point toolkit.

    python -m app.main gen    --config synth.json --out data/
    python -m app.main train  --config train.json --dataset data/ --out runs/full
    python -m app.main eval   --checkpoint runs/full/teacher.params --dataset data/ --sigmas 4 8
    python -m app.main match  --checkpoint runs/full/teacher.params --dataset data/ --scene holdout-00000
    python -m app.main ablate --config train.json --dataset data/ --axis k_aux --seeds 0 1 2
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from loguru import logger

from app.commands import ABLATION_AXES, cmd_ablate, cmd_eval, cmd_gen, cmd_match, cmd_train
from app.config import settings
from app.errors import ConsistentPointError
from app.logging_setup import configure_logging

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpoint",
        description="Semi-supervised point localization with consistent pseudo-points",
    )
    parser.add_argument("--log-level", default=None, help=f"Stderr log level (default {settings.log_level})")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic dataset")
    gen.add_argument("--config", help="SynthConfig JSON file")
    gen.add_argument("--out", help="Dataset directory")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--n-scenes", type=int)
    gen.add_argument("--labeled-ratio", type=float)

    train = sub.add_parser("train", help="Train a student/teacher pair")
    train.add_argument("--config", help="TrainConfig JSON file")
    train.add_argument("--dataset", required=True, help="Dataset directory")
    train.add_argument("--out", help="Run directory")
    train.add_argument("--labeled-only", action="store_true", help="Ignore unlabeled scenes (lambda = 0)")
    train.add_argument("--no-pa", action="store_true", help="Disable Position Aggregation (K = 0)")
    train.add_argument("--no-iuc", action="store_true", help="Disable uncertainty calibration (w = 1)")
    train.add_argument("--resume", help="Trainer checkpoint to continue from")
    train.add_argument("--steps", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--lam", type=float)
    train.add_argument("--k-aux", type=int)

    evaluate = sub.add_parser("eval", help="Evaluate a parameter checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--dataset", required=True)
    evaluate.add_argument("--sigmas", type=float, nargs="+", default=[4.0, 8.0])
    evaluate.add_argument("--split", default="holdout")
    evaluate.add_argument("--score-threshold", type=float, default=0.5)
    evaluate.add_argument("--out", help="Directory for eval.json and eval.csv")

    match = sub.add_parser("match", help="Dump one scene's proposal-target assignment as JSON")
    match.add_argument("--checkpoint", required=True)
    match.add_argument("--dataset", required=True)
    match.add_argument("--scene", required=True, help="Scene id")
    match.add_argument("--score-weight", type=float, default=0.05)
    match.add_argument("--out", help="JSON output file (stdout when omitted)")

    ablate = sub.add_parser("ablate", help="Sweep one ablation axis")
    ablate.add_argument("--config", help="Base TrainConfig JSON file")
    ablate.add_argument("--dataset", required=True)
    ablate.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES) + ["lambda"])
    ablate.add_argument("--values", nargs="+", help="Override the default values of the axis")
    ablate.add_argument("--seeds", type=int, nargs="+", help="Training seeds; several add median rows")
    ablate.add_argument("--out", help="Sweep directory")
    ablate.add_argument("--steps", type=int)
    ablate.add_argument("--parallel", action="store_true", help="Run sweep points in a process pool")
    ablate.add_argument("--workers", type=int)
    return parser


def dispatch(args: argparse.Namespace, argv: List[str]) -> None:
    if args.command == "gen":
        cmd_gen(
            args.config, args.out, argv,
            seed=args.seed, n_scenes=args.n_scenes, labeled_ratio=args.labeled_ratio,
        )
    elif args.command == "train":
        report = cmd_train(
            args.config, args.dataset, args.out,
            labeled_only=args.labeled_only, no_pa=args.no_pa, no_iuc=args.no_iuc,
            resume=args.resume, argv=argv,
            steps=args.steps, seed=args.seed, lam=args.lam, **{"pa.k_aux": args.k_aux},
        )
        final = report.final_metrics()
        if final is not None:
            print(final.model_dump_json(indent=2))
    elif args.command == "eval":
        report = cmd_eval(
            args.checkpoint, args.dataset, args.sigmas, args.out,
            split=args.split, score_threshold=args.score_threshold, argv=argv,
        )
        print(report.model_dump_json(indent=2))
    elif args.command == "match":
        payload = cmd_match(args.checkpoint, args.dataset, args.scene, args.out, args.score_weight)
        if args.out is None:
            print(json.dumps(payload, indent=2))
    elif args.command == "ablate":
        rows = cmd_ablate(
            args.config, args.dataset, args.axis, args.out,
            values=args.values, seeds=args.seeds, parallel=args.parallel, workers=args.workers,
            argv=argv, steps=args.steps,
        )
        for row in rows:
            print(row.model_dump_json())


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and map failures to exit codes."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level, settings.log_file)
    try:
        dispatch(args, argv)
    except ConsistentPointError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except Exception:
        logger.exception("Unexpected failure")
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
