"""Trainer entrypoint. Exit codes: 0 success, 2 configuration error,
3 data error (the subprocess contract the evaluator's tooling relies on)."""
from __future__ import annotations

import argparse
import json
import sys

from .config import TrainConfig, TrainerConfigError, TrainerDataError, desk_preset, full_scale_preset
from .data import save_predictions
from .loop import finetune, predict

PRESETS = {"desk": desk_preset, "full": full_scale_preset}


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    if args.config:
        config = TrainConfig.load(args.config)
    else:
        config = PRESETS[args.preset](model_family=args.model_family)
    for name in (
        "batch_size", "weight_decay", "max_epochs", "patience", "folds",
        "learning_rate", "seed", "max_seq_len", "final_epochs",
    ):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    config.check()
    return config


def cmd_finetune(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    artifact = finetune(config, args.dataset, args.run_dir)
    print(
        json.dumps(
            {
                "run_dir": str(artifact.run_dir),
                "epochs_per_fold": artifact.epochs_per_fold,
                "skipped_folds": artifact.skipped_folds,
                "truncated": artifact.truncated,
            }
        )
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    records = predict(args.run_dir, args.dataset)
    save_predictions(records, args.out)
    print(f"wrote {len(records)} predictions -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iac-trainer",
        description="Fine-tune compact sequence classifiers on IaC snippet datasets",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("finetune", help="cross-validated training run")
    p.add_argument("--dataset", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    p.add_argument("--model-family", default="code-bert-like",
                   choices=("code-bert-like", "long-context-like"))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-seq-len", type=int)
    p.add_argument("--final-epochs", type=int)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="emit predictions JSONL from a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainerConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainerDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
