"""Command-line entry point: gen-data, train, eval, gradcheck, ablate, serve."""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from mstformer.config import (
    configure_logging,
    dump_experiment_config,
    get_settings,
    load_experiment_config,
    parse_overrides,
)
from mstformer.exceptions import ConfigurationError, MSTFormerError
from mstformer.schemas.config import ExperimentConfig

logger = logging.getLogger("mstformer.cli")

DATASET_FILE = "dataset.mstd"
MANIFEST_FILE = "splits.tsv"
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _experiment(args: argparse.Namespace, fallback: Optional[Path] = None) -> ExperimentConfig:
    path = args.config or (fallback if fallback is not None and fallback.is_file() else None)
    return load_experiment_config(path, parse_overrides(args.set or []))


def _data_paths(data_dir: str):
    root = Path(data_dir)
    return root / DATASET_FILE, root / MANIFEST_FILE


def cmd_gen_data(args: argparse.Namespace) -> int:
    from mstformer.services.data_synth import assign_splits, generate, write_manifest
    from mstformer.services.dataset_io import save_dataset

    config = _experiment(args)
    dataset_path, manifest_path = _data_paths(args.out)
    samples = generate(config.gen)
    save_dataset(samples, dataset_path)
    splits = assign_splits(samples, config.gen)
    write_manifest(splits, manifest_path)
    dump_experiment_config(config, Path(args.out) / "config.cfg")
    counts = {name: splits.count(name) for name in ("train", "val", "test")}
    logger.info(f"✅ Dataset ready in {args.out}: {counts}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from mstformer.services.trainer import train

    config = _experiment(args)
    dataset_path, manifest_path = _data_paths(args.data)
    result = train(config, dataset_path, manifest_path, args.out)
    logger.info(f"✅ Trained {result.total_steps} steps; outputs in {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from mstformer.services.trainer import CONFIG_FILE, evaluate

    checkpoint = Path(args.checkpoint)
    config = _experiment(args, fallback=checkpoint.parent / CONFIG_FILE)
    dataset_path, manifest_path = _data_paths(args.data)
    report = evaluate(checkpoint, config, dataset_path, manifest_path, split=args.split)
    print(report.model_dump_json())
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from mstformer.core.gradcheck import RELATIVE_FLOOR
    from mstformer.services.gradcheck_suite import TOLERANCE, run_gradcheck

    results = run_gradcheck(seed=args.seed, per_param=args.per_param)
    print(
        f"tolerance: max |a - n| / max(|a|, |n|, {RELATIVE_FLOOR:g}) < {TOLERANCE:g} "
        f"(gradients below {RELATIVE_FLOOR:g} are held to an absolute error of {TOLERANCE * RELATIVE_FLOOR:g})"
    )
    for result in results:
        status = "ok" if result.passed else "FAIL"
        print(f"{status:4}  {result.max_rel_error:.3e}  {result.name}")
    return 0 if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_ablate(args: argparse.Namespace) -> int:
    from mstformer.services.ablation import run_ablation
    from mstformer.services.trainer import load_split_clips

    config = _experiment(args)
    dataset_path, manifest_path = _data_paths(args.data)
    clips = load_split_clips(
        dataset_path, manifest_path, ("train", "val", "test"), config.train.clip_length, config.train.clip_stride
    )
    _, summaries = run_ablation(
        args.grid, config, clips["train"], clips["val"], clips["test"], args.seeds, args.out
    )
    for summary in summaries:
        print(summary.model_dump_json())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.checkpoint:
        os.environ["MST_CHECKPOINT_PATH"] = args.checkpoint
    if args.config:
        os.environ["MST_CONFIG_PATH"] = args.config
    get_settings.cache_clear()
    uvicorn.run("mstformer.main:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mstformer", description=__doc__)
    parser.add_argument("--log-level", default=None, help="Overrides MST_LOG_LEVEL")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="Override one config key (repeatable)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="Generate a synthetic dataset")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.set_defaults(handler=cmd_gen_data)

    tr = sub.add_parser("train", parents=[common], help="Train on a generated dataset")
    tr.add_argument("--data", required=True, help="Directory written by gen-data")
    tr.add_argument("--out", required=True, help="Run directory for checkpoints and logs")
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", parents=[common], help="Score a checkpoint on one split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.set_defaults(handler=cmd_eval)

    gc = sub.add_parser("gradcheck", help="Compare analytic and finite-difference gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--per-param", type=int, default=3, help="Sampled entries per model parameter")
    gc.set_defaults(handler=cmd_gradcheck)

    ab = sub.add_parser("ablate", parents=[common], help="Run an ablation grid over seeds")
    ab.add_argument("--grid", choices=("components", "full-components", "scales", "tau"), default="components")
    ab.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ab.add_argument("--data", required=True)
    ab.add_argument("--out", required=True)
    ab.set_defaults(handler=cmd_ablate)

    sv = sub.add_parser("serve", help="Run the forecast HTTP service")
    sv.add_argument("--checkpoint")
    sv.add_argument("--config")
    sv.add_argument("--host", default="0.0.0.0")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    if args.log_level:
        settings = settings.model_copy(update={"log_level": args.log_level})
    configure_logging(settings)
    try:
        return args.handler(args)
    except MSTFormerError as exc:
        logger.error(f"❌ {type(exc).__name__}: {exc}")
        return exc.exit_code
    except ValidationError as exc:
        logger.error(f"❌ Invalid configuration: {exc}")
        return ConfigurationError.exit_code
    except OSError as exc:
        logger.error(f"❌ {exc}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
