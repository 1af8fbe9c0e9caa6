"""Command-line interface.

Subcommands: synth, extract, split, train, predict, eval, ablate.
Option precedence: explicit CLI flags beat values from --config (a JSON
file of option-name: value pairs), which beat built-in defaults. The
resolved configuration lands in each command's .run.json sidecar.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import Split
from .errors import PatchiqError
from .multires import MultiresConfig
from .pipeline import (
    run_ablate,
    run_eval,
    run_extract,
    run_predict,
    run_split,
    run_synth,
    run_train,
)
from .synth import SynthConfig
from .train import TrainConfig

logger = logging.getLogger(__name__)

_TRAIN_DEFAULTS = TrainConfig()
_SYNTH_DEFAULTS = SynthConfig()

# (flag, type, default, help) per command; None defaults mean "required".
_TRAIN_OPTS = [
    ("lr0", float, _TRAIN_DEFAULTS.lr0, "initial learning rate"),
    ("lr_decay", float, _TRAIN_DEFAULTS.lr_decay, "per-epoch lr multiplier"),
    ("epochs", int, _TRAIN_DEFAULTS.epochs, "training epochs"),
    ("batch_size", int, _TRAIN_DEFAULTS.batch_size, "sequences per batch"),
    ("l2", float, _TRAIN_DEFAULTS.l2, "L2 decay on weight matrices"),
    ("beta1", float, _TRAIN_DEFAULTS.beta1, "Adam gradient decay"),
    ("beta2", float, _TRAIN_DEFAULTS.beta2, "Adam squared-gradient decay"),
    ("huber_delta", float, _TRAIN_DEFAULTS.huber_delta, "Huber transition point"),
    ("dropout", float, _TRAIN_DEFAULTS.dropout, "dropout rate"),
    ("seed", int, _TRAIN_DEFAULTS.seed, "training seed"),
]


def _add_train_opts(sub: argparse.ArgumentParser) -> None:
    for name, typ, default, help_text in _TRAIN_OPTS:
        sub.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            type=typ,
            default=None,
            help=f"{help_text} (default {default})",
        )


def _resolve(args: argparse.Namespace, config: dict, name: str, default):
    """CLI flag > config file > default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _train_config(args, config) -> TrainConfig:
    kwargs = {
        name: _resolve(args, config, name, default)
        for name, _typ, default, _help in _TRAIN_OPTS
    }
    return TrainConfig(**kwargs)


def _multires_config(args, config) -> MultiresConfig:
    return MultiresConfig(
        patch_size=_resolve(args, config, "patch_size", 224),
        enable_low_scale=_resolve(args, config, "multires", "on") == "on",
        strict_low_scale=bool(_resolve(args, config, "strict_low_scale", False)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchiq",
        description="Patch-sequence image quality pipeline",
    )
    parser.add_argument("--config", type=Path, help="JSON file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic graded dataset")
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p.add_argument(
        "--count", type=int, default=None,
        help=f"number of images (default {_SYNTH_DEFAULTS.count})",
    )
    p.add_argument(
        "--size", type=int, default=None,
        help=f"image side length (default {_SYNTH_DEFAULTS.size})",
    )
    p.add_argument(
        "--seed", type=int, default=None,
        help=f"generator seed (default {_SYNTH_DEFAULTS.seed})",
    )
    p.add_argument(
        "--order-sensitive",
        action="store_true",
        help="labels weighted by per-quadrant activity rank",
    )

    p = sub.add_parser("extract", help="compute feature sequences for a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True, help="output directory")
    p.add_argument("--backend", choices=["stat", "file"], default=None)
    p.add_argument("--patch-size", dest="patch_size", type=int, default=None)
    p.add_argument("--multires", choices=["on", "off"], default=None)
    p.add_argument(
        "--strict-low-scale",
        dest="strict_low_scale",
        action="store_true",
        help="error out when the half-scale image cannot be tiled",
    )

    p = sub.add_parser("split", help="assign train/test splits")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="output manifest (default: in place)")
    p.add_argument("--ratio", type=float, default=None, help="train fraction (default 0.8)")
    p.add_argument("--seed", type=int, default=None, help="shuffle seed (default 0)")

    p = sub.add_parser("train", help="train a regression head")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True, help="output checkpoint")
    p.add_argument("--history", type=Path, default=None, help="output history CSV")
    p.add_argument("--head", choices=["rnn", "avg"], default=None)
    p.add_argument("--multires", choices=["on", "off"], default=None)
    p.add_argument("--validate", action="store_true", help="score the test split each epoch")
    _add_train_opts(p)

    p = sub.add_parser("predict", help="write per-image predictions")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")

    p = sub.add_parser("ablate", help="train/eval the 2x2 head-by-multires grid")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out-dir", dest="out_dir", type=Path, required=True)
    _add_train_opts(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = {}
    if args.config is not None:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            print("config file must hold a JSON object", file=sys.stderr)
            return 2
    try:
        return _dispatch(args, config)
    except PatchiqError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace, config: dict) -> int:
    if args.command == "synth":
        cfg = SynthConfig(
            count=_resolve(args, config, "count", _SYNTH_DEFAULTS.count),
            size=_resolve(args, config, "size", _SYNTH_DEFAULTS.size),
            seed=_resolve(args, config, "seed", _SYNTH_DEFAULTS.seed),
            order_sensitive=bool(
                getattr(args, "order_sensitive", False) or config.get("order_sensitive", False)
            ),
        )
        run_synth(args.out, cfg)
        return 0

    if args.command == "extract":
        failures = run_extract(
            args.manifest,
            args.features,
            _multires_config(args, config),
            backend_kind=_resolve(args, config, "backend", "stat"),
        )
        if failures:
            for image_id, msg in failures:
                print(f"failed: {image_id}: {msg}", file=sys.stderr)
            return 1
        return 0

    if args.command == "split":
        out = args.out if args.out is not None else args.manifest
        run_split(
            args.manifest,
            out,
            ratio=_resolve(args, config, "ratio", 0.8),
            seed=_resolve(args, config, "seed", 0),
        )
        return 0

    if args.command == "train":
        history = (
            args.history
            if args.history is not None
            else Path(str(args.checkpoint) + ".history.csv")
        )
        run_train(
            args.manifest,
            args.features,
            args.checkpoint,
            history,
            head=_resolve(args, config, "head", "rnn"),
            multires=_resolve(args, config, "multires", "on") == "on",
            cfg=_train_config(args, config),
            validate=args.validate,
        )
        return 0

    if args.command == "predict":
        split = None if args.split == "all" else Split(args.split)
        run_predict(args.checkpoint, args.manifest, args.features, args.out, split)
        return 0

    if args.command == "eval":
        metrics = run_eval(
            args.checkpoint, args.manifest, args.features, args.report, Split(args.split)
        )
        print(
            f"scc={metrics.scc} pcc={metrics.pcc} rmse={metrics.rmse}"
        )
        return 0

    if args.command == "ablate":
        rows = run_ablate(
            args.manifest, args.features, args.out_dir, _train_config(args, config)
        )
        print(f"{'head':<6}{'multires':<10}{'scc':<22}{'pcc':<22}rmse")
        for r in rows:
            print(
                f"{r['head']:<6}{r['multires']:<10}"
                f"{str(r['scc']):<22}{str(r['pcc']):<22}{r['rmse']}"
            )
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
