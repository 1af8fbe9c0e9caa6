"""High-level pipeline stages behind the command-line interface.

Each stage is a plain function over paths and resolved options, so the
same operations compose from scripts and tests without the CLI. Every
stage writes a ``<primary-output>.run.json`` sidecar echoing the
resolved configuration (no timestamps: outputs are byte-stable across
identical runs).
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_model, save_model
from .core import (
    DatasetManifest,
    FeatureSequence,
    ScaleGroup,
    Split,
    load_image,
    read_manifest,
    rescale_mos,
    split_manifest,
    write_manifest,
)
from .errors import (
    EmptySequence,
    ItemizedIOError,
    PatchiqError,
    UnsupportedMode,
    ValidationError,
)
from .features import (
    FileLoaderBackend,
    StatFeatureBackend,
    read_feature_file,
    write_feature_file,
)
from .metrics import Metrics, compute_metrics
from .multires import MultiresConfig, build_sequence
from .synth import SynthConfig, generate_dataset
from .train import TrainConfig, fit

logger = logging.getLogger(__name__)

THREADS_ENV = "PATCHIQ_THREADS"


def thread_count() -> int:
    """Worker count for extraction, from the environment (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def _write_sidecar(primary: Path, command: str, config: dict) -> None:
    payload = {"command": command, "version": __version__, "config": config}
    sidecar = Path(str(primary) + ".run.json")
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_synth(out_dir: str | Path, cfg: SynthConfig) -> Path:
    """Generate a synthetic dataset; returns the manifest path."""
    out_dir = Path(out_dir)
    manifest = generate_dataset(out_dir, cfg)
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest, manifest_path)
    _write_sidecar(manifest_path, "synth", asdict(cfg))
    logger.info("synth: wrote %d images under %s", len(manifest), out_dir)
    return manifest_path


def feature_path(features_dir: Path, image_id: str) -> Path:
    return Path(features_dir) / f"{image_id}.fseq"


def make_backend(kind: str):
    if kind == "stat":
        return StatFeatureBackend()
    if kind == "file":
        return FileLoaderBackend()
    raise ValidationError(f"unknown backend {kind!r}, expected stat or file")


def run_extract(
    manifest_path: str | Path,
    features_dir: str | Path,
    mres: MultiresConfig,
    backend_kind: str = "stat",
) -> list[tuple[str, str]]:
    """Extract feature sequences for every manifest entry.

    Returns (image_id, message) for entries that failed; the rest are
    written as FSEQ files. Work parallelizes across images when the
    thread-count environment variable asks for it; outputs are
    per-image files, so worker scheduling cannot change the bytes.
    The file-loader backend cannot extract from pixels; asking for it
    here raises UnsupportedMode.
    """
    manifest_path = Path(manifest_path)
    features_dir = Path(features_dir)
    features_dir.mkdir(parents=True, exist_ok=True)
    manifest = read_manifest(manifest_path)
    backend = make_backend(backend_kind)
    if isinstance(backend, FileLoaderBackend):
        raise UnsupportedMode(
            "file-loader backend has no pixel extraction; feature files "
            "must be produced externally"
        )
    root = manifest_path.parent

    def one(entry):
        image = load_image(root / entry.path)
        seq = build_sequence(image, entry.image_id, mres, backend)
        write_feature_file(seq, feature_path(features_dir, entry.image_id))

    failures: list[tuple[str, str]] = []
    workers = thread_count()
    if workers == 1:
        for entry in manifest.entries:
            try:
                one(entry)
            except (PatchiqError, OSError) as e:
                failures.append((entry.image_id, str(e)))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(one, e): e for e in manifest.entries}
            for fut, entry in futures.items():
                try:
                    fut.result()
                except (PatchiqError, OSError) as e:
                    failures.append((entry.image_id, str(e)))
    config = {
        "manifest": str(manifest_path),
        "backend": backend.kind.value,
        "patch_size": mres.patch_size,
        "multires": mres.enable_low_scale,
        "ordering": mres.ordering.value,
        "threads": workers,
    }
    _write_sidecar(features_dir / "features", "extract", config)
    for image_id, msg in failures:
        logger.error("extract failed for %s: %s", image_id, msg)
    logger.info(
        "extract: %d ok, %d failed", len(manifest) - len(failures), len(failures)
    )
    return failures


def run_split(
    manifest_path: str | Path, out_path: str | Path, ratio: float, seed: int
) -> None:
    manifest = read_manifest(manifest_path)
    out_path = Path(out_path)
    write_manifest(split_manifest(manifest, ratio, seed), out_path)
    _write_sidecar(out_path, "split", {"ratio": ratio, "seed": seed})


def _select_groups(seq: FeatureSequence, multires: bool) -> FeatureSequence:
    if multires:
        return seq
    vectors = seq.group(ScaleGroup.HIGH)
    if not vectors:
        raise EmptySequence(f"{seq.image_id}: no full-scale vectors in feature file")
    return FeatureSequence(image_id=seq.image_id, vectors=vectors)


def load_split_sequences(
    manifest: DatasetManifest,
    features_dir: str | Path,
    split: Split | None,
    multires: bool,
):
    """Feature sequences and unit-scale targets for one split (None = all).

    Missing feature files are reported together in one error.
    """
    entries = manifest.entries if split is None else manifest.subset(split)
    if not entries:
        raise ValidationError(f"manifest has no entries for split {split}")
    missing = [
        e.image_id
        for e in entries
        if not feature_path(Path(features_dir), e.image_id).exists()
    ]
    if missing:
        raise ItemizedIOError("missing feature files", missing)
    sequences = []
    targets = []
    for e in entries:
        seq = read_feature_file(feature_path(Path(features_dir), e.image_id))
        sequences.append(_select_groups(seq, multires))
        targets.append(rescale_mos(e.mos_raw))
    return sequences, np.array(targets)


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def run_train(
    manifest_path: str | Path,
    features_dir: str | Path,
    checkpoint_path: str | Path,
    history_path: str | Path,
    head: str,
    multires: bool,
    cfg: TrainConfig,
    validate: bool = False,
) -> None:
    """Train a head on the manifest's train split and checkpoint it."""
    manifest = read_manifest(manifest_path)
    sequences, targets = load_split_sequences(
        manifest, features_dir, Split.TRAIN, multires
    )
    validate_fn = None
    if validate:
        try:
            val_seqs, val_targets = load_split_sequences(
                manifest, features_dir, Split.TEST, multires
            )
        except ValidationError:
            logger.warning("no test split available, skipping validation")
        else:

            def validate_fn(model):
                preds = predict_sequences(model, val_seqs)
                m = compute_metrics(preds, val_targets)
                return m.scc, m.pcc, m.rmse

    model, history = fit(head, sequences, targets, cfg, validate=validate_fn)
    config = {
        "manifest": str(manifest_path),
        "features": str(features_dir),
        "head": head,
        "multires": multires,
        **asdict(cfg),
    }
    save_model(checkpoint_path, model, {"config": config, "seed": cfg.seed})
    history_path = Path(history_path)
    with history_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_scc", "val_pcc", "val_rmse"])
        for s in history.epochs:
            writer.writerow(
                [
                    s.epoch,
                    repr(s.lr),
                    repr(s.train_loss),
                    _fmt(s.val_scc),
                    _fmt(s.val_pcc),
                    _fmt(s.val_rmse),
                ]
            )
    _write_sidecar(Path(checkpoint_path), "train", config)
    if validate and validate_fn is not None:
        last = history.epochs[-1]
        logger.info(
            "final validation: scc=%s pcc=%s rmse=%s",
            last.val_scc,
            last.val_pcc,
            last.val_rmse,
        )


def predict_sequences(model, sequences: list[FeatureSequence]) -> np.ndarray:
    """Unit-scale predictions for a list of sequences, eval mode."""
    items = model.prepare(sequences)
    preds = np.empty(len(items))
    # batched in groups to bound padding waste on mixed lengths
    chunk = 64
    for start in range(0, len(items), chunk):
        x, mask = model.collate(items[start : start + chunk])
        p, _ = model.forward(x, mask, train=False)
        preds[start : start + chunk] = p
    return preds


def run_predict(
    checkpoint_path: str | Path,
    manifest_path: str | Path,
    features_dir: str | Path,
    out_path: str | Path,
    split: Split | None = None,
) -> None:
    """Write per-image predictions on the 0-100 scale."""
    model, meta = load_model(checkpoint_path)
    multires = bool(meta.get("config", {}).get("multires", True))
    manifest = read_manifest(manifest_path)
    sequences, _ = load_split_sequences(manifest, features_dir, split, multires)
    preds = predict_sequences(model, sequences)
    out_path = Path(out_path)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "mos_hat_0_100"])
        for seq, p in zip(sequences, preds):
            writer.writerow([seq.image_id, repr(float(p) * 100.0)])
    _write_sidecar(
        out_path,
        "predict",
        {
            "checkpoint": str(checkpoint_path),
            "manifest": str(manifest_path),
            "split": split.value if split else "all",
            "multires": multires,
        },
    )


def evaluate_checkpoint(
    checkpoint_path: str | Path,
    manifest_path: str | Path,
    features_dir: str | Path,
    split: Split = Split.TEST,
) -> tuple[Metrics, dict]:
    """Metrics for a trained checkpoint on one split."""
    model, meta = load_model(checkpoint_path)
    multires = bool(meta.get("config", {}).get("multires", True))
    manifest = read_manifest(manifest_path)
    sequences, targets = load_split_sequences(manifest, features_dir, split, multires)
    preds = predict_sequences(model, sequences)
    metrics = compute_metrics(preds, targets)
    for msg in metrics.errors:
        logger.warning("metric degenerate: %s", msg)
    return metrics, meta


def run_eval(
    checkpoint_path: str | Path,
    manifest_path: str | Path,
    features_dir: str | Path,
    report_path: str | Path,
    split: Split = Split.TEST,
) -> Metrics:
    metrics, meta = evaluate_checkpoint(
        checkpoint_path, manifest_path, features_dir, split
    )
    seed = meta.get("seed", "")
    head = meta.get("head", "")
    report_path = Path(report_path)
    with report_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "split", "seed", "scc", "pcc", "rmse"])
        writer.writerow(
            [head, split.value, seed, _fmt(metrics.scc), _fmt(metrics.pcc), _fmt(metrics.rmse)]
        )
    _write_sidecar(
        report_path,
        "eval",
        {
            "checkpoint": str(checkpoint_path),
            "manifest": str(manifest_path),
            "split": split.value,
        },
    )
    return metrics


def run_ablate(
    manifest_path: str | Path,
    features_dir: str | Path,
    out_dir: str | Path,
    cfg: TrainConfig,
) -> list[dict]:
    """Train and evaluate {avg, rnn} x {multires off, on}; write the table.

    The feature files must have been extracted with the low-scale group
    enabled so the multires-off rows can drop it. Returns the table rows.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for head in ("avg", "rnn"):
        for multires in (False, True):
            tag = f"{head}_{'mres' if multires else 'single'}"
            ckpt = out_dir / f"{tag}.ckpt"
            hist = out_dir / f"{tag}_history.csv"
            run_train(
                manifest_path, features_dir, ckpt, hist, head, multires, cfg
            )
            metrics, _ = evaluate_checkpoint(ckpt, manifest_path, features_dir)
            rows.append(
                {
                    "head": head,
                    "multires": "on" if multires else "off",
                    "scc": metrics.scc,
                    "pcc": metrics.pcc,
                    "rmse": metrics.rmse,
                }
            )
    table_path = out_dir / "ablation.csv"
    with table_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["head", "multires", "scc", "pcc", "rmse"])
        for r in rows:
            writer.writerow(
                [r["head"], r["multires"], _fmt(r["scc"]), _fmt(r["pcc"]), _fmt(r["rmse"])]
            )
    _write_sidecar(table_path, "ablate", {**asdict(cfg), "manifest": str(manifest_path)})
    for r in rows:
        logger.info(
            "ablate %s multires=%s scc=%s pcc=%s rmse=%s",
            r["head"], r["multires"], r["scc"], r["pcc"], r["rmse"],
        )
    return rows
