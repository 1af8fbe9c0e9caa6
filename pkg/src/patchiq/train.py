"""Training loop: Huber objective, Adam, epoch schedule, batching.

Targets are MOS rescaled to [0, 1]. The objective is Huber with a small
transition point (delta = 1/9), optimized by Adam with the reference
decay constants: gradient decay 0.95, squared-gradient decay 0.9 (yes,
the first exceeds the second; that pairing is deliberate and pinned by
tests). L2 decay couples into the gradient before the Adam update and
applies to weight matrices only, never biases and never the zerocenter
mean, which is frozen after fitting.

The learning rate halves every epoch. Batches zero-pad sequences to the
batch maximum length with a boolean mask; a masked step freezes the
hidden state and contributes zero gradient, so padding is a no-op
mathematically. Given one seed the whole run is deterministic: same
seed, same data, bitwise-same parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselineParams, average_pool, baseline_backward, baseline_forward
from .core import FeatureSequence, make_rng
from .errors import EmptyTrainingSet, ShapeError, ValidationError
from .head import (
    GruHeadParams,
    HeadConfig,
    fit_zerocenter,
    head_backward,
    head_forward,
)

logger = logging.getLogger(__name__)

HUBER_DELTA = 1.0 / 9.0


@dataclass
class TrainConfig:
    """Optimizer and schedule settings. Defaults follow the reference protocol."""

    lr0: float = 2e-4
    lr_decay: float = 0.5          # multiplier applied per epoch
    epochs: int = 5
    batch_size: int = 16
    l2: float = 1e-5
    beta1: float = 0.95            # gradient decay
    beta2: float = 0.9             # squared-gradient decay
    eps: float = 1e-8
    huber_delta: float = HUBER_DELTA
    dropout: float = 0.25
    seed: int = 0

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch index."""
        return self.lr0 * self.lr_decay**epoch


def huber(pred: np.ndarray, target: np.ndarray, delta: float = HUBER_DELTA):
    """Elementwise Huber loss and its derivative w.r.t. pred.

    loss = e^2 / 2 for |e| <= delta, else delta * (|e| - delta / 2);
    both branches and their derivatives agree at |e| = delta.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    e = pred - target
    small = np.abs(e) <= delta
    loss = np.where(small, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    dloss = np.where(small, e, delta * np.sign(e))
    return loss, dloss


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
    decay_names: frozenset[str] = frozenset(),
) -> None:
    """One Adam update, in place.

    L2 decay is added to the gradient first, for names in decay_names
    only. Moments use bias correction with the shared step counter.
    """
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        if name in decay_names and cfg.l2 > 0.0:
            g = g + cfg.l2 * p
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def _decay_names(tensors: dict[str, np.ndarray]) -> frozenset[str]:
    """Weight matrices get L2 decay; biases and the zerocenter mean do not."""
    matrix_leaves = {"w", "W_z", "W_r", "W_h", "U_z", "U_r", "U_h"}
    return frozenset(
        name for name in tensors if name.split(".")[-1] in matrix_leaves
    )


class GruModel:
    """Adapter giving the recurrent head the common training interface."""

    head_kind = "rnn"

    def __init__(self, params: GruHeadParams, dropout: float = 0.25):
        self.params = params
        self.dropout = dropout

    @classmethod
    def create(cls, dim, rng, cfg: HeadConfig | None = None, dropout: float = 0.25):
        return cls(GruHeadParams.init(dim, rng, cfg), dropout=dropout)

    def prepare(self, sequences: list[FeatureSequence]) -> list[np.ndarray]:
        return [s.matrix() for s in sequences]

    def fit_normalization(self, items: list[np.ndarray]) -> None:
        self.params.mu[:] = fit_zerocenter(items)

    def collate(self, items: list[np.ndarray]):
        t_max = max(it.shape[0] for it in items)
        dim = items[0].shape[1]
        x = np.zeros((len(items), t_max, dim))
        mask = np.zeros((len(items), t_max), dtype=bool)
        for i, it in enumerate(items):
            x[i, : it.shape[0]] = it
            mask[i, : it.shape[0]] = True
        return x, mask

    def forward(self, x, mask, *, train=False, rng=None):
        return head_forward(
            self.params, x, mask, train=train, rng=rng, dropout=self.dropout
        )

    def backward(self, trace, d_pred):
        return head_backward(self.params, trace, d_pred)

    def named_tensors(self):
        return self.params.named_tensors()

    def trainable_tensors(self):
        out = self.named_tensors()
        out.pop("mu")
        return out


class AvgModel:
    """Adapter for the order-blind pooled baseline."""

    head_kind = "avg"

    def __init__(self, params: BaselineParams, dropout: float = 0.25):
        self.params = params
        self.dropout = dropout

    @classmethod
    def create(cls, dim, rng, dropout: float = 0.25):
        return cls(BaselineParams.init(dim, rng), dropout=dropout)

    def prepare(self, sequences: list[FeatureSequence]) -> list[np.ndarray]:
        return [average_pool(s) for s in sequences]

    def fit_normalization(self, items: list[np.ndarray]) -> None:
        self.params.mu[:] = np.stack(items).mean(axis=0)

    def collate(self, items: list[np.ndarray]):
        return np.stack(items), None

    def forward(self, x, mask, *, train=False, rng=None):
        return baseline_forward(
            self.params, x, train=train, rng=rng, dropout=self.dropout
        )

    def backward(self, trace, d_pred):
        return baseline_backward(self.params, trace, d_pred)

    def named_tensors(self):
        return self.params.named_tensors()

    def trainable_tensors(self):
        out = self.named_tensors()
        out.pop("mu")
        return out


def make_batches(n: int, batch_size: int, order: np.ndarray) -> list[np.ndarray]:
    """Partition an index order into consecutive batches; no drop-last."""
    if batch_size < 1:
        raise ValidationError(f"batch size must be >= 1, got {batch_size}")
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_scc: float | None = None
    val_pcc: float | None = None
    val_rmse: float | None = None


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)


def train(
    model,
    sequences: list[FeatureSequence],
    targets: np.ndarray,
    cfg: TrainConfig,
    validate=None,
    rng: np.random.Generator | None = None,
) -> TrainHistory:
    """Fit the model in place; returns per-epoch history.

    ``validate``, if given, is called with the model after each epoch and
    returns (scc, pcc, rmse) for logging only; it never changes the
    schedule. Shuffling and dropout draw from ``rng`` (fresh from
    cfg.seed when omitted). Parameter init is the caller's job so a
    prepared model can be trained further; use ``fit`` for the one-call
    path.
    """
    if len(sequences) == 0:
        raise EmptyTrainingSet("no training sequences")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(sequences),):
        raise ShapeError(
            f"targets shape {targets.shape} != ({len(sequences)},)"
        )
    items = model.prepare(sequences)
    if rng is None:
        rng = make_rng(cfg.seed)
    params = model.trainable_tensors()
    decay = _decay_names(params)
    state = AdamState.zeros_like(params)
    history = TrainHistory()
    n = len(items)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        loss_sum = 0.0
        for batch_idx in make_batches(n, cfg.batch_size, order):
            batch_items = [items[i] for i in batch_idx]
            x, mask = model.collate(batch_items)
            preds, trace = model.forward(x, mask, train=True, rng=rng)
            losses, dlosses = huber(preds, targets[batch_idx], cfg.huber_delta)
            loss_sum += float(losses.sum())
            grads = model.backward(trace, dlosses / len(batch_idx))
            adam_step(params, grads, state, lr, cfg, decay)
        stats = EpochStats(epoch=epoch, lr=lr, train_loss=loss_sum / n)
        if validate is not None:
            stats.val_scc, stats.val_pcc, stats.val_rmse = validate(model)
        history.epochs.append(stats)
        logger.info(
            "epoch %d lr %.3g train_loss %.6f", epoch, lr, stats.train_loss
        )
    return history


def fit(
    head_kind: str,
    sequences: list[FeatureSequence],
    targets: np.ndarray,
    cfg: TrainConfig,
    head_cfg: HeadConfig | None = None,
    validate=None,
):
    """Create, normalize, initialize and train a model of the given kind.

    The single rng seeded by cfg.seed drives init, then shuffling and
    dropout inside :func:`train`, so the whole run replays exactly.
    Returns (model, history).
    """
    if len(sequences) == 0:
        raise EmptyTrainingSet("no training sequences")
    dims = {s.dim for s in sequences}
    if len(dims) != 1:
        raise ShapeError(f"mixed sequence dims: {sorted(dims)}")
    dim = dims.pop()
    rng = make_rng(cfg.seed)
    if head_kind == "rnn":
        model = GruModel.create(dim, rng, head_cfg, dropout=cfg.dropout)
    elif head_kind == "avg":
        model = AvgModel.create(dim, rng, dropout=cfg.dropout)
    else:
        raise ValidationError(f"unknown head kind {head_kind!r}, expected rnn or avg")
    model.fit_normalization(model.prepare(sequences))
    history = train(model, sequences, targets, cfg, validate=validate, rng=rng)
    return model, history
