"""Order-blind baseline: average-pool the sequence, then a small MLP.

The ablation counterpart of the recurrent head. A sequence collapses to
the component-wise mean of its vectors, which destroys all ordering
information; the rest is zerocenter -> FC(D, 256) -> ReLU -> dropout
-> FC(256, 1). It shares the loss, optimizer, schedule and splits with
the recurrent head so any score difference is attributable to ordered
versus pooled sequence handling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureSequence
from .errors import (
    DimMismatch,
    EmptySequence,
    ShapeError,
    TraceRequired,
)
from .head import DROPOUT_RATE, glorot

BASELINE_HIDDEN = 256


def average_pool(seq: FeatureSequence) -> np.ndarray:
    """Component-wise mean over all vectors in the sequence."""
    if len(seq) == 0:
        raise EmptySequence(f"{seq.image_id}: cannot pool an empty sequence")
    return seq.matrix().mean(axis=0)


@dataclass(eq=False)
class BaselineParams:
    mu: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, hidden: int = BASELINE_HIDDEN):
        return cls(
            mu=np.zeros(dim),
            fc_w=glorot(rng, hidden, dim),
            fc_b=np.zeros(hidden),
            out_w=glorot(rng, 1, hidden),
            out_b=np.zeros(1),
        )

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {
            "mu": self.mu,
            "fc.w": self.fc_w,
            "fc.b": self.fc_b,
            "out.w": self.out_w,
            "out.b": self.out_b,
        }


@dataclass(eq=False)
class BaselineTrace:
    xc: np.ndarray
    pre: np.ndarray
    drop: np.ndarray | None


def baseline_forward(
    params: BaselineParams,
    x: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = DROPOUT_RATE,
) -> tuple[np.ndarray, BaselineTrace | None]:
    """Predict from pooled vectors, shape (B, D). Returns (preds (B,), trace)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (B, D) pooled input, got shape {x.shape}")
    if x.shape[1] != params.dim:
        raise DimMismatch(f"input dim {x.shape[1]} != model dim {params.dim}")
    if train and dropout > 0.0 and rng is None:
        raise TraceRequired("train mode with dropout needs an rng")
    xc = x - params.mu
    pre = xc @ params.fc_w.T + params.fc_b
    act = np.maximum(pre, 0.0)
    drop = None
    if train and dropout > 0.0:
        keep = 1.0 - dropout
        drop = (rng.random(act.shape) < keep) / keep
        act = act * drop
    preds = act @ params.out_w.T + params.out_b
    trace = BaselineTrace(xc=xc, pre=pre, drop=drop) if train else None
    return preds[:, 0], trace


def baseline_backward(
    params: BaselineParams, trace: BaselineTrace | None, d_pred: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of sum(d_pred * pred) for every trainable tensor."""
    if trace is None:
        raise TraceRequired("backward needs the trace from a train-mode forward")
    d_pred = np.asarray(d_pred, dtype=np.float64)
    act = np.maximum(trace.pre, 0.0)
    if trace.drop is not None:
        act = act * trace.drop
    d_act = d_pred[:, None] * params.out_w[0]
    grads = {
        "out.w": (d_pred[:, None] * act).sum(axis=0, keepdims=True),
        "out.b": np.array([d_pred.sum()]),
    }
    if trace.drop is not None:
        d_act = d_act * trace.drop
    d_pre = d_act * (trace.pre > 0.0)
    grads["fc.w"] = d_pre.T @ trace.xc
    grads["fc.b"] = d_pre.sum(axis=0)
    return grads
