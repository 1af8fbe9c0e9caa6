"""Recurrent regression head over ordered patch-feature sequences.

The head maps a (T, D) feature sequence to one scalar quality estimate:

    zerocenter -> [FC D->D, ReLU, dropout] -> GRU-A (hidden 256, all steps)
               -> [FC 256->256, ReLU, dropout] per step
               -> GRU-B (hidden 128, all steps), keep the last state
               -> [FC 128->128, ReLU, dropout]
               -> GRU-C (hidden 64, one step from zero state)
               -> [FC 64->64, ReLU, dropout]
               -> GRU-D (hidden 32, one step from zero state)
               -> FC 32->1

Gate equations use the original GRU formulation with a single bias per
gate and the update gate weighting the previous state:

    z = sigmoid(W_z x + U_z h + b_z)
    r = sigmoid(W_r x + U_r h + b_r)
    hc = tanh(W_h x + U_h (r * h) + b_h)
    h' = z * h + (1 - z) * hc

With all-zero parameters one step maps h to h / 2, which pins this
variant apart from the transposed convention h' = (1-z) h + z hc.

Everything here is float64 and batched: inputs are (B, T, D) with a
boolean step mask. A masked step leaves the hidden state untouched and
contributes nothing to any gradient, so zero-padding a sequence changes
neither its prediction nor its parameter gradients.

Dropout is inverted (masks scaled by 1/keep) and active only in train
mode; forward returns a trace that the backward pass requires, and the
trace re-uses the exact masks that were drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    EmptySequence,
    EmptyTrainingSet,
    ShapeError,
    TraceRequired,
)

HIDDEN_SIZES = (256, 128, 64, 32)
DROPOUT_RATE = 0.25


@dataclass
class HeadConfig:
    """Architecture knobs. Defaults follow the reference design."""

    hidden_sizes: tuple[int, int, int, int] = HIDDEN_SIZES
    dropout: float = DROPOUT_RATE


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), shape (out, in)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass(eq=False)
class GruLayerParams:
    """One GRU layer's tensors. W_* are (hidden, in), U_* (hidden, hidden)."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        return cls(
            W_z=glorot(rng, hidden_dim, input_dim),
            W_r=glorot(rng, hidden_dim, input_dim),
            W_h=glorot(rng, hidden_dim, input_dim),
            U_z=glorot(rng, hidden_dim, hidden_dim),
            U_r=glorot(rng, hidden_dim, hidden_dim),
            U_h=glorot(rng, hidden_dim, hidden_dim),
            b_z=np.zeros(hidden_dim),
            b_r=np.zeros(hidden_dim),
            b_h=np.zeros(hidden_dim),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int):
        return cls(
            W_z=np.zeros((hidden_dim, input_dim)),
            W_r=np.zeros((hidden_dim, input_dim)),
            W_h=np.zeros((hidden_dim, input_dim)),
            U_z=np.zeros((hidden_dim, hidden_dim)),
            U_r=np.zeros((hidden_dim, hidden_dim)),
            U_h=np.zeros((hidden_dim, hidden_dim)),
            b_z=np.zeros(hidden_dim),
            b_r=np.zeros(hidden_dim),
            b_h=np.zeros(hidden_dim),
        )

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    def tensors(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.W_z": self.W_z, f"{prefix}.W_r": self.W_r, f"{prefix}.W_h": self.W_h,
            f"{prefix}.U_z": self.U_z, f"{prefix}.U_r": self.U_r, f"{prefix}.U_h": self.U_h,
            f"{prefix}.b_z": self.b_z, f"{prefix}.b_r": self.b_r, f"{prefix}.b_h": self.b_h,
        }


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def gru_cell_forward(x: np.ndarray, h_prev: np.ndarray, p: GruLayerParams) -> np.ndarray:
    """One GRU step. Accepts (in,)/(hidden,) vectors or (B, .) batches."""
    z = _sigmoid(x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = _sigmoid(x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    hc = np.tanh(x @ p.W_h.T + (r * h_prev) @ p.U_h.T + p.b_h)
    return z * h_prev + (1.0 - z) * hc


@dataclass(eq=False)
class GruHeadParams:
    """All tensors of the head. ``mu`` is the frozen zerocenter mean."""

    mu: np.ndarray
    prelude_w: list[np.ndarray]
    prelude_b: list[np.ndarray]
    layers: list[GruLayerParams]
    out_w: np.ndarray
    out_b: np.ndarray

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, cfg: HeadConfig | None = None):
        """Fresh parameters; mu starts at zero until fit separately."""
        cfg = cfg or HeadConfig()
        h1, h2, h3, h4 = cfg.hidden_sizes
        widths = (dim, h1, h2, h3)
        prelude_w = [glorot(rng, w, w) for w in widths]
        prelude_b = [np.zeros(w) for w in widths]
        layers = [
            GruLayerParams.init(dim, h1, rng),
            GruLayerParams.init(h1, h2, rng),
            GruLayerParams.init(h2, h3, rng),
            GruLayerParams.init(h3, h4, rng),
        ]
        return cls(
            mu=np.zeros(dim),
            prelude_w=prelude_w,
            prelude_b=prelude_b,
            layers=layers,
            out_w=glorot(rng, 1, h4),
            out_b=np.zeros(1),
        )

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {"mu": self.mu}
        for i, (w, b) in enumerate(zip(self.prelude_w, self.prelude_b)):
            out[f"prelude{i}.w"] = w
            out[f"prelude{i}.b"] = b
        for i, layer in enumerate(self.layers):
            out.update(layer.tensors(f"gru{i}"))
        out["out.w"] = self.out_w
        out["out.b"] = self.out_b
        return out


def fit_zerocenter(matrices: list[np.ndarray]) -> np.ndarray:
    """Component-wise mean over every vector of every training sequence."""
    if not matrices:
        raise EmptyTrainingSet("no sequences to fit the zerocenter mean on")
    total = np.zeros(matrices[0].shape[1])
    count = 0
    for m in matrices:
        if m.shape[1] != total.shape[0]:
            raise DimMismatch(
                f"sequence dim {m.shape[1]} differs from first dim {total.shape[0]}"
            )
        total += m.sum(axis=0)
        count += m.shape[0]
    if count == 0:
        raise EmptyTrainingSet("training sequences contain no vectors")
    return total / count


@dataclass(eq=False)
class _PreludeCache:
    x: np.ndarray          # input
    pre: np.ndarray        # FC output, before ReLU
    drop: np.ndarray | None  # inverted dropout mask (scaled), None in eval


@dataclass(eq=False)
class _GruCache:
    x: np.ndarray          # (B, T, in) layer input
    mask: np.ndarray       # (B, T, 1) float 0/1
    h_prev: np.ndarray     # (B, T, hidden) state before each step
    z: np.ndarray
    r: np.ndarray
    hc: np.ndarray


@dataclass(eq=False)
class ForwardTrace:
    """Everything backward needs, including the dropout masks drawn."""

    x: np.ndarray
    mask: np.ndarray
    preludes: list[_PreludeCache] = field(default_factory=list)
    grus: list[_GruCache] = field(default_factory=list)
    h_last: list[np.ndarray] = field(default_factory=list)


def _prelude_forward(x, w, b, rate, rng, trace):
    pre = x @ w.T + b
    act = np.maximum(pre, 0.0)
    drop = None
    if rng is not None and rate > 0.0:
        keep = 1.0 - rate
        drop = (rng.random(act.shape) < keep) / keep
        act = act * drop
    if trace is not None:
        trace.preludes.append(_PreludeCache(x=x, pre=pre, drop=drop))
    return act

def _prelude_backward(cache, w, d_out):
    if cache.drop is not None:
        d_out = d_out * cache.drop
    d_pre = d_out * (cache.pre > 0.0)
    flat_x = cache.x.reshape(-1, cache.x.shape[-1])
    flat_d = d_pre.reshape(-1, d_pre.shape[-1])
    dw = flat_d.T @ flat_x
    db = flat_d.sum(axis=0)
    dx = d_pre @ w
    return dx, dw, db


def _gru_seq_forward(x, mask, p, trace):
    b, t, _ = x.shape
    hdim = p.hidden_dim
    h = np.zeros((b, hdim))
    h_prev = np.empty((b, t, hdim))
    zs = np.empty((b, t, hdim))
    rs = np.empty((b, t, hdim))
    hcs = np.empty((b, t, hdim))
    hs = np.empty((b, t, hdim))
    for step in range(t):
        xt = x[:, step]
        h_prev[:, step] = h
        z = _sigmoid(xt @ p.W_z.T + h @ p.U_z.T + p.b_z)
        r = _sigmoid(xt @ p.W_r.T + h @ p.U_r.T + p.b_r)
        hc = np.tanh(xt @ p.W_h.T + (r * h) @ p.U_h.T + p.b_h)
        h_cell = z * h + (1.0 - z) * hc
        m = mask[:, step]
        h = m * h_cell + (1.0 - m) * h
        zs[:, step], rs[:, step], hcs[:, step], hs[:, step] = z, r, hc, h
    if trace is not None:
        trace.grus.append(_GruCache(x=x, mask=mask, h_prev=h_prev, z=zs, r=rs, hc=hcs))
        trace.h_last.append(h)
    return hs, h


def _gru_seq_backward(cache, p, d_h_steps, d_h_last):
    """BPTT for one layer.

    d_h_steps: (B, T, hidden) upstream gradient on every step's output,
        or None when only the final state feeds forward.
    d_h_last: (B, hidden) upstream gradient on the final state, or None.
    Returns (d_x, grads dict) with grads keyed W_z..b_h.
    """
    b, t, _ = cache.x.shape
    dx = np.zeros_like(cache.x)
    g = {name: np.zeros_like(arr) for name, arr in (
        ("W_z", p.W_z), ("W_r", p.W_r), ("W_h", p.W_h),
        ("U_z", p.U_z), ("U_r", p.U_r), ("U_h", p.U_h),
        ("b_z", p.b_z), ("b_r", p.b_r), ("b_h", p.b_h),
    )}
    dh = np.zeros((b, p.hidden_dim)) if d_h_last is None else d_h_last.copy()
    for step in range(t - 1, -1, -1):
        if d_h_steps is not None:
            dh = dh + d_h_steps[:, step]
        m = cache.mask[:, step]
        xt = cache.x[:, step]
        h_prev = cache.h_prev[:, step]
        z, r, hc = cache.z[:, step], cache.r[:, step], cache.hc[:, step]
        gc = dh * m                      # gradient entering the cell
        dh_prev = dh * (1.0 - m)         # skip path of masked entries
        dz = gc * (h_prev - hc)
        dhc = gc * (1.0 - z)
        dh_prev += gc * z
        da_h = dhc * (1.0 - hc * hc)
        da_z = dz * z * (1.0 - z)
        q = da_h @ p.U_h                 # gradient wrt (r * h_prev)
        dr = q * h_prev
        dh_prev += q * r
        da_r = dr * r * (1.0 - r)
        dh_prev += da_z @ p.U_z + da_r @ p.U_r
        dx[:, step] = da_z @ p.W_z + da_r @ p.W_r + da_h @ p.W_h
        g["W_z"] += da_z.T @ xt
        g["W_r"] += da_r.T @ xt
        g["W_h"] += da_h.T @ xt
        g["U_z"] += da_z.T @ h_prev
        g["U_r"] += da_r.T @ h_prev
        g["U_h"] += da_h.T @ (r * h_prev)
        g["b_z"] += da_z.sum(axis=0)
        g["b_r"] += da_r.sum(axis=0)
        g["b_h"] += da_h.sum(axis=0)
        dh = dh_prev
    return dx, g


def head_forward(
    params: GruHeadParams,
    x: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = DROPOUT_RATE,
) -> tuple[np.ndarray, ForwardTrace | None]:
    """Run the head on a batch.

    x: (B, T, D) float sequences, zero-padded; mask: (B, T) bools marking
    real steps (None means all real). Returns (predictions (B,), trace).
    The trace is only produced in train mode; eval mode applies no
    dropout and needs no rng.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected (B, T, D) input, got shape {x.shape}")
    b, t, d = x.shape
    if t == 0:
        raise EmptySequence("zero-length sequence batch")
    if d != params.dim:
        raise DimMismatch(f"input dim {d} != model dim {params.dim}")
    if mask is None:
        mask = np.ones((b, t), dtype=bool)
    mask = np.asarray(mask)
    if mask.shape != (b, t):
        raise ShapeError(f"mask shape {mask.shape} != {(b, t)}")
    if not mask[:, 0].all():
        raise EmptySequence("every sequence must have at least its first step unmasked")
    maskf = mask.astype(np.float64)[:, :, None]
    if train and dropout > 0.0 and rng is None:
        raise TraceRequired("train mode with dropout needs an rng")
    drop_rng = rng if train else None
    rate = dropout if train else 0.0
    trace = ForwardTrace(x=x, mask=maskf) if train else None

    xc = x - params.mu
    s0 = _prelude_forward(xc, params.prelude_w[0], params.prelude_b[0], rate, drop_rng, trace)
    ha, _ = _gru_seq_forward(s0, maskf, params.layers[0], trace)
    s1 = _prelude_forward(ha, params.prelude_w[1], params.prelude_b[1], rate, drop_rng, trace)
    _, hb_last = _gru_seq_forward(s1, maskf, params.layers[1], trace)
    s2 = _prelude_forward(hb_last, params.prelude_w[2], params.prelude_b[2], rate, drop_rng, trace)
    ones = np.ones((b, 1, 1))
    hc_seq, hc_last = _gru_seq_forward(s2[:, None, :], ones, params.layers[2], trace)
    s3 = _prelude_forward(hc_last, params.prelude_w[3], params.prelude_b[3], rate, drop_rng, trace)
    _, hd_last = _gru_seq_forward(s3[:, None, :], ones, params.layers[3], trace)
    preds = hd_last @ params.out_w.T + params.out_b
    return preds[:, 0], trace


def head_backward(
    params: GruHeadParams, trace: ForwardTrace | None, d_pred: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact gradients of sum(d_pred * pred) w.r.t. every trainable tensor.

    d_pred is the upstream gradient per batch element, shape (B,).
    Returns a dict keyed like named_tensors() minus "mu" (frozen).
    """
    if trace is None:
        raise TraceRequired("backward needs the trace from a train-mode forward")
    d_pred = np.asarray(d_pred, dtype=np.float64)
    grads: dict[str, np.ndarray] = {}

    hd_last = trace.h_last[3]
    grads["out.w"] = (d_pred[:, None] * hd_last).sum(axis=0, keepdims=True)
    grads["out.b"] = np.array([d_pred.sum()])
    d_hd = d_pred[:, None] * params.out_w[0]

    dx3, g3 = _gru_seq_backward(trace.grus[3], params.layers[3], None, d_hd)
    grads.update({f"gru3.{k}": v for k, v in g3.items()})
    d_hc_last, dw, db = _prelude_backward(trace.preludes[3], params.prelude_w[3], dx3[:, 0])
    grads["prelude3.w"], grads["prelude3.b"] = dw, db

    dx2, g2 = _gru_seq_backward(trace.grus[2], params.layers[2], None, d_hc_last)
    grads.update({f"gru2.{k}": v for k, v in g2.items()})
    d_hb_last, dw, db = _prelude_backward(trace.preludes[2], params.prelude_w[2], dx2[:, 0])
    grads["prelude2.w"], grads["prelude2.b"] = dw, db

    dx1, g1 = _gru_seq_backward(trace.grus[1], params.layers[1], None, d_hb_last)
    grads.update({f"gru1.{k}": v for k, v in g1.items()})
    d_ha, dw, db = _prelude_backward(trace.preludes[1], params.prelude_w[1], dx1)
    grads["prelude1.w"], grads["prelude1.b"] = dw, db

    dx0, g0 = _gru_seq_backward(trace.grus[0], params.layers[0], d_ha, None)
    grads.update({f"gru0.{k}": v for k, v in g0.items()})
    _, dw, db = _prelude_backward(trace.preludes[0], params.prelude_w[0], dx0)
    grads["prelude0.w"], grads["prelude0.b"] = dw, db

    return grads
