"""Model checkpoint container.

Layout: 4-byte magic b"PCKP", u16 version, u64 JSON index length, the
JSON index (UTF-8, canonical form: sorted keys, no whitespace), then a
raw blob of little-endian float32 tensor data. The index records every
tensor's shape, dtype and byte offset into the blob, plus metadata (head
kind, config echo, training seed). Canonical JSON and a fixed tensor
order make the writer a pure function of its inputs: write -> read ->
write reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .baseline import BaselineParams
from .errors import FormatError
from .head import GruHeadParams, GruLayerParams

CKPT_MAGIC = b"PCKP"
CKPT_VERSION = 1


def save_checkpoint(
    path: str | Path,
    tensors: dict[str, np.ndarray],
    meta: dict,
) -> None:
    """Write tensors (cast to f32) and JSON-serializable metadata."""
    blob = bytearray()
    index_tensors = {}
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        index_tensors[name] = {
            "shape": list(arr.shape),
            "dtype": "f4",
            "offset": len(blob),
            "nbytes": arr.nbytes,
        }
        blob.extend(arr.tobytes())
    index = {"tensors": index_tensors, "meta": meta}
    index_bytes = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<H", CKPT_VERSION))
        fh.write(struct.pack("<Q", len(index_bytes)))
        fh.write(index_bytes)
        fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors (as float64) and metadata back."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError("file too short for magic", offset=0)
    if data[:4] != CKPT_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < 6:
        raise FormatError("file truncated in version field", offset=4)
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if len(data) < 14:
        raise FormatError("file truncated in index length", offset=6)
    (index_len,) = struct.unpack_from("<Q", data, 6)
    index_start = 14
    blob_start = index_start + index_len
    if blob_start > len(data):
        raise FormatError(
            f"index length {index_len} exceeds file size", offset=index_start
        )
    try:
        index = json.loads(data[index_start:blob_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad JSON index: {e}", offset=index_start) from None
    if not isinstance(index, dict) or "tensors" not in index or "meta" not in index:
        raise FormatError("index missing tensors/meta keys", offset=index_start)
    blob = data[blob_start:]
    tensors = {}
    for name, rec in index["tensors"].items():
        try:
            shape = tuple(rec["shape"])
            offset = rec["offset"]
            nbytes = rec["nbytes"]
            dtype = rec["dtype"]
        except (KeyError, TypeError):
            raise FormatError(
                f"tensor record for {name!r} malformed", offset=index_start
            ) from None
        if dtype != "f4":
            raise FormatError(
                f"tensor {name!r} has unsupported dtype {dtype!r}", offset=index_start
            )
        if offset + nbytes > len(blob):
            raise FormatError(
                f"tensor {name!r} data out of bounds", offset=blob_start + offset
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if count * 4 != nbytes:
            raise FormatError(
                f"tensor {name!r} shape/nbytes mismatch", offset=blob_start + offset
            )
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        tensors[name] = arr.astype(np.float64).reshape(shape)
    return tensors, index["meta"]


def save_model(path: str | Path, model, meta: dict) -> None:
    """Checkpoint a training model adapter (its tensors plus metadata)."""
    full_meta = dict(meta)
    full_meta["head"] = model.head_kind
    save_checkpoint(path, model.named_tensors(), full_meta)


def _head_params_from(tensors: dict[str, np.ndarray]) -> GruHeadParams:
    n_layers = 4
    layers = [
        GruLayerParams(
            **{leaf: tensors[f"gru{i}.{leaf}"] for leaf in (
                "W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")}
        )
        for i in range(n_layers)
    ]
    return GruHeadParams(
        mu=tensors["mu"],
        prelude_w=[tensors[f"prelude{i}.w"] for i in range(n_layers)],
        prelude_b=[tensors[f"prelude{i}.b"] for i in range(n_layers)],
        layers=layers,
        out_w=tensors["out.w"],
        out_b=tensors["out.b"],
    )


def load_model(path: str | Path):
    """Rebuild a model adapter from a checkpoint. Returns (model, meta)."""
    from .train import AvgModel, GruModel  # deferred: train imports this module's users

    tensors, meta = load_checkpoint(path)
    head = meta.get("head")
    dropout = meta.get("config", {}).get("dropout", 0.25)
    try:
        if head == "rnn":
            return GruModel(_head_params_from(tensors), dropout=dropout), meta
        if head == "avg":
            params = BaselineParams(
                mu=tensors["mu"],
                fc_w=tensors["fc.w"],
                fc_b=tensors["fc.b"],
                out_w=tensors["out.w"],
                out_b=tensors["out.b"],
            )
            return AvgModel(params, dropout=dropout), meta
    except KeyError as e:
        raise FormatError(f"checkpoint missing tensor {e}", offset=0) from None
    raise FormatError(f"unknown head kind {head!r} in metadata", offset=0)
