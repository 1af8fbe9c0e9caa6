"""Checkpoint container: layout, round trips, malformed inputs, adapters."""

from __future__ import annotations

import json
import struct

import numpy as np
import pytest

from patchiq.checkpoint import (
    load_checkpoint,
    load_model,
    save_checkpoint,
    save_model,
)
from patchiq.core import make_rng
from patchiq.errors import FormatError
from patchiq.head import HeadConfig
from patchiq.train import AvgModel, GruModel

TINY_HEAD = HeadConfig(hidden_sizes=(5, 4, 3, 2))


def _sample_tensors() -> dict[str, np.ndarray]:
    rng = make_rng(0)
    return {
        "beta": rng.standard_normal((2, 3)),
        "alpha": rng.standard_normal(4),
    }


def test_layout_matches_manual_bytes(tmp_path):
    tensors = _sample_tensors()
    meta = {"head": "rnn", "seed": 7}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors, meta)

    blob = b""
    index_tensors = {}
    for name in sorted(tensors):  # alpha before beta
        raw = np.ascontiguousarray(tensors[name], dtype="<f4")
        index_tensors[name] = {
            "shape": list(raw.shape),
            "dtype": "f4",
            "offset": len(blob),
            "nbytes": raw.nbytes,
        }
        blob += raw.tobytes()
    index = json.dumps(
        {"tensors": index_tensors, "meta": meta}, sort_keys=True, separators=(",", ":")
    ).encode()
    expected = b"PCKP" + struct.pack("<H", 1) + struct.pack("<Q", len(index)) + index + blob
    assert path.read_bytes() == expected


def test_round_trip_is_byte_identical(tmp_path):
    tensors = _sample_tensors()
    meta = {"head": "rnn", "config": {"dropout": 0.1}, "seed": 3}
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, tensors, meta)
    back, meta_back = load_checkpoint(a)
    save_checkpoint(b, back, meta_back)
    assert a.read_bytes() == b.read_bytes()
    assert meta_back == meta
    for name, arr in tensors.items():
        assert back[name].dtype == np.float64
        np.testing.assert_array_equal(back[name], arr.astype(np.float32))


def test_save_is_deterministic(tmp_path):
    tensors = _sample_tensors()
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, tensors, {"k": 1})
    save_checkpoint(b, dict(reversed(list(tensors.items()))), {"k": 1})
    assert a.read_bytes() == b.read_bytes()


def _expect_format_error(tmp_path, blob: bytes, offset: int, fragment: str):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(blob)
    with pytest.raises(FormatError) as info:
        load_checkpoint(path)
    assert info.value.offset == offset, str(info.value)
    assert fragment in str(info.value)


def _valid_file(tensors=None, meta=None) -> bytes:
    import io
    buf = io.BytesIO()
    tensors = tensors if tensors is not None else {"t": np.ones(2)}
    blob = b""
    recs = {}
    for name in sorted(tensors):
        raw = np.ascontiguousarray(tensors[name], dtype="<f4")
        recs[name] = {
            "shape": list(raw.shape), "dtype": "f4",
            "offset": len(blob), "nbytes": raw.nbytes,
        }
        blob += raw.tobytes()
    index = json.dumps(
        {"tensors": recs, "meta": meta or {}}, sort_keys=True, separators=(",", ":")
    ).encode()
    buf.write(b"PCKP" + struct.pack("<H", 1) + struct.pack("<Q", len(index)))
    buf.write(index + blob)
    return buf.getvalue()


def _with_index(index_obj) -> bytes:
    index = json.dumps(index_obj, sort_keys=True, separators=(",", ":")).encode()
    return b"PCKP" + struct.pack("<H", 1) + struct.pack("<Q", len(index)) + index


def test_malformed_inputs_fail_with_positions(tmp_path):
    _expect_format_error(tmp_path, b"", 0, "too short")
    _expect_format_error(tmp_path, b"XCKPxxxxxxxxxxxx", 0, "bad magic")
    _expect_format_error(tmp_path, b"PCKP\x01", 4, "truncated in version")
    _expect_format_error(
        tmp_path, b"PCKP" + struct.pack("<H", 3) + b"\x00" * 8, 4, "version"
    )
    _expect_format_error(
        tmp_path, b"PCKP" + struct.pack("<H", 1) + b"\x00" * 4, 6, "index length"
    )
    _expect_format_error(
        tmp_path,
        b"PCKP" + struct.pack("<H", 1) + struct.pack("<Q", 10**6) + b"{}",
        14,
        "exceeds file size",
    )
    bad_json = b"PCKP" + struct.pack("<H", 1) + struct.pack("<Q", 7) + b"notjson"
    _expect_format_error(tmp_path, bad_json, 14, "JSON")
    _expect_format_error(tmp_path, _with_index([1, 2]), 14, "missing tensors/meta")
    _expect_format_error(
        tmp_path,
        _with_index({"tensors": {"t": {"shape": [1]}}, "meta": {}}),
        14,
        "malformed",
    )
    _expect_format_error(
        tmp_path,
        _with_index({
            "tensors": {"t": {"shape": [1], "dtype": "f8", "offset": 0, "nbytes": 8}},
            "meta": {},
        }),
        14,
        "dtype",
    )
    oob = _with_index({
        "tensors": {"t": {"shape": [4], "dtype": "f4", "offset": 0, "nbytes": 16}},
        "meta": {},
    })
    _expect_format_error(tmp_path, oob, len(oob), "out of bounds")
    mismatched = _with_index({
        "tensors": {"t": {"shape": [3], "dtype": "f4", "offset": 0, "nbytes": 16}},
        "meta": {},
    }) + b"\x00" * 16
    blob_start = len(mismatched) - 16
    _expect_format_error(tmp_path, mismatched, blob_start, "shape/nbytes")


def test_never_crashes_on_random_garbage(tmp_path):
    rng = np.random.default_rng(7)
    path = tmp_path / "fuzz.ckpt"
    for prefix in (b"", b"PCKP", b"PCKP" + struct.pack("<H", 1)):
        for _ in range(40):
            tail = rng.integers(0, 256, size=int(rng.integers(0, 60)), dtype=np.uint8)
            path.write_bytes(prefix + tail.tobytes())
            try:
                load_checkpoint(path)
            except FormatError:
                pass


def test_gru_model_round_trip(tmp_path):
    model = GruModel.create(6, make_rng(1), TINY_HEAD, dropout=0.1)
    path = tmp_path / "gru.ckpt"
    save_model(path, model, {"config": {"dropout": 0.1}, "seed": 9})
    loaded, meta = load_model(path)
    assert isinstance(loaded, GruModel)
    assert meta["head"] == "rnn"
    assert meta["seed"] == 9
    assert loaded.dropout == 0.1
    x = make_rng(2).standard_normal((2, 3, 6))
    first, _ = loaded.forward(x, None)
    again = tmp_path / "again.ckpt"
    save_model(again, loaded, {"config": {"dropout": 0.1}, "seed": 9})
    assert path.read_bytes() == again.read_bytes()
    reloaded, _ = load_model(again)
    second, _ = reloaded.forward(x, None)
    np.testing.assert_array_equal(first, second)


def test_avg_model_round_trip(tmp_path):
    model = AvgModel.create(5, make_rng(3))
    path = tmp_path / "avg.ckpt"
    save_model(path, model, {"config": {}})
    loaded, meta = load_model(path)
    assert isinstance(loaded, AvgModel)
    assert meta["head"] == "avg"
    assert loaded.dropout == 0.25  # default when config omits it
    x = make_rng(4).standard_normal((3, 5))
    a, _ = loaded.forward(x, None)
    b, _ = model.forward(x, None)
    np.testing.assert_allclose(a, b, atol=1e-4)  # storage narrows to float32


def test_load_model_rejects_unknown_head(tmp_path):
    path = tmp_path / "odd.ckpt"
    save_checkpoint(path, {"mu": np.zeros(2)}, {"head": "transformer"})
    with pytest.raises(FormatError, match="head kind"):
        load_model(path)


def test_load_model_reports_missing_tensors(tmp_path):
    path = tmp_path / "sparse.ckpt"
    save_checkpoint(path, {"mu": np.zeros(2)}, {"head": "avg"})
    with pytest.raises(FormatError, match="missing tensor"):
        load_model(path)
