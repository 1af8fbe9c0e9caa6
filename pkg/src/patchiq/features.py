"""Feature backends and the FSEQ feature-file container.

Two backends share one interface:

* ``StatFeatureBackend`` computes a 48-dim descriptor directly from
  patch pixels (a 4x4 cell grid, three luma statistics per cell). It
  exists so the whole pipeline can run without any external network.
* ``FileLoaderBackend`` stands in for features computed elsewhere
  (e.g. 2048-dim CNN poolings) and delivered as FSEQ files. It cannot
  extract from pixels; that call raises UnsupportedMode.

FSEQ layout (all integers little-endian):

    offset 0   magic b"FSEQ"
    4          u16 version (currently 1)
    6          u16 image-id byte length, then that many UTF-8 bytes
    ..         u16 group count
    per group: u8 scale tag (0 = LOW, 1 = HIGH)
               u32 vector count n, u32 dim d
               n   f32 SI values
               n*d f32 feature values, row-major

Trailing bytes after the last group are an error. All faults raise
FormatError with the byte offset where parsing failed.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activity import sobel_magnitude, to_luma
from .core import FeatureSequence, FeatureVector, Patch, ScaleGroup
from .errors import DimensionTooSmall, FormatError, ShapeError, UnsupportedMode

FSEQ_MAGIC = b"FSEQ"
FSEQ_VERSION = 1

STAT_CELLS = 4          # cells per axis
STAT_DIM = STAT_CELLS * STAT_CELLS * 3


class BackendKind(enum.Enum):
    STAT_FEATURES = "stat"
    FILE_LOADER = "file"


def stat_features(patch: Patch) -> np.ndarray:
    """48-dim patch descriptor over a 4x4 cell grid.

    Per cell (row-major): luma mean, luma population std, mean Sobel
    magnitude with valid convolution inside the cell. Cells below 3x3
    have no valid gradient interior; their Sobel entry is 0.
    """
    h, w = patch.pixels.height, patch.pixels.width
    if h < 2 * STAT_CELLS or w < 2 * STAT_CELLS:
        raise DimensionTooSmall(
            f"stat features need at least {2 * STAT_CELLS}x{2 * STAT_CELLS}, got {w}x{h}"
        )
    if h % STAT_CELLS or w % STAT_CELLS:
        raise ShapeError(
            f"patch {w}x{h} does not divide into a {STAT_CELLS}x{STAT_CELLS} cell grid"
        )
    luma = to_luma(patch.pixels)
    ch, cw = h // STAT_CELLS, w // STAT_CELLS
    out = np.empty(STAT_DIM, dtype=np.float64)
    k = 0
    for cy in range(STAT_CELLS):
        for cx in range(STAT_CELLS):
            cell = luma[cy * ch : (cy + 1) * ch, cx * cw : (cx + 1) * cw]
            out[k] = cell.mean()
            out[k + 1] = np.sqrt(np.mean((cell - cell.mean()) ** 2))
            if ch >= 3 and cw >= 3:
                out[k + 2] = sobel_magnitude(cell).mean()
            else:
                out[k + 2] = 0.0
            k += 3
    return out


@dataclass
class StatFeatureBackend:
    kind: BackendKind = BackendKind.STAT_FEATURES

    @property
    def dim(self) -> int:
        return STAT_DIM

    def extract_features(self, patch: Patch) -> np.ndarray:
        return stat_features(patch)


@dataclass
class FileLoaderBackend:
    """Placeholder for externally computed features shipped as FSEQ files."""

    dim: int = 2048
    kind: BackendKind = BackendKind.FILE_LOADER

    def extract_features(self, patch: Patch) -> np.ndarray:
        raise UnsupportedMode(
            "file-loader backend cannot extract features from pixels; "
            "it only reads feature files"
        )


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    """Serialize a feature sequence; output bytes depend only on the data."""
    groups = [(g, seq.group(g)) for g in (ScaleGroup.LOW, ScaleGroup.HIGH)]
    groups = [(g, vs) for g, vs in groups if vs]
    buf = io.BytesIO()
    buf.write(FSEQ_MAGIC)
    buf.write(struct.pack("<H", FSEQ_VERSION))
    id_bytes = seq.image_id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise ShapeError(f"image id too long to store ({len(id_bytes)} bytes)")
    buf.write(struct.pack("<H", len(id_bytes)))
    buf.write(id_bytes)
    buf.write(struct.pack("<H", len(groups)))
    for g, vs in groups:
        dim = vs[0].dim
        buf.write(struct.pack("<BII", int(g), len(vs), dim))
        si = np.array([v.si for v in vs], dtype="<f4")
        buf.write(si.tobytes())
        feats = np.stack([v.values for v in vs]).astype("<f4")
        if not np.all(np.isfinite(feats)):
            raise ShapeError("feature values overflow float32 storage")
        buf.write(feats.tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    """Byte cursor that raises positioned FormatErrors on truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"unexpected end of file, needed {n} bytes", offset=self.pos
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_feature_file(path: str | Path) -> FeatureSequence:
    """Parse an FSEQ file back into a FeatureSequence.

    Values come back as float64 holding exactly the stored float32s.
    Vector source indices are positions within their group; the original
    grid indices are not stored in the container.
    """
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4)
    if magic != FSEQ_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    ver_off = r.pos
    (version,) = r.unpack("<H")
    if version != FSEQ_VERSION:
        raise FormatError(f"unsupported version {version}", offset=ver_off)
    (id_len,) = r.unpack("<H")
    id_off = r.pos
    try:
        image_id = r.take(id_len).decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("image id is not valid UTF-8", offset=id_off) from None
    (group_count,) = r.unpack("<H")
    vectors: list[FeatureVector] = []
    seq_dim = None
    for _ in range(group_count):
        tag_off = r.pos
        tag, count, dim = r.unpack("<BII")
        try:
            group = ScaleGroup(tag)
        except ValueError:
            raise FormatError(f"bad scale tag {tag}", offset=tag_off) from None
        if seq_dim is None:
            seq_dim = dim
        elif dim != seq_dim:
            raise FormatError(
                f"group dim {dim} conflicts with earlier dim {seq_dim}", offset=tag_off + 5
            )
        si_off = r.pos
        si = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float64)
        bad = np.flatnonzero(~(np.isfinite(si) & (si >= 0.0)))
        if bad.size:
            i = int(bad[0])
            raise FormatError(
                f"SI value {si[i]} must be finite and >= 0", offset=si_off + 4 * i
            )
        feats_off = r.pos
        feats = np.frombuffer(r.take(4 * count * dim), dtype="<f4").astype(np.float64)
        bad = np.flatnonzero(~np.isfinite(feats))
        if bad.size:
            j = int(bad[0])
            raise FormatError("non-finite feature value", offset=feats_off + 4 * j)
        feats = feats.reshape(count, dim)
        for i in range(count):
            vectors.append(
                FeatureVector(
                    values=feats[i], si=float(si[i]), scale_group=group, source_index=i
                )
            )
    if r.pos != len(r.data):
        raise FormatError(
            f"{len(r.data) - r.pos} trailing bytes after last group", offset=r.pos
        )
    return FeatureSequence(image_id=image_id, vectors=vectors)
