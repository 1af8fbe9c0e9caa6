"""Core data types: images, patches, feature vectors, manifests, RNG.

All pixel data is 8-bit, row-major, channel-interleaved. Feature math is
float64 in memory; the on-disk containers narrow to float32.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimMismatch, ShapeError, ValidationError


class ScaleGroup(enum.IntEnum):
    """Which resolution a patch came from. Values match the file format tag."""

    LOW = 0
    HIGH = 1


class Ordering(enum.Enum):
    """Sequence ordering strategy for patch feature vectors."""

    ASC_SI = "asc_si"
    RASTER = "raster"
    RANDOM = "random"


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic random generator for a seed.

    Backed by PCG64, which produces an identical stream for an identical
    seed across runs and platforms. Every randomized stage of the package
    (init, shuffling, dropout, synthesis) draws from a generator created
    here, so a run is reproducible from its seed alone.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass
class ImageBuffer:
    """8-bit image, shape (height, width, channels), 1 or 3 channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        if self.channels not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.channels}")
        if self.data.dtype != np.uint8:
            raise ValidationError(f"pixel data must be uint8, got {self.data.dtype}")
        expected = (self.height, self.width, self.channels)
        if self.data.shape != expected:
            raise ShapeError(
                f"pixel array shape {self.data.shape} does not match {expected}"
            )

    @classmethod
    def from_array(cls, data: np.ndarray) -> "ImageBuffer":
        """Wrap an (H, W) or (H, W, C) uint8 array."""
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ShapeError(f"expected 2-D or 3-D array, got {data.ndim}-D")
        h, w, c = data.shape
        return cls(width=w, height=h, channels=c, data=data)


@dataclass
class Patch:
    """A square crop of an image plus where it came from."""

    pixels: ImageBuffer
    origin_x: int
    origin_y: int
    scale_group: ScaleGroup
    source_index: int


@dataclass(eq=False)
class FeatureVector:
    """One patch's feature values with its spatial-activity score."""

    values: np.ndarray
    si: float
    scale_group: ScaleGroup
    source_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError(f"feature values must be 1-D, got {self.values.ndim}-D")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("feature values must all be finite")
        if not np.isfinite(self.si) or self.si < 0:
            raise ValidationError(f"SI must be finite and >= 0, got {self.si}")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(eq=False)
class FeatureSequence:
    """Ordered feature vectors for one image.

    The default pipeline orders each scale group by ascending SI and puts
    the LOW group before the HIGH group. Alternative orderings are legal
    (they exist for ablations), so order is not enforced here; use
    :func:`ordered_by_activity` to check the default invariant.
    """

    image_id: str
    vectors: list[FeatureVector] = field(default_factory=list)

    def __post_init__(self):
        dims = {v.dim for v in self.vectors}
        if len(dims) > 1:
            raise DimMismatch(f"mixed feature dims in one sequence: {sorted(dims)}")

    @property
    def dim(self) -> int:
        if not self.vectors:
            return 0
        return self.vectors[0].dim

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Stack vectors into a (T, D) float64 array."""
        return np.stack([v.values for v in self.vectors], axis=0)

    def group(self, scale_group: ScaleGroup) -> list[FeatureVector]:
        return [v for v in self.vectors if v.scale_group == scale_group]

    def ordered_by_activity(self) -> bool:
        """True if LOW precedes HIGH and SI is non-decreasing within groups."""
        tags = [v.scale_group for v in self.vectors]
        if tags != sorted(tags):
            return False
        for g in ScaleGroup:
            sis = [v.si for v in self.vectors if v.scale_group == g]
            if any(a > b for a, b in zip(sis, sis[1:])):
                return False
        return True


def load_image(path: str | Path) -> ImageBuffer:
    """Decode an image file (PNG, BMP, ...) to 8-bit RGB."""
    from PIL import Image

    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return ImageBuffer.from_array(np.asarray(rgb, dtype=np.uint8))


def rescale_mos(mos_raw: float) -> float:
    """Map a 0-100 quality score to the 0-1 training target scale."""
    if not (0.0 <= mos_raw <= 100.0):
        raise ValidationError(f"MOS must be in [0, 100], got {mos_raw}")
    return mos_raw / 100.0


def mos_to_raw(target: float) -> float:
    """Inverse of :func:`rescale_mos`."""
    return target * 100.0


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class ManifestEntry:
    image_id: str
    path: str
    mos_raw: float
    split: Split | None = None

    def __post_init__(self):
        if not (0.0 <= self.mos_raw <= 100.0):
            raise ValidationError(
                f"MOS for {self.image_id!r} must be in [0, 100], got {self.mos_raw}"
            )


@dataclass
class DatasetManifest:
    """The image list a study runs over: id, file path, MOS, split."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise ValidationError(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, split: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]


MANIFEST_HEADER = ["image_id", "path", "mos", "split"]


def read_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest CSV. The split column may be empty (unassigned)."""
    path = Path(path)
    entries = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ValidationError(
                f"bad manifest header {header!r}, expected {MANIFEST_HEADER!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            image_id, img_path, mos_s, split_s = row
            try:
                mos = float(mos_s)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad MOS value {mos_s!r}") from None
            if split_s == "":
                split = None
            else:
                try:
                    split = Split(split_s)
                except ValueError:
                    raise ValidationError(
                        f"{path}:{lineno}: bad split {split_s!r}, expected train/test"
                    ) from None
            entries.append(ManifestEntry(image_id, img_path, mos, split))
    return DatasetManifest(entries)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow(
                [e.image_id, e.path, repr(e.mos_raw), "" if e.split is None else e.split.value]
            )


def split_manifest(manifest: DatasetManifest, ratio: float, seed: int) -> DatasetManifest:
    """Assign train/test splits by a seeded shuffle.

    The first ceil(ratio * N) entries of the shuffled order become the
    training split. A tiny guard keeps float noise in ratio * N from
    bumping an exact integer boundary up by one.
    """
    if not (0.0 < ratio < 1.0):
        raise ValidationError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(manifest)
    if n == 0:
        raise ValidationError("cannot split an empty manifest")
    n_train = math.ceil(ratio * n - 1e-9)
    perm = make_rng(seed).permutation(n)
    train_idx = set(perm[:n_train].tolist())
    entries = [
        ManifestEntry(
            e.image_id, e.path, e.mos_raw, Split.TRAIN if i in train_idx else Split.TEST
        )
        for i, e in enumerate(manifest.entries)
    ]
    return DatasetManifest(entries)
