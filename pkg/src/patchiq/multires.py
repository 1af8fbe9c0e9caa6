"""Two-scale sequence assembly.

An image contributes two patch groups: LOW comes from a half-resolution
copy (pixel-area downscale), HIGH from the original. Each group is
ordered independently (ascending SI by default) and the LOW group is
placed before the HIGH group in the final sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .activity import order_by_si, spatial_activity, to_luma
from .core import FeatureSequence, FeatureVector, ImageBuffer, Ordering, ScaleGroup
from .errors import DimensionTooSmall, LowScaleTooSmall, ValidationError
from .grid import compute_grid, extract_patches

logger = logging.getLogger(__name__)


@dataclass
class MultiresConfig:
    """Knobs for sequence assembly.

    enable_low_scale: include the half-resolution group.
    strict_low_scale: error instead of warn when the downscaled image is
        too small to tile (otherwise the LOW group is skipped).
    ordering: how vectors are arranged within each group.
    """

    patch_size: int = 224
    enable_low_scale: bool = True
    strict_low_scale: bool = False
    ordering: Ordering = Ordering.ASC_SI


def downscale_half(image: ImageBuffer) -> ImageBuffer:
    """Area-averaged 2x downscale to ceil(W/2) x ceil(H/2), 8-bit output.

    Interior output pixels average a 2x2 block; when a dimension is odd
    the trailing output pixel averages the remaining 1x2 / 2x1 / 1x1
    block. Block means are exact in float64 (divisors 1, 2, 4), and the
    result rounds to nearest with ties away from zero.

    Implemented by repeating the final row/column for odd sizes: a
    sample averaged with its own copy equals the 1-wide block mean.
    """
    data = image.data.astype(np.float64)
    h, w = image.height, image.width
    if h % 2:
        data = np.concatenate([data, data[-1:]], axis=0)
    if w % 2:
        data = np.concatenate([data, data[:, -1:]], axis=1)
    ph, pw = data.shape[0], data.shape[1]
    mean = data.reshape(ph // 2, 2, pw // 2, 2, image.channels).mean(axis=(1, 3))
    out = np.floor(mean + 0.5).astype(np.uint8)
    return ImageBuffer(width=pw // 2, height=ph // 2, channels=image.channels, data=out)


def _group_vectors(image, scale_group, cfg, extractor, rng):
    grid = compute_grid(image.width, image.height, cfg.patch_size)
    patches = extract_patches(image, grid, scale_group)
    vectors = []
    for patch in patches:
        si = spatial_activity(to_luma(patch.pixels))
        values = extractor.extract_features(patch)
        vectors.append(
            FeatureVector(
                values=values,
                si=si,
                scale_group=scale_group,
                source_index=patch.source_index,
            )
        )
    if cfg.ordering is Ordering.ASC_SI:
        return order_by_si(vectors)
    if cfg.ordering is Ordering.RASTER:
        return vectors
    if cfg.ordering is Ordering.RANDOM:
        if rng is None:
            raise ValidationError("random ordering needs an rng")
        return [vectors[i] for i in rng.permutation(len(vectors))]
    raise ValidationError(f"unknown ordering {cfg.ordering!r}")


def build_sequence(
    image: ImageBuffer,
    image_id: str,
    cfg: MultiresConfig,
    extractor,
    rng=None,
) -> FeatureSequence:
    """Assemble the ordered feature sequence for one image.

    ``extractor`` is any object with ``extract_features(patch) -> values``
    (see the feature backends). The LOW group comes first when enabled
    and the downscaled image still fits at least one patch.
    """
    vectors: list[FeatureVector] = []
    if cfg.enable_low_scale:
        low = downscale_half(image)
        if low.width < cfg.patch_size or low.height < cfg.patch_size:
            msg = (
                f"{image_id}: downscaled size {low.width}x{low.height} below patch "
                f"size {cfg.patch_size}, low-scale group skipped"
            )
            if cfg.strict_low_scale:
                raise LowScaleTooSmall(msg)
            logger.warning(msg)
        else:
            vectors.extend(_group_vectors(low, ScaleGroup.LOW, cfg, extractor, rng))
    vectors.extend(_group_vectors(image, ScaleGroup.HIGH, cfg, extractor, rng))
    if not vectors:
        raise DimensionTooSmall(f"{image_id}: no patches could be extracted")
    return FeatureSequence(image_id=image_id, vectors=vectors)
