"""Overlapping patch grid: stride computation and patch extraction.

The grid places ceil(W/P) columns and ceil(H/P) rows of P x P patches.
With n > 1 columns the stride is floor((W - P) / (n - 1)); origins are
i * stride for i = 0..n-2 and the last origin is pinned to W - P so the
far edge is always reached. Rows work the same way on H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ImageBuffer, Patch, ScaleGroup
from .errors import DimensionTooSmall, GridMismatch


def _axis_origins(extent: int, patch: int) -> tuple[int, list[int]]:
    n = math.ceil(extent / patch)
    if n == 1:
        return 0, [0]
    stride = (extent - patch) // (n - 1)
    origins = [i * stride for i in range(n - 1)]
    origins.append(extent - patch)
    return stride, origins


@dataclass(frozen=True)
class PatchGrid:
    """Patch origins for one image size. Positions are row-major (x, y)."""

    width: int
    height: int
    patch_size: int
    stride_x: int
    stride_y: int
    n_cols: int
    n_rows: int
    positions: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.positions)


def compute_grid(width: int, height: int, patch_size: int) -> PatchGrid:
    """Lay out the overlapping patch grid for an image size.

    Raises DimensionTooSmall if the image cannot hold a single patch.
    """
    if patch_size < 1:
        raise DimensionTooSmall(f"patch size must be >= 1, got {patch_size}")
    if width < patch_size or height < patch_size:
        raise DimensionTooSmall(
            f"image {width}x{height} smaller than patch size {patch_size}"
        )
    stride_x, xs = _axis_origins(width, patch_size)
    stride_y, ys = _axis_origins(height, patch_size)
    positions = tuple((x, y) for y in ys for x in xs)
    return PatchGrid(
        width=width,
        height=height,
        patch_size=patch_size,
        stride_x=stride_x,
        stride_y=stride_y,
        n_cols=len(xs),
        n_rows=len(ys),
        positions=positions,
    )


def extract_patches(
    image: ImageBuffer, grid: PatchGrid, scale_group: ScaleGroup = ScaleGroup.HIGH
) -> list[Patch]:
    """Cut the grid's patches out of the image, pixels copied verbatim."""
    if image.width != grid.width or image.height != grid.height:
        raise GridMismatch(
            f"grid built for {grid.width}x{grid.height} applied to "
            f"{image.width}x{image.height} image"
        )
    p = grid.patch_size
    patches = []
    for idx, (x, y) in enumerate(grid.positions):
        crop = image.data[y : y + p, x : x + p, :].copy()
        patches.append(
            Patch(
                pixels=ImageBuffer(width=p, height=p, channels=image.channels, data=crop),
                origin_x=x,
                origin_y=y,
                scale_group=scale_group,
                source_index=idx,
            )
        )
    return patches
