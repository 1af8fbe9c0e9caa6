"""Spatial activity: luma conversion, Sobel gradients, and SI ordering.

SI (spatial information) is the population standard deviation of the
Sobel gradient magnitude over a patch's luma plane. Gradients use valid
convolution only, so a 3x3 neighborhood is required and borders are
excluded; an all-constant patch has SI exactly 0.
"""

from __future__ import annotations

import numpy as np

from .core import FeatureVector, ImageBuffer
from .errors import DimensionTooSmall

# ITU-R BT.601 luma weights for R, G, B.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = SOBEL_X.T.copy()


def to_luma(image: ImageBuffer) -> np.ndarray:
    """Luma plane as float64, shape (H, W). 1-channel data passes through."""
    data = image.data.astype(np.float64)
    if image.channels == 1:
        return data[:, :, 0]
    r, g, b = data[:, :, 0], data[:, :, 1], data[:, :, 2]
    wr, wg, wb = LUMA_WEIGHTS
    return wr * r + wg * g + wb * b


def sobel_magnitude(luma: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a luma plane, valid convolution.

    Output shape is (H-2, W-2). Raises DimensionTooSmall below 3x3.
    """
    luma = np.asarray(luma, dtype=np.float64)
    h, w = luma.shape
    if h < 3 or w < 3:
        raise DimensionTooSmall(f"need at least 3x3 for gradients, got {h}x{w}")
    gx = np.zeros((h - 2, w - 2))
    gy = np.zeros((h - 2, w - 2))
    for dy in range(3):
        for dx in range(3):
            window = luma[dy : dy + h - 2, dx : dx + w - 2]
            if SOBEL_X[dy, dx] != 0.0:
                gx += SOBEL_X[dy, dx] * window
            if SOBEL_Y[dy, dx] != 0.0:
                gy += SOBEL_Y[dy, dx] * window
    return np.sqrt(gx * gx + gy * gy)


def spatial_activity(patch_luma: np.ndarray) -> float:
    """SI: population standard deviation of the Sobel magnitude field."""
    mag = sobel_magnitude(patch_luma)
    return float(np.sqrt(np.mean((mag - mag.mean()) ** 2)))


def order_by_si(vectors: list[FeatureVector]) -> list[FeatureVector]:
    """Sort ascending by SI; equal SI keeps ascending source order."""
    return sorted(vectors, key=lambda v: (v.si, v.source_index))
