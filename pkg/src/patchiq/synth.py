"""Synthetic graded-quality image generator.

Produces images whose ground-truth quality is known by construction, so
the full pipeline can be exercised end to end without any external
dataset. Each base image is a mid-gray canvas carrying two oriented sine
plane waves (one coarse, one fine, with random orientation, phase, and a
small frequency jitter), degraded by a box blur of radius r in [0, 4]
followed by Gaussian noise with sigma in [0, 30]. Blur comes first so
the added noise keeps its full, directly measurable strength.

The quality label mixes the two normalized distortion magnitudes. The
noise term passes through a response curve that is steep near zero
(the first visible grain costs the most), gentle through the middle,
and steepens again toward the extreme (each step of an already ruined
image still registers), which keeps neighboring severities separable
at both ends of the scale:

    response(s) = 0.8 * s**0.15 + 0.2 * s**4        s = sigma / 30
    mos = 100 * (1 - 0.79 * response(s) - 0.06 * r / 4)

This is 100 for a clean image, strictly decreasing in sigma and in r,
and bottoms out at a floor of 15 when both distortions are maximal.

Noise severities are drawn with a mild bias toward the low end, and the
draw vacates a mid-range band (reflecting draws to just outside its
edges) so the mild and severe halves of the collection stay cleanly
separable instead of blurring into each other at the midpoint.

The order-sensitive variant draws an independent sigma per image
quadrant and weights each quadrant's quality by the rank of its spatial
activity (computed on the finished image): the busiest quadrant counts
most. The label then depends on how quality pairs with activity, which
survives activity-ordered sequences but is destroyed by averaging over
the patch axis: exactly the contrast the ablation study probes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import uniform_filter

from .activity import spatial_activity
from .core import DatasetManifest, ImageBuffer, ManifestEntry, make_rng

NOISE_SIGMA_MAX = 30.0
BLUR_RADIUS_MAX = 4
NOISE_WEIGHT = 0.79
BLUR_WEIGHT = 0.06
MOS_FLOOR = 100.0 * (1.0 - NOISE_WEIGHT - BLUR_WEIGHT)

# steep-onset / gentle-middle / steep-extreme response to noise severity
RESPONSE_EARLY_EXPONENT = 0.15
RESPONSE_LATE_EXPONENT = 4.0
RESPONSE_LATE_SHARE = 0.2

# severity draw: mild bias plus a vacated band separating the two halves
SEVERITY_DRAW_EXPONENT = 1.2
SEPARATION_BAND = (10.0, 14.5)

# (amplitude, cycles across the image) for the coarse and fine waves
TEXTURE_WAVES = ((9.0, 4.0), (7.0, 40.0))
FREQ_JITTER = 0.05


@dataclass
class SynthConfig:
    count: int = 200
    size: int = 640
    seed: int = 7
    order_sensitive: bool = False


def _base_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Mid-gray canvas with two oriented sine plane waves, float64."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.full((size, size), 128.0)
    for amp, freq in TEXTURE_WAVES:
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        jittered = freq * rng.uniform(1.0 - FREQ_JITTER, 1.0 + FREQ_JITTER)
        k = 2.0 * np.pi * jittered / size
        out += amp * np.sin(k * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    return out


def _draw_sigma(rng: np.random.Generator) -> float:
    """Noise severity with mild bias, reflected out of the separation band."""
    sigma = NOISE_SIGMA_MAX * float(rng.uniform()) ** SEVERITY_DRAW_EXPONENT
    lo, hi = SEPARATION_BAND
    mid = 0.5 * (lo + hi)
    if lo < sigma <= mid:
        sigma = 2.0 * lo - sigma
    elif mid < sigma < hi:
        sigma = 2.0 * hi - sigma
    return sigma


def _degrade(field: np.ndarray, radius: int, sigma, rng) -> np.ndarray:
    """Box blur then additive Gaussian noise; sigma may be a per-pixel map."""
    out = field
    if radius > 0:
        out = uniform_filter(out, size=2 * radius + 1, mode="reflect")
    if np.any(np.asarray(sigma) > 0):
        out = out + sigma * rng.standard_normal(out.shape)
    return out


def _to_image(field: np.ndarray) -> ImageBuffer:
    clipped = np.clip(np.rint(field), 0, 255).astype(np.uint8)
    rgb = np.repeat(clipped[:, :, None], 3, axis=2)
    return ImageBuffer.from_array(rgb)


def severity_response(s: float) -> float:
    """Normalized noise response on [0, 1]; strictly increasing."""
    share = RESPONSE_LATE_SHARE
    return (1.0 - share) * s ** RESPONSE_EARLY_EXPONENT + share * s ** RESPONSE_LATE_EXPONENT


def _quality(sigma: float, radius: int) -> float:
    response = severity_response(sigma / NOISE_SIGMA_MAX)
    return 100.0 * (
        1.0 - NOISE_WEIGHT * response - BLUR_WEIGHT * radius / BLUR_RADIUS_MAX
    )


def generate_image(rng: np.random.Generator, cfg: SynthConfig) -> tuple[ImageBuffer, float]:
    """One synthetic image and its ground-truth MOS."""
    base = _base_texture(rng, cfg.size)
    radius = int(rng.integers(0, BLUR_RADIUS_MAX + 1))
    if not cfg.order_sensitive:
        sigma = _draw_sigma(rng)
        return _to_image(_degrade(base, radius, sigma, rng)), _quality(sigma, radius)

    # Order-sensitive: independent noise per quadrant, activity-weighted label.
    half = cfg.size // 2
    sigmas = rng.uniform(0.0, NOISE_SIGMA_MAX, size=4)
    sigma_map = np.empty((cfg.size, cfg.size))
    quads = [
        (slice(0, half), slice(0, half)),
        (slice(0, half), slice(half, cfg.size)),
        (slice(half, cfg.size), slice(0, half)),
        (slice(half, cfg.size), slice(half, cfg.size)),
    ]
    for s, (sy, sx) in zip(sigmas, quads):
        sigma_map[sy, sx] = s
    image = _to_image(_degrade(base, radius, sigma_map, rng))
    luma = image.data[:, :, 0].astype(np.float64)
    activity = np.array([spatial_activity(luma[sy, sx]) for sy, sx in quads])
    # ascending activity rank -> weight 1..4, busiest quadrant counts most
    weights = np.empty(4)
    weights[np.argsort(activity, kind="mergesort")] = np.arange(1.0, 5.0)
    weights /= weights.sum()
    qualities = np.array([_quality(s, radius) for s in sigmas])
    return image, float(np.dot(weights, qualities))


def generate_dataset(out_dir: str | Path, cfg: SynthConfig) -> DatasetManifest:
    """Write PNGs plus a manifest CSV; fully determined by cfg.seed."""
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(cfg.seed)
    entries = []
    for i in range(cfg.count):
        image, mos = generate_image(rng, cfg)
        image_id = f"synth{i:05d}"
        rel = f"images/{image_id}.png"
        Image.fromarray(image.data).save(images_dir / f"{image_id}.png")
        entries.append(ManifestEntry(image_id=image_id, path=rel, mos_raw=mos))
    return DatasetManifest(entries)
