#!/usr/bin/env python3
"""Walk through how one image becomes an ordered feature sequence.

No training involved. The script generates a single synthetic image,
shows the overlapping patch grid at full and half scale, and prints the
sequence in the order the regression head would consume it: half-scale
group first, each group sorted by rising spatial activity.
"""

from __future__ import annotations

import argparse

import numpy as np

from patchiq.core import make_rng
from patchiq.features import StatFeatureBackend
from patchiq.grid import compute_grid
from patchiq.multires import MultiresConfig, build_sequence, downscale_half
from patchiq.synth import SynthConfig, generate_image


def show_grid(label: str, width: int, height: int, patch: int) -> None:
    grid = compute_grid(width, height, patch)
    print(f"  {label}: {width}x{height} at patch {patch}")
    print(f"    columns x rows : {grid.n_cols} x {grid.n_rows}"
          f"  ({grid.n_cols * grid.n_rows} patches)")
    print(f"    strides        : {grid.stride_x} px horizontal,"
          f" {grid.stride_y} px vertical")
    xs = sorted({x for x, _ in grid.positions})
    ys = sorted({y for _, y in grid.positions})
    print(f"    column origins : {xs}")
    print(f"    row origins    : {ys}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=640, help="image side length")
    parser.add_argument("--patch", type=int, default=224, help="patch side length")
    parser.add_argument("--seed", type=int, default=7, help="generator seed")
    args = parser.parse_args()

    print("1. Synthesize a test image")
    rng = make_rng(args.seed)
    image, mos = generate_image(rng, SynthConfig(size=args.size, seed=args.seed))
    print(f"  {image.width}x{image.height}, ground-truth quality {mos:.2f} / 100\n")

    print("2. Patch grids at both scales")
    show_grid("full scale", image.width, image.height, args.patch)
    low = downscale_half(image)
    if low.width >= args.patch and low.height >= args.patch:
        show_grid("half scale", low.width, low.height, args.patch)
    else:
        print(f"  half scale: {low.width}x{low.height} is smaller than the patch,"
              " so the low-resolution group is skipped")
    print()

    print("3. Feature sequence in head order")
    cfg = MultiresConfig(patch_size=args.patch)
    seq = build_sequence(image, "demo", cfg, StatFeatureBackend())
    print(f"  {len(seq)} vectors of dimension {seq.dim}")
    print(f"  {'step':>4}  {'scale':<5} {'origin':<12} {'activity':>10}"
          f"  {'|v| mean':>9}")
    for step, v in enumerate(seq.vectors):
        mean_abs = float(np.mean(np.abs(v.values)))
        print(f"  {step:>4}  {v.scale_group.name:<5}"
              f" {'patch ' + str(v.source_index):<12} {v.si:>10.3f}"
              f"  {mean_abs:>9.3f}")
    print()
    print("Within each scale group the activity column rises monotonically;")
    print("the head always sees calm patches before busy ones.")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
