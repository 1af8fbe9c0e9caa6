"""patchiq: image quality regression over activity-ordered patch sequences.

An image becomes an overlapping grid of fixed-size patches at two
scales; per-patch feature vectors are ordered by spatial activity and a
recurrent head regresses the ordered sequence to a quality score. The
package provides the full loop: patch geometry, activity ordering,
feature extraction and serialization, the recurrent head with exact
gradients, training, an order-blind baseline, metrics, and a synthetic
dataset generator for end-to-end verification.
"""

__version__ = "0.1.0"

from .activity import order_by_si, sobel_magnitude, spatial_activity, to_luma
from .baseline import BaselineParams, average_pool, baseline_backward, baseline_forward
from .core import (
    DatasetManifest,
    FeatureSequence,
    FeatureVector,
    ImageBuffer,
    ManifestEntry,
    Ordering,
    Patch,
    ScaleGroup,
    Split,
    load_image,
    make_rng,
    read_manifest,
    rescale_mos,
    split_manifest,
    write_manifest,
)
from .features import (
    FileLoaderBackend,
    StatFeatureBackend,
    read_feature_file,
    stat_features,
    write_feature_file,
)
from .grid import PatchGrid, compute_grid, extract_patches
from .head import (
    GruHeadParams,
    GruLayerParams,
    HeadConfig,
    fit_zerocenter,
    gru_cell_forward,
    head_backward,
    head_forward,
)
from .metrics import Metrics, compute_metrics, pearson, rmse_0_100, spearman
from .multires import MultiresConfig, build_sequence, downscale_half
from .synth import SynthConfig, generate_dataset, generate_image
from .train import (
    AdamState,
    AvgModel,
    GruModel,
    TrainConfig,
    adam_step,
    fit,
    huber,
    train,
)

__all__ = [
    "AdamState",
    "AvgModel",
    "BaselineParams",
    "DatasetManifest",
    "FeatureSequence",
    "FeatureVector",
    "FileLoaderBackend",
    "GruHeadParams",
    "GruLayerParams",
    "GruModel",
    "HeadConfig",
    "ImageBuffer",
    "ManifestEntry",
    "Metrics",
    "MultiresConfig",
    "Ordering",
    "Patch",
    "PatchGrid",
    "ScaleGroup",
    "Split",
    "StatFeatureBackend",
    "SynthConfig",
    "TrainConfig",
    "adam_step",
    "average_pool",
    "baseline_backward",
    "baseline_forward",
    "build_sequence",
    "compute_grid",
    "compute_metrics",
    "downscale_half",
    "extract_patches",
    "fit",
    "fit_zerocenter",
    "generate_dataset",
    "generate_image",
    "gru_cell_forward",
    "head_backward",
    "head_forward",
    "huber",
    "load_image",
    "make_rng",
    "order_by_si",
    "pearson",
    "read_feature_file",
    "read_manifest",
    "rescale_mos",
    "rmse_0_100",
    "sobel_magnitude",
    "spatial_activity",
    "spearman",
    "split_manifest",
    "stat_features",
    "to_luma",
    "train",
    "write_feature_file",
    "write_manifest",
]
