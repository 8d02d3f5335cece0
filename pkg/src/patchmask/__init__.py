"""Patch-wise static/transient classification for multi-view image reconstruction.

The pipeline: per-view error maps (photometric and feature-cosine), patch-mean
reduction, a two-component 1-D GMM on pooled photometric errors, percentile
thresholding of perceptual errors at the GMM's static proportion, and the
intersection of both masks gating a mixed L1/SSIM reconstruction loss.
"""

__version__ = "0.1.0"

from .classify import (
    EmConfig,
    GmmParams,
    PooledErrors,
    classify_gmm,
    classify_percentile,
    fit_gmm,
    hybrid_masks,
    nearest_rank_percentile,
    percentile_threshold,
    pool_patch_errors,
    static_proportion,
)
from .imagery import (
    FeatureStack,
    load_feature_stack,
    load_image,
    load_mask,
    save_feature_stack,
    save_image,
    save_mask,
)
from .metrics import (
    LossReport,
    extract_builtin_features,
    masked_loss,
    perceptual_error,
    photometric_error,
    psnr,
    ssim,
)
from .patching import PatchErrors, PatchGrid, PatchMask, mask_to_pixels, patch_mean
from .synth import SceneConfig, SyntheticScene, generate_scene
from .trainer import (
    EvalReport,
    PixelModel,
    TrainConfig,
    TrainHistory,
    evaluate,
    init_model,
    masks_from_images,
    render,
    train,
    transient_iou,
    update_masks,
)

__all__ = [
    "EmConfig",
    "EvalReport",
    "FeatureStack",
    "GmmParams",
    "LossReport",
    "PatchErrors",
    "PatchGrid",
    "PatchMask",
    "PixelModel",
    "PooledErrors",
    "SceneConfig",
    "SyntheticScene",
    "TrainConfig",
    "TrainHistory",
    "classify_gmm",
    "classify_percentile",
    "evaluate",
    "extract_builtin_features",
    "fit_gmm",
    "generate_scene",
    "hybrid_masks",
    "init_model",
    "load_feature_stack",
    "load_image",
    "load_mask",
    "masked_loss",
    "mask_to_pixels",
    "masks_from_images",
    "nearest_rank_percentile",
    "patch_mean",
    "perceptual_error",
    "percentile_threshold",
    "photometric_error",
    "pool_patch_errors",
    "psnr",
    "render",
    "save_feature_stack",
    "save_image",
    "save_mask",
    "ssim",
    "static_proportion",
    "train",
    "transient_iou",
    "update_masks",
]
