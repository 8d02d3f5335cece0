"""Surrogate reconstruction loop over aligned views.

The model is a single per-pixel RGB estimate and rendering is the identity,
so every view compares against the same image.  Training is plain gradient
descent on the mixed masked loss, one view per step in round-robin order.
Masks stay all-ones during warm-up, then regenerate on a fixed interval from
the configured patch classification mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classify, metrics
from .imagery import load_feature_stack
from .patching import PatchMask, mask_to_pixels, patch_mean

METRIC_MODES = ("photometric-gmm", "perceptual-gmm", "perceptual-percentile", "hybrid")
FEATURE_SOURCES = ("builtin", "fstk")


@dataclass
class PixelModel:
    """Current static-scene hypothesis plus the view count it was built from."""

    estimate: np.ndarray
    num_views: int


@dataclass
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 50.0
    ssim_weight: float = 0.2
    patch_size: int = 16
    warmup_steps: int = 500
    mask_update_interval: int = 100
    metric_mode: str = "hybrid"
    feature_source: str = "builtin"
    feature_dir: str | None = None
    feature_levels: int = 3
    percentile_level: float = 0.85
    log_interval: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.ssim_weight <= 1.0):
            raise ValueError(f"ssim_weight must be in [0, 1], got {self.ssim_weight}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if self.mask_update_interval < 1:
            raise ValueError(
                f"mask_update_interval must be >= 1, got {self.mask_update_interval}"
            )
        if self.metric_mode not in METRIC_MODES:
            raise ValueError(f"unknown metric_mode {self.metric_mode!r}; use one of {METRIC_MODES}")
        if self.feature_source not in FEATURE_SOURCES:
            raise ValueError(
                f"unknown feature_source {self.feature_source!r}; use one of {FEATURE_SOURCES}"
            )
        if self.feature_source == "fstk" and not self.feature_dir:
            raise ValueError("feature_source 'fstk' requires feature_dir")
        if self.feature_levels < 1:
            raise ValueError(f"feature_levels must be >= 1, got {self.feature_levels}")
        if not (0.0 <= self.percentile_level <= 1.0):
            raise ValueError(f"percentile_level must be in [0, 1], got {self.percentile_level}")
        if self.log_interval < 1:
            raise ValueError(f"log_interval must be >= 1, got {self.log_interval}")


@dataclass
class TrainHistory:
    """Per-logged-step series plus the exact steps at which masks regenerated."""

    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    psnrs: list[float] = field(default_factory=list)
    static_fractions: list[float] = field(default_factory=list)
    mask_update_steps: list[int] = field(default_factory=list)


@dataclass
class EvalReport:
    psnr: float
    ssim: float
    mask_iou: float


def init_model(views: list[np.ndarray]) -> PixelModel:
    """Per-pixel mean of all views."""
    if not views:
        raise ValueError("need at least one view")
    shape = views[0].shape
    for i, v in enumerate(views):
        if v.shape != shape:
            raise ValueError(f"view {i} shape {v.shape} differs from view 0 shape {shape}")
    acc = np.zeros(shape, dtype=np.float64)
    for v in views:
        acc += v
    return PixelModel(estimate=acc / len(views), num_views=len(views))


def render(model: PixelModel, view_index: int) -> np.ndarray:
    """Identity rendering: aligned views all see the current estimate."""
    if not (0 <= view_index < model.num_views):
        raise IndexError(f"view index {view_index} out of range [0, {model.num_views})")
    return model.estimate


def _reference_stack(view_index: int, view: np.ndarray, config: TrainConfig):
    if config.feature_source == "builtin":
        return metrics.extract_builtin_features(view, config.feature_levels)
    path = Path(config.feature_dir) / f"feat_{view_index:04d}.fstk"
    if not path.exists():
        raise FileNotFoundError(f"feature stack not found: {path}")
    return load_feature_stack(path)


def masks_from_images(
    rendered: list[np.ndarray], references: list[np.ndarray], config: TrainConfig
) -> list[PatchMask]:
    """Classify patches for each rendered/reference pair under the configured mode.

    This is the one-shot classification entry point: it needs no model, just
    aligned image pairs, and is what an external reconstructor would call.
    """
    if len(rendered) != len(references):
        raise ValueError(
            f"rendered/reference counts differ: {len(rendered)} vs {len(references)}"
        )
    if not rendered:
        raise ValueError("need at least one image pair")
    need_photo = config.metric_mode in ("photometric-gmm", "hybrid")
    need_percep = config.metric_mode in (
        "perceptual-gmm",
        "perceptual-percentile",
        "hybrid",
    )
    photo_errors = []
    percep_errors = []
    for i, (ren, ref) in enumerate(zip(rendered, references)):
        if need_photo:
            emap = metrics.photometric_error(ren, ref)
            photo_errors.append(patch_mean(emap, config.patch_size))
        if need_percep:
            ref_stack = _reference_stack(i, ref, config)
            render_stack = metrics.extract_builtin_features(ren, len(ref_stack.layers))
            emap = metrics.perceptual_error(render_stack, ref_stack, ref.shape[0], ref.shape[1])
            percep_errors.append(patch_mean(emap, config.patch_size))

    if config.metric_mode == "hybrid":
        return classify.hybrid_masks(photo_errors, percep_errors)
    per_image = photo_errors if config.metric_mode == "photometric-gmm" else percep_errors
    pool = classify.pool_patch_errors(per_image)
    if config.metric_mode == "perceptual-percentile":
        threshold = classify.percentile_threshold(pool, config.percentile_level)
        return [classify.classify_percentile(e, threshold) for e in per_image]
    gmm = classify.fit_gmm(pool)
    return [classify.classify_gmm(e, gmm) for e in per_image]


def compute_patch_masks(
    model: PixelModel, views: list[np.ndarray], config: TrainConfig
) -> list[PatchMask]:
    """Classify patches of every view against the current estimate."""
    rendered = [render(model, i) for i in range(len(views))]
    return masks_from_images(rendered, views, config)


def update_masks(
    model: PixelModel, views: list[np.ndarray], config: TrainConfig
) -> list[np.ndarray]:
    """Patch classification projected to per-view pixel masks."""
    return [mask_to_pixels(pm) for pm in compute_patch_masks(model, views, config)]


def train(
    scene_views: list[np.ndarray],
    config: TrainConfig,
    clean_reference: np.ndarray | None = None,
) -> tuple[PixelModel, list[np.ndarray], TrainHistory]:
    """Run the full loop; deterministic given (views, config)."""
    if len(scene_views) < 2:
        raise ValueError(f"need at least 2 views, got {len(scene_views)}")
    config.validate()
    model = init_model(scene_views)
    h, w = model.estimate.shape[:2]
    ones = np.ones((h, w), dtype=np.uint8)
    masks = [ones.copy() for _ in scene_views]
    history = TrainHistory()

    for step in range(config.steps):
        warm = step < config.warmup_steps
        if not warm and (step - config.warmup_steps) % config.mask_update_interval == 0:
            masks = update_masks(model, scene_views, config)
            history.mask_update_steps.append(step)

        view_index = step % len(scene_views)
        mask = ones if warm else masks[view_index]
        report = metrics.masked_loss(
            render(model, view_index), scene_views[view_index], mask, config.ssim_weight
        )

        if step % config.log_interval == 0:
            history.steps.append(step)
            history.losses.append(report.total)
            if clean_reference is not None:
                history.psnrs.append(metrics.psnr(model.estimate, clean_reference))
            else:
                history.psnrs.append(float("nan"))
            if warm:
                history.static_fractions.append(1.0)
            else:
                history.static_fractions.append(float(np.mean([m.mean() for m in masks])))

        model.estimate = model.estimate - config.learning_rate * report.gradient

    return model, masks, history


def transient_iou(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """IoU between predicted and true transient (mask = 0) regions.

    A view with no transient pixels in either mask scores 1.0.
    """
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(f"mask shape mismatch: {pred_mask.shape} vs {gt_mask.shape}")
    pred_t = pred_mask == 0
    gt_t = gt_mask == 0
    union = np.count_nonzero(pred_t | gt_t)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred_t & gt_t) / union


def evaluate(
    model: PixelModel,
    clean: np.ndarray,
    masks: list[np.ndarray],
    gt_masks: list[np.ndarray],
) -> EvalReport:
    """PSNR/SSIM of the estimate against clean plus mean per-view transient IoU."""
    if len(masks) != len(gt_masks):
        raise ValueError(f"mask list lengths differ: {len(masks)} vs {len(gt_masks)}")
    if not masks:
        raise ValueError("need at least one mask pair")
    ious = [transient_iou(p, g) for p, g in zip(masks, gt_masks)]
    return EvalReport(
        psnr=metrics.psnr(model.estimate, clean),
        ssim=metrics.ssim(model.estimate, clean),
        mask_iou=float(np.mean(ious)),
    )
