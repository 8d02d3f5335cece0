"""Deterministic synthetic multi-view scenes with transient distractors.

A scene is a smooth clean image observed from `num_views` identical
viewpoints; a chosen fraction of the views is corrupted by opaque
rectangles or ellipses that stand in for transient occluders.  Ground-truth
masks record exactly which pixels each distractor covers.  All randomness
flows from a counter-based generator seeded per view, so scenes are
bitwise reproducible and independent of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter


@dataclass
class SceneConfig:
    """Parameters of a synthetic scene; defaults give the standard test scene."""

    height: int = 128
    width: int = 128
    num_views: int = 20
    distractor_view_fraction: float = 0.6
    distractors_per_view: tuple[int, int] = (2, 3)
    distractor_size: tuple[int, int] = (24, 48)
    noise_sigma: float = 0.0
    exposure_jitter: float = 0.0
    seed: int = 0
    hard_mode: bool = False

    def validate(self) -> None:
        if self.height < 16 or self.width < 16:
            raise ValueError(f"scene must be at least 16x16, got {self.height}x{self.width}")
        if self.num_views < 2:
            raise ValueError(f"num_views must be >= 2, got {self.num_views}")
        if not (0.0 <= self.distractor_view_fraction <= 1.0):
            raise ValueError(
                f"distractor_view_fraction must be in [0, 1], got {self.distractor_view_fraction}"
            )
        lo, hi = self.distractors_per_view
        if lo < 1 or hi < lo:
            raise ValueError(f"bad distractors_per_view range: ({lo}, {hi})")
        smin, smax = self.distractor_size
        if smin < 4 or smax < smin:
            raise ValueError(f"bad distractor_size range: ({smin}, {smax})")
        if smin > min(self.height, self.width):
            raise ValueError(
                f"distractor_size minimum {smin} exceeds image side "
                f"{min(self.height, self.width)}"
            )
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (0.0 <= self.exposure_jitter < 1.0):
            raise ValueError(f"exposure_jitter must be in [0, 1), got {self.exposure_jitter}")


@dataclass
class SyntheticScene:
    """Clean image, per-view observations, and per-view ground-truth masks."""

    clean: np.ndarray
    views: list[np.ndarray] = field(default_factory=list)
    gt_static_masks: list[np.ndarray] = field(default_factory=list)
    corrupted_indices: list[int] = field(default_factory=list)
    config: SceneConfig = field(default_factory=SceneConfig)


def _rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def _corner_gradient(
    rng: np.random.Generator, h: int, w: int, lo: float = 0.2, hi: float = 0.8
) -> np.ndarray:
    """Bilinear blend of four random corner colors."""
    corners = rng.uniform(lo, hi, size=(2, 2, 3))
    fy = np.linspace(0.0, 1.0, h)[:, None, None]
    fx = np.linspace(0.0, 1.0, w)[None, :, None]
    top = corners[0, 0] * (1.0 - fx) + corners[0, 1] * fx
    bot = corners[1, 0] * (1.0 - fx) + corners[1, 1] * fx
    return top * (1.0 - fy) + bot * fy


def _paint_shapes(
    rng: np.random.Generator, img: np.ndarray, count: int, lo: float = 0.1, hi: float = 0.9
) -> None:
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(count):
        cy = rng.uniform(0.15 * h, 0.85 * h)
        cx = rng.uniform(0.15 * w, 0.85 * w)
        ry = rng.uniform(0.08, 0.22) * h
        rx = rng.uniform(0.08, 0.22) * w
        color = rng.uniform(lo, hi, size=3)
        if rng.uniform() < 0.5:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            inside = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        blend = rng.uniform(0.5, 0.9)
        img[inside] = (1.0 - blend) * img[inside] + blend * color


def _flatten_regions(rng: np.random.Generator, img: np.ndarray, count: int) -> None:
    """Replace a few rectangles with their mean color to create low-texture areas."""
    h, w = img.shape[:2]
    for _ in range(count):
        rh = int(rng.uniform(0.2, 0.35) * h)
        rw = int(rng.uniform(0.2, 0.35) * w)
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        img[y0 : y0 + rh, x0 : x0 + rw] = img[y0 : y0 + rh, x0 : x0 + rw].mean(axis=(0, 1))


def _clean_image(config: SceneConfig) -> np.ndarray:
    rng = _rng(config.seed, 0)
    h, w = config.height, config.width
    if config.hard_mode:
        # A narrow palette keeps the brightness distribution unimodal, so
        # exposure-induced photometric errors spread smoothly instead of
        # clustering by region.
        img = _corner_gradient(rng, h, w, 0.35, 0.65)
        _paint_shapes(rng, img, count=int(rng.integers(4, 8)), lo=0.3, hi=0.7)
    else:
        img = _corner_gradient(rng, h, w)
        _paint_shapes(rng, img, count=int(rng.integers(4, 8)))
    texture = rng.normal(0.0, 1.0, size=(h, w, 3))
    texture = gaussian_filter(texture, sigma=(2.0, 2.0, 0.0))
    amplitude = 0.015 if config.hard_mode else 0.05
    img = img + amplitude * texture / max(np.abs(texture).max(), 1e-12)
    if config.hard_mode:
        _flatten_regions(rng, img, count=3)
    return np.clip(img, 0.0, 1.0)


def _paint_distractors(
    rng: np.random.Generator, view: np.ndarray, mask: np.ndarray, config: SceneConfig
) -> None:
    h, w = view.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    lo, hi = config.distractors_per_view
    count = int(rng.integers(lo, hi + 1))
    smin, smax = config.distractor_size
    smax_h = min(smax, h)
    smax_w = min(smax, w)
    for _ in range(count):
        dh = int(rng.integers(smin, smax_h + 1))
        dw = int(rng.integers(smin, smax_w + 1))
        y0 = int(rng.integers(0, h - dh + 1))
        x0 = int(rng.integers(0, w - dw + 1))
        if rng.uniform() < 0.5:
            region = np.zeros((h, w), dtype=bool)
            region[y0 : y0 + dh, x0 : x0 + dw] = True
        else:
            cy = y0 + (dh - 1) / 2.0
            cx = x0 + (dw - 1) / 2.0
            region = ((yy - cy) / (dh / 2.0)) ** 2 + ((xx - cx) / (dw / 2.0)) ** 2 <= 1.0
        local_mean = view[y0 : y0 + dh, x0 : x0 + dw].mean(axis=(0, 1))
        if config.hard_mode and rng.uniform() < 0.5:
            # Camouflage: keep the local mean color but impose a high-frequency
            # ripple, so the patch-mean color difference stays small while
            # gradient and contrast features change sharply.
            period = rng.uniform(3.0, 5.0)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.015, 0.025)
            diag = yy + xx if rng.uniform() < 0.5 else yy - xx
            ripple = amp * np.sin(2.0 * np.pi * diag / period + phase)
            flat = np.clip(local_mean[None, :] + ripple[region][:, None], 0.0, 1.0)
            view[region] = flat
        else:
            if config.hard_mode:
                delta = rng.uniform(0.03, 0.05, size=3)
            else:
                delta = rng.uniform(0.3, 0.45, size=3)
            signs = np.where(local_mean > 0.5, -1.0, 1.0)
            view[region] = np.clip(local_mean + signs * delta, 0.0, 1.0)
        mask[region] = 0


def generate_scene(config: SceneConfig | None = None) -> SyntheticScene:
    """Build the full multi-view scene described by `config`."""
    config = config if config is not None else SceneConfig()
    config.validate()
    clean = _clean_image(config)
    h, w = config.height, config.width

    # The small epsilon keeps ratios like 0.7 * 10 from flooring to 6.
    num_corrupt = int(np.floor(config.distractor_view_fraction * config.num_views + 1e-9))
    order = _rng(config.seed, 2).permutation(config.num_views)
    corrupted = sorted(int(v) for v in order[:num_corrupt])
    corrupted_set = set(corrupted)

    views: list[np.ndarray] = []
    gt_static_masks: list[np.ndarray] = []
    for v in range(config.num_views):
        rng = _rng(config.seed, 1, v)
        view = clean.copy()
        if config.exposure_jitter > 0.0:
            # Per-view global gain: spreads photometric errors by brightness
            # while leaving feature directions (and so cosine errors) alone.
            gain = rng.uniform(1.0 - config.exposure_jitter, 1.0 + config.exposure_jitter)
            view = np.clip(view * gain, 0.0, 1.0)
        mask = np.ones((h, w), dtype=np.uint8)
        if v in corrupted_set:
            _paint_distractors(rng, view, mask, config)
        if config.noise_sigma > 0.0:
            view = view + rng.normal(0.0, config.noise_sigma, size=view.shape)
        views.append(np.clip(view, 0.0, 1.0))
        gt_static_masks.append(mask)

    return SyntheticScene(
        clean=clean,
        views=views,
        gt_static_masks=gt_static_masks,
        corrupted_indices=corrupted,
        config=config,
    )
