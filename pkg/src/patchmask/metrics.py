"""Error maps, the mixed L1/SSIM loss with masking and gradients, and scalar metrics.

The photometric error is the per-pixel channel mean of absolute differences,
which keeps values in [0, 1] regardless of scene content.  The perceptual
error compares feature stacks by cosine similarity per layer, aligns the
per-layer maps to a common resolution with bilinear interpolation, and
averages them.  SSIM follows the usual 11x11 Gaussian-window formulation
(sigma 1.5, C1=0.01^2, C2=0.03^2 for unit dynamic range) evaluated on
luminance over valid window positions only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d, uniform_filter

from .imagery import LUMA_WEIGHTS, FeatureStack, _require_image, _require_mask

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance, shape (H, W)."""
    return image @ LUMA_WEIGHTS


def photometric_error(rendered: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Channel-mean absolute difference per pixel; symmetric in its arguments."""
    rendered = _require_image(rendered, "rendered")
    reference = _require_image(reference, "reference")
    _check_same_shape(rendered, reference)
    return np.mean(np.abs(rendered - reference), axis=2)


def _bilinear_resize(m: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with the half-pixel-center convention.

    Reduces to the identity when the output shape matches the input.
    """
    h, w = m.shape
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = m[np.ix_(y0, x0)] * (1.0 - fx) + m[np.ix_(y0, x1)] * fx
    bot = m[np.ix_(y1, x0)] * (1.0 - fx) + m[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy) + bot * fy


def perceptual_error(
    rendered_feats: FeatureStack,
    reference_feats: FeatureStack,
    out_height: int,
    out_width: int,
) -> np.ndarray:
    """Cosine-distance error map averaged over feature layers.

    Each layer contributes 1 - cosine similarity across its channels; the
    per-layer maps are resampled to (out_height, out_width) and averaged.
    A zero feature vector on either side counts as a perfect match (error 0).
    Values lie in [0, 2].
    """
    if out_height < 1 or out_width < 1:
        raise ValueError(f"output dimensions must be positive, got {out_height}x{out_width}")
    if len(rendered_feats.layers) != len(reference_feats.layers):
        raise ValueError(
            f"layer count mismatch: {len(rendered_feats.layers)} vs {len(reference_feats.layers)}"
        )
    acc = np.zeros((out_height, out_width), dtype=np.float64)
    for i, (fa, fb) in enumerate(zip(rendered_feats.layers, reference_feats.layers)):
        if fa.shape != fb.shape:
            raise ValueError(f"layer {i} shape mismatch: {fa.shape} vs {fb.shape}")
        a = fa.astype(np.float64)
        b = fb.astype(np.float64)
        dot = np.sum(a * b, axis=2)
        na = np.sqrt(np.sum(a * a, axis=2))
        nb = np.sqrt(np.sum(b * b, axis=2))
        denom = na * nb
        cos = np.ones_like(dot)
        nz = denom > 0.0
        cos[nz] = np.clip(dot[nz] / denom[nz], -1.0, 1.0)
        acc += _bilinear_resize(1.0 - cos, out_height, out_width)
    return acc / len(rendered_feats.layers)


# 5-tap binomial kernel used for pyramid construction.
_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _binomial_smooth(img: np.ndarray) -> np.ndarray:
    out = correlate1d(img, _BINOMIAL5, axis=0, mode="reflect")
    return correlate1d(out, _BINOMIAL5, axis=1, mode="reflect")


def extract_builtin_features(image: np.ndarray, levels: int) -> FeatureStack:
    """Deterministic hand-crafted feature pyramid, 7 channels per level.

    Levels form a Gaussian pyramid (5-tap binomial smoothing, then decimation
    by 2).  Each level carries its RGB samples, horizontal and vertical
    central-difference luminance gradients, the gradient magnitude, and a
    3x3 local standard deviation of luminance.
    """
    image = _require_image(image)
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    h, w = image.shape[:2]
    min_side = 2 ** (levels - 1)
    if h < min_side or w < min_side:
        raise ValueError(
            f"image {h}x{w} too small for {levels} pyramid levels (needs {min_side} per side)"
        )
    layers = []
    current = image
    for _ in range(levels):
        lum = luminance(current)
        gy, gx = np.gradient(lum)
        gmag = np.hypot(gx, gy)
        mean = uniform_filter(lum, size=3, mode="reflect")
        mean_sq = uniform_filter(lum * lum, size=3, mode="reflect")
        contrast = np.sqrt(np.maximum(mean_sq - mean * mean, 0.0))
        layer = np.stack(
            [current[:, :, 0], current[:, :, 1], current[:, :, 2], gx, gy, gmag, contrast],
            axis=2,
        )
        layers.append(layer.astype(np.float32))
        current = _binomial_smooth(current)[::2, ::2, :]
    return FeatureStack(layers=layers, source_tag=f"builtin:pyramid7:levels={levels}")


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    g = np.exp(-((np.arange(SSIM_WINDOW) - half) ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return g / g.sum()


_SSIM_KERNEL = _gaussian_window()


def _window_sums(img: np.ndarray) -> np.ndarray:
    """Gaussian-weighted window sums at valid window centers."""
    half = SSIM_WINDOW // 2
    out = correlate1d(img, _SSIM_KERNEL, axis=0, mode="constant", cval=0.0)
    out = correlate1d(out, _SSIM_KERNEL, axis=1, mode="constant", cval=0.0)
    return out[half:-half, half:-half]


def _scatter_windows(coeff: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Distribute per-window coefficients back to pixels through the window weights."""
    half = SSIM_WINDOW // 2
    canvas = np.zeros(shape, dtype=np.float64)
    canvas[half:-half, half:-half] = coeff
    canvas = correlate1d(canvas, _SSIM_KERNEL, axis=0, mode="constant", cval=0.0)
    return correlate1d(canvas, _SSIM_KERNEL, axis=1, mode="constant", cval=0.0)


def _ssim_luminance(lx: np.ndarray, ly: np.ndarray, with_grad: bool):
    """Mean SSIM over valid windows and, optionally, its gradient w.r.t. lx."""
    mu_x = _window_sums(lx)
    mu_y = _window_sums(ly)
    e_xx = _window_sums(lx * lx)
    e_yy = _window_sums(ly * ly)
    e_xy = _window_sums(lx * ly)
    var_x = e_xx - mu_x * mu_x
    var_y = e_yy - mu_y * mu_y
    cov = e_xy - mu_x * mu_y

    a1 = 2.0 * mu_x * mu_y + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    denom = b1 * b2
    ssim_map = (a1 * a2) / denom
    value = float(np.mean(ssim_map))
    if not with_grad:
        return value, None

    # d ssim / d lx decomposes into a per-window constant plus terms linear in
    # lx and ly; each is pushed back to pixels through the window weights.
    n_windows = ssim_map.size
    inv = 2.0 / denom
    coeff_const = inv * (mu_y * a2 - a1 * mu_y - ssim_map * (mu_x * b2 - b1 * mu_x))
    coeff_y = inv * a1
    coeff_x = -inv * ssim_map * b1
    grad = (
        _scatter_windows(coeff_const, lx.shape)
        + ly * _scatter_windows(coeff_y, lx.shape)
        + lx * _scatter_windows(coeff_x, lx.shape)
    ) / n_windows
    return value, grad


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean luminance SSIM over valid 11x11 Gaussian windows."""
    a = _require_image(a, "a")
    b = _require_image(b, "b")
    _check_same_shape(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {a.shape[:2]}"
        )
    value, _ = _ssim_luminance(luminance(a), luminance(b), with_grad=False)
    return value


@dataclass
class LossReport:
    """Mixed loss value, its parts, and the gradient w.r.t. the rendered image."""

    total: float
    l1_part: float
    ssim_part: float
    gradient: np.ndarray


def masked_loss(
    rendered: np.ndarray,
    reference: np.ndarray,
    mask: np.ndarray,
    ssim_weight: float = 0.2,
) -> LossReport:
    """Mixed L1/SSIM loss on mask-premultiplied images, with analytic gradient.

    Both images are multiplied by the mask before any comparison, so the
    gradient w.r.t. the rendered image is exactly zero at masked-out pixels.
    With an all-ones mask this equals the unmasked mixed loss.
    """
    rendered = _require_image(rendered, "rendered")
    reference = _require_image(reference, "reference")
    _check_same_shape(rendered, reference)
    mask = _require_mask(mask)
    if mask.shape != rendered.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {rendered.shape[:2]}")
    if not (0.0 <= ssim_weight <= 1.0):
        raise ValueError(f"ssim_weight must be in [0, 1], got {ssim_weight}")
    if rendered.shape[0] < SSIM_WINDOW or rendered.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {rendered.shape[:2]}"
        )

    m = mask.astype(np.float64)[:, :, None]
    masked_rendered = rendered * m
    masked_reference = reference * m
    diff = masked_rendered - masked_reference

    l1_part = float(np.mean(np.abs(diff)))
    l1_grad = np.sign(diff) / diff.size

    ssim_value, ssim_lum_grad = _ssim_luminance(
        luminance(masked_rendered), luminance(masked_reference), with_grad=True
    )
    ssim_part = 1.0 - ssim_value
    ssim_grad = -ssim_lum_grad[:, :, None] * LUMA_WEIGHTS[None, None, :] * m

    total = (1.0 - ssim_weight) * l1_part + ssim_weight * ssim_part
    gradient = (1.0 - ssim_weight) * l1_grad + ssim_weight * ssim_grad
    return LossReport(total=total, l1_part=l1_part, ssim_part=ssim_part, gradient=gradient)


PSNR_CAP_DB = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit peak, capped at 99 dB."""
    a = _require_image(a, "a")
    b = _require_image(b, "b")
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))
