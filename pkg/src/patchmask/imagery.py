"""Raster and feature-stack containers plus bit-exact file IO.

Images are float64 arrays of shape (H, W, 3) with RGB samples nominally in
[0, 1].  Values may drift outside that range while an estimate is being
optimized; they are clamped only when written to disk.  Binary masks are
uint8 arrays of shape (H, W) with 1 = static and 0 = transient.

Feature stacks are ordered lists of float32 layers of shape (h, w, c) and
travel through the FSTK container, a little-endian binary format defined in
:func:`save_feature_stack`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

FSTK_MAGIC = b"FSTK"
FSTK_VERSION = 1

# Rec. 601 luma weights, shared by the SSIM and feature paths.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass
class FeatureStack:
    """Multi-layer feature maps for one image.

    layers: list of float32 arrays shaped (height_l, width_l, channels_l).
    source_tag: free text recording which extractor produced the stack.
    """

    layers: list[np.ndarray]
    source_tag: str = ""

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("feature stack must have at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.ndim != 3:
                raise ValueError(f"layer {i} must be 3-d (h, w, c), got shape {layer.shape}")
            if not np.all(np.isfinite(layer)):
                raise ValueError(f"layer {i} contains non-finite samples")


def _require_image(arr: np.ndarray, name: str = "image") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def _require_mask(mask: np.ndarray, name: str = "mask") -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"{name} must have shape (H, W), got {mask.shape}")
    vals = np.unique(mask)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"{name} must be binary with values in {{0, 1}}")
    return mask.astype(np.uint8)


def quantize_u8(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize with round-half-up to uint8."""
    clamped = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG (RGB or gray) or binary PPM as a float64 RGB image.

    Samples are mapped to [0, 1] by dividing by 255.  Gray inputs are
    replicated across the three channels.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                raise ValueError(
                    f"unsupported image mode {mode!r} in {path}: "
                    "only 8-bit gray or RGB rasters are accepted"
                )
    except UnidentifiedImageError as exc:
        raise ValueError(f"malformed image header in {path}") from exc
    return arr.astype(np.float64) / 255.0


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write an image as 8-bit RGB PNG, clamping to [0, 1] first."""
    image = _require_image(image)
    data = quantize_u8(image)
    PILImage.fromarray(data, mode="RGB").save(Path(path), format="PNG")


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a binary mask as single-channel PNG, static=255, transient=0."""
    mask = _require_mask(mask)
    PILImage.fromarray(mask * np.uint8(255), mode="L").save(Path(path), format="PNG")


def load_mask(path: str | Path) -> np.ndarray:
    """Read a mask previously written by :func:`save_mask`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask file not found: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode != "L":
                raise ValueError(f"mask {path} must be a single-channel 8-bit PNG, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError(f"malformed image header in {path}") from exc
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 255))):
        raise ValueError(f"mask {path} contains values other than 0 and 255")
    return (arr == 255).astype(np.uint8)


def save_feature_stack(stack: FeatureStack, path: str | Path) -> None:
    """Serialize a feature stack to the FSTK container.

    Layout, all little-endian: magic "FSTK" (4 bytes), format version u32=1,
    layer_count u32; then per layer height u32, width u32, channels u32
    followed by height*width*channels float32 samples, row-major with the
    channel index fastest.
    """
    parts = [FSTK_MAGIC, struct.pack("<II", FSTK_VERSION, len(stack.layers))]
    for layer in stack.layers:
        h, w, c = layer.shape
        parts.append(struct.pack("<III", h, w, c))
        parts.append(np.ascontiguousarray(layer, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_feature_stack(path: str | Path) -> FeatureStack:
    """Parse an FSTK file written by :func:`save_feature_stack`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"feature file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12:
        raise ValueError(f"truncated FSTK file: {path}")
    if raw[:4] != FSTK_MAGIC:
        raise ValueError(f"bad magic in {path}: expected FSTK")
    version, layer_count = struct.unpack_from("<II", raw, 4)
    if version != FSTK_VERSION:
        raise ValueError(f"unsupported FSTK version {version} in {path}")
    if layer_count == 0:
        raise ValueError(f"FSTK file has zero layers: {path}")
    offset = 12
    layers = []
    for i in range(layer_count):
        if offset + 12 > len(raw):
            raise ValueError(f"truncated FSTK file: {path} (layer {i} header)")
        h, w, c = struct.unpack_from("<III", raw, offset)
        offset += 12
        if h == 0 or w == 0 or c == 0:
            raise ValueError(f"FSTK layer {i} in {path} has a zero dimension")
        nbytes = h * w * c * 4
        if offset + nbytes > len(raw):
            raise ValueError(f"truncated FSTK file: {path} (layer {i} payload)")
        flat = np.frombuffer(raw, dtype="<f4", count=h * w * c, offset=offset)
        offset += nbytes
        layer = flat.reshape(h, w, c).astype(np.float32)
        if not np.all(np.isfinite(layer)):
            raise ValueError(f"non-finite sample in FSTK layer {i} of {path}")
        layers.append(layer)
    return FeatureStack(layers=layers, source_tag=f"fstk:{path.name}")
