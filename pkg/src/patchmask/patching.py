"""Regular patch grids: mean-pooling of error maps and patch-to-pixel projection.

An error map of shape (H, W) is partitioned into non-overlapping patches of
size P x P laid out on a ceil(H/P) x ceil(W/P) grid.  Patches on the bottom
and right edges may be partial; they aggregate only the pixels that exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    rows: int
    cols: int
    image_height: int
    image_width: int

    @classmethod
    def for_image(cls, height: int, width: int, patch_size: int) -> "PatchGrid":
        if patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {patch_size}")
        if height < 1 or width < 1:
            raise ValueError(f"image dimensions must be positive, got {height}x{width}")
        rows = -(-height // patch_size)
        cols = -(-width // patch_size)
        return cls(patch_size, rows, cols, height, width)

    @property
    def num_patches(self) -> int:
        return self.rows * self.cols


@dataclass
class PatchErrors:
    """Per-patch mean errors, row-major over the grid."""

    grid: PatchGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size != self.grid.num_patches:
            raise ValueError(
                f"expected {self.grid.num_patches} patch values, got {self.values.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("patch errors contain non-finite values")
        if np.any(self.values < 0):
            raise ValueError("patch errors must be nonnegative")


@dataclass
class PatchMask:
    """Binary per-patch static map, row-major; 1 = static, 0 = transient."""

    grid: PatchGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values).ravel()
        if vals.size != self.grid.num_patches:
            raise ValueError(f"expected {self.grid.num_patches} mask values, got {vals.size}")
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("patch mask values must be 0 or 1")
        self.values = vals.astype(np.uint8)


def patch_mean(errors: np.ndarray, patch_size: int) -> PatchErrors:
    """Reduce a per-pixel error map to its per-patch means.

    Edge patches that extend past the map average only the covered pixels.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.ndim != 2:
        raise ValueError(f"error map must be 2-d, got shape {errors.shape}")
    h, w = errors.shape
    grid = PatchGrid.for_image(h, w, patch_size)
    row_starts = np.arange(0, h, patch_size)
    col_starts = np.arange(0, w, patch_size)
    sums = np.add.reduceat(np.add.reduceat(errors, row_starts, axis=0), col_starts, axis=1)
    row_counts = np.minimum(row_starts + patch_size, h) - row_starts
    col_counts = np.minimum(col_starts + patch_size, w) - col_starts
    counts = np.outer(row_counts, col_counts).astype(np.float64)
    return PatchErrors(grid=grid, values=(sums / counts).ravel())


def mask_to_pixels(mask: PatchMask) -> np.ndarray:
    """Project a patch mask to pixel resolution; each pixel inherits its patch."""
    grid = mask.grid
    tiled = mask.values.reshape(grid.rows, grid.cols)
    tiled = np.repeat(np.repeat(tiled, grid.patch_size, axis=0), grid.patch_size, axis=1)
    return tiled[: grid.image_height, : grid.image_width].astype(np.uint8)
