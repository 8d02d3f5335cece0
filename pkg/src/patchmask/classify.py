"""Static/transient decisions over pooled patch errors.

Two classifiers operate on the pool of patch-mean errors gathered across all
training images: a nearest-rank percentile threshold and a two-component
one-dimensional Gaussian mixture fitted by EM.  The hybrid composition runs
the mixture on photometric errors, uses the resulting static proportion as
the percentile level for perceptual errors, and intersects the two masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .patching import PatchErrors, PatchMask

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class EmConfig:
    """Settings for the mixture fit."""

    tol: float = 1e-8          # stop when the log-likelihood gain drops below this
    max_iter: int = 200
    var_floor: float = 1e-8


@dataclass
class PooledErrors:
    """All patch errors across an image set, flattened in image order.

    offsets[i] is the start of image i's slice; offsets[-1] equals the total
    length, so image i occupies values[offsets[i]:offsets[i + 1]].
    """

    values: np.ndarray
    offsets: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("pooled errors contain non-finite values")
        if not self.offsets:
            self.offsets = [0, self.values.size]


def pool_patch_errors(per_image: list[PatchErrors]) -> PooledErrors:
    """Concatenate per-image patch errors into one global pool."""
    if not per_image:
        raise ValueError("cannot pool an empty list of patch errors")
    offsets = [0]
    for pe in per_image:
        offsets.append(offsets[-1] + pe.values.size)
    values = np.concatenate([pe.values for pe in per_image])
    return PooledErrors(values=values, offsets=offsets)


@dataclass
class GmmParams:
    """Two-component 1-d Gaussian mixture, components ordered by mean.

    The first component models the (low-error) static population.  When
    `degenerate` is set the fit collapsed to a single effective mode and
    every patch is treated as static.
    """

    beta: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    converged: bool
    iterations: int
    final_log_likelihood: float
    degenerate: bool = False
    log_likelihood_trace: list[float] = field(default_factory=list)


def nearest_rank_percentile(values: np.ndarray, level: float) -> float:
    """Nearest-rank percentile: the ascending-sorted value at 1-based index ceil(level*n).

    level=0 returns -inf (an empty admission set); level=1 returns the maximum.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("percentile of an empty pool")
    if not (0.0 <= level <= 1.0):
        raise ValueError(f"percentile level must be in [0, 1], got {level}")
    if level == 0.0:
        return float("-inf")
    x = level * values.size
    # Snap near-integer products so ratios like k/n survive the round trip.
    if abs(x - round(x)) < 1e-9:
        rank = int(round(x))
    else:
        rank = int(math.ceil(x))
    rank = max(1, min(rank, values.size))
    return float(np.sort(values)[rank - 1])


def percentile_threshold(pool: PooledErrors, level: float) -> float:
    """Threshold below which a fraction `level` of the pooled errors falls."""
    return nearest_rank_percentile(pool.values, level)


def classify_percentile(errors: PatchErrors, threshold: float) -> PatchMask:
    """A patch is static iff its mean error is <= threshold."""
    static = errors.values <= threshold
    return PatchMask(grid=errors.grid, values=static.astype(np.uint8))


def _log_component_densities(x: np.ndarray, beta, mu, sigma2) -> np.ndarray:
    """log(beta_k * N(x | mu_k, sigma2_k)) for both components, shape (2, n)."""
    out = np.empty((2, x.size), dtype=np.float64)
    for k in range(2):
        out[k] = (
            math.log(beta[k])
            - 0.5 * (LOG_2PI + math.log(sigma2[k]))
            - (x - mu[k]) ** 2 / (2.0 * sigma2[k])
        )
    return out


def fit_gmm(pool: PooledErrors, config: EmConfig | None = None) -> GmmParams:
    """Fit the two-component mixture by EM.

    Means start at the 25th/75th nearest-rank percentiles, both variances at
    the pool variance (floored), and the weights at (0.5, 0.5).  Iteration
    stops when the log-likelihood gain falls below config.tol or after
    config.max_iter rounds.  The per-iteration log-likelihood is checked to
    be non-decreasing (1e-9 slack for rounding) and kept in the returned
    trace.
    """
    if config is None:
        config = EmConfig()
    x = pool.values
    n = x.size
    if n < 8:
        raise ValueError(f"mixture fit needs at least 8 samples, got {n}")

    mu = np.array(
        [nearest_rank_percentile(x, 0.25), nearest_rank_percentile(x, 0.75)],
        dtype=np.float64,
    )
    var0 = max(float(np.var(x)), config.var_floor)
    sigma2 = np.array([var0, var0], dtype=np.float64)
    beta = np.array([0.5, 0.5], dtype=np.float64)

    trace: list[float] = []
    converged = False
    iterations = 0
    log_lik = -np.inf
    for it in range(config.max_iter):
        iterations = it + 1
        log_joint = _log_component_densities(x, beta, mu, sigma2)
        log_norm = logsumexp(log_joint, axis=0)
        new_log_lik = float(np.sum(log_norm))
        if trace and new_log_lik < trace[-1] - 1e-9:
            raise AssertionError(
                f"EM log-likelihood decreased: {trace[-1]} -> {new_log_lik}"
            )
        trace.append(new_log_lik)
        gain = new_log_lik - log_lik
        log_lik = new_log_lik
        if gain < config.tol:
            converged = True
            break

        resp = np.exp(log_joint - log_norm)
        weight = resp.sum(axis=1)
        weight = np.maximum(weight, 1e-300)
        beta = weight / n
        mu = (resp @ x) / weight
        sigma2 = np.maximum(
            np.array([(resp[k] @ (x - mu[k]) ** 2) / weight[k] for k in range(2)]),
            config.var_floor,
        )

    if mu[0] > mu[1]:
        mu = mu[::-1].copy()
        sigma2 = sigma2[::-1].copy()
        beta = beta[::-1].copy()

    degenerate = (
        abs(mu[1] - mu[0]) < 1e-3 * (mu[1] + mu[0] + 1e-12)
        or beta[0] < 1e-3
        or beta[1] < 1e-3
    )
    return GmmParams(
        beta=beta,
        mu=mu,
        sigma2=sigma2,
        converged=converged,
        iterations=iterations,
        final_log_likelihood=log_lik,
        degenerate=degenerate,
        log_likelihood_trace=trace,
    )


def classify_gmm(errors: PatchErrors, gmm: GmmParams) -> PatchMask:
    """A patch is static iff the static component's posterior is >= 0.5.

    The comparison is done in log space: posterior >= 0.5 is equivalent to
    log(beta_1 N_1) >= log(beta_2 N_2), which never under- or overflows.
    A degenerate fit classifies every patch as static.
    """
    if gmm.degenerate:
        static = np.ones(errors.values.size, dtype=np.uint8)
        return PatchMask(grid=errors.grid, values=static)
    log_joint = _log_component_densities(errors.values, gmm.beta, gmm.mu, gmm.sigma2)
    static = log_joint[0] >= log_joint[1]
    return PatchMask(grid=errors.grid, values=static.astype(np.uint8))


def static_proportion(masks: list[PatchMask]) -> float:
    """Fraction of patches classified static across the whole image set."""
    if not masks:
        raise ValueError("static_proportion of an empty mask list")
    static = sum(int(m.values.sum()) for m in masks)
    total = sum(m.values.size for m in masks)
    return static / total


def hybrid_masks(
    photo_errors: list[PatchErrors],
    percep_errors: list[PatchErrors],
    config: EmConfig | None = None,
) -> list[PatchMask]:
    """Compose the photometric-guided hybrid static masks.

    1. Pool the photometric patch errors, fit the mixture, and classify each
       image to get the photometric masks.
    2. That classification's global static proportion becomes the percentile
       level for the perceptual pool.
    3. Classify the perceptual errors against the pooled percentile.
    4. Intersect the two masks per patch.
    """
    if not photo_errors or not percep_errors:
        raise ValueError("hybrid_masks needs non-empty error lists")
    if len(photo_errors) != len(percep_errors):
        raise ValueError(
            f"got {len(photo_errors)} photometric vs {len(percep_errors)} perceptual error sets"
        )
    for i, (pe, qe) in enumerate(zip(photo_errors, percep_errors)):
        if pe.grid != qe.grid:
            raise ValueError(f"patch grid mismatch between metrics for image {i}")

    gmm = fit_gmm(pool_patch_errors(photo_errors), config)
    photo_masks = [classify_gmm(pe, gmm) for pe in photo_errors]
    level = static_proportion(photo_masks)
    threshold = percentile_threshold(pool_patch_errors(percep_errors), level)
    percep_masks = [classify_percentile(qe, threshold) for qe in percep_errors]
    return [
        PatchMask(grid=pm.grid, values=pm.values & qm.values)
        for pm, qm in zip(photo_masks, percep_masks)
    ]
