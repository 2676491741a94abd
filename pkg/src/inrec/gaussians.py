"""Factorized Gaussians: densities, sampling, KL, and the moment-matching
prior update used by the coordinate-descent training loop.

All KL values are in nats internally; `nats_to_bits` converts at the
boundaries where coding budgets live.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .binio import Reader, Writer

LN2 = math.log(2.0)

# Posteriors collapse toward point masses at low beta; flooring the variance
# keeps densities and KL terms finite.
MIN_VARIANCE = 1e-12


def nats_to_bits(nats):
    return nats / LN2


def bits_to_nats(bits):
    return bits * LN2


@dataclasses.dataclass(frozen=True)
class DiagonalGaussian:
    """Fully factorized Gaussian over a flat coordinate vector.

    `variance` holds elementwise variances, not standard deviations.
    """

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        variance = np.atleast_1d(np.asarray(self.variance, dtype=np.float64))
        if mean.ndim != 1 or variance.ndim != 1:
            raise ValueError("mean and variance must be flat vectors")
        if mean.shape != variance.shape:
            raise ValueError(
                f"mean has length {mean.shape[0]} but variance has length {variance.shape[0]}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(variance))):
            raise ValueError("mean and variance must be finite")
        if np.any(variance <= 0.0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    def __len__(self):
        return self.mean.shape[0]

    @property
    def dim(self):
        return self.mean.shape[0]

    def subset(self, indices) -> "DiagonalGaussian":
        """Marginal over the given coordinates (order preserved)."""
        return DiagonalGaussian(self.mean[indices], self.variance[indices])


def _check_same_dim(a: DiagonalGaussian, b: DiagonalGaussian):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def kl_terms(q: DiagonalGaussian, p: DiagonalGaussian) -> np.ndarray:
    """Per-coordinate KL contributions in nats."""
    _check_same_dim(q, p)
    vq = np.maximum(q.variance, MIN_VARIANCE)
    vp = np.maximum(p.variance, MIN_VARIANCE)
    return 0.5 * (np.log(vp / vq) + (vq + (q.mean - p.mean) ** 2) / vp - 1.0)


def kl_divergence(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """KL(q || p) in nats."""
    return float(np.sum(kl_terms(q, p)))


def kl_divergence_bits(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    return nats_to_bits(kl_divergence(q, p))


def log_density(g: DiagonalGaussian, w) -> float:
    """Log density of g at the point w, in nats."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != g.mean.shape:
        raise ValueError(f"point has shape {w.shape}, expected {g.mean.shape}")
    v = np.maximum(g.variance, MIN_VARIANCE)
    return float(-0.5 * np.sum(np.log(2.0 * np.pi * v) + (w - g.mean) ** 2 / v))


def sample(g: DiagonalGaussian, source, n: int | None = None) -> np.ndarray:
    """Reparameterized draw mean + sqrt(variance) * eps.

    `source` is anything with a standard_normal(shape) method, i.e. a
    numpy Generator or the quasi-random adapter in the rec package.
    """
    std = np.sqrt(np.maximum(g.variance, MIN_VARIANCE))
    if n is None:
        eps = source.standard_normal(g.dim)
        return g.mean + std * eps
    eps = source.standard_normal((n, g.dim))
    return g.mean[None, :] + std[None, :] * eps


def prior_update(posteriors) -> DiagonalGaussian:
    """Closed-form minimizer of the average KL(q_i || p) over prior parameters.

    mean: average of posterior means; variance: average of posterior
    variances plus squared deviations of posterior means from the new mean.
    """
    posteriors = list(posteriors)
    if not posteriors:
        raise ValueError("prior_update needs at least one posterior")
    dim = posteriors[0].dim
    for q in posteriors[1:]:
        if q.dim != dim:
            raise ValueError("posteriors must share one dimension")
    means = np.stack([q.mean for q in posteriors])
    variances = np.stack([q.variance for q in posteriors])
    new_mean = means.mean(axis=0)
    new_variance = (variances + (means - new_mean[None, :]) ** 2).mean(axis=0)
    return DiagonalGaussian(new_mean, new_variance)


def write_gaussian(writer: Writer, g: DiagonalGaussian):
    """Length-prefixed little-endian f64 arrays, mean then variance."""
    writer.f64_array(g.mean)
    writer.f64_array(g.variance)


def read_gaussian(reader: Reader) -> DiagonalGaussian:
    mean = reader.f64_array()
    variance = reader.f64_array()
    if mean.shape != variance.shape:
        raise ValueError("serialized mean/variance lengths disagree")
    return DiagonalGaussian(mean, variance)
