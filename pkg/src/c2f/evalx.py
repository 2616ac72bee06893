"""Desk-scale evaluation: Gaussian fits, Gaussian-Frechet distance on raw
pixel or spectral features, and spectral band energies.

The distance here is computed on raw features, not Inception embeddings, and
is reported as ``gaussian_frechet`` rather than FID.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, InvalidParameter
from .spectral import BlurOperator, frequency_bands

COV_JITTER = 1e-8


@dataclass(frozen=True)
class GaussianFit:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


def fit_gaussian(samples) -> GaussianFit:
    """Empirical mean and unbiased covariance over the leading sample axis.

    ``mean`` keeps the per-sample shape; ``cov`` is over flattened samples.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim < 1 or samples.shape[0] < 2:
        raise InvalidInput(f"need at least 2 samples, got shape {samples.shape}")
    flat = samples.reshape(samples.shape[0], -1)
    mean = flat.mean(axis=0)
    centered = flat - mean
    cov = centered.T @ centered / (flat.shape[0] - 1)
    return GaussianFit(mean=mean.reshape(samples.shape[1:]), cov=(cov + cov.T) / 2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """``||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The cross term is evaluated as ``tr((S_a^(1/2) S_b S_a^(1/2))^(1/2))`` so
    only symmetric square roots are needed; both covariances get
    ``COV_JITTER * I`` first.
    """
    if a.dim != b.dim or np.size(a.mean) != np.size(b.mean):
        raise InvalidParameter(f"dimension mismatch: {a.dim} vs {b.dim}")
    eye = np.eye(a.dim) * COV_JITTER
    sa, sb = a.cov + eye, b.cov + eye
    root_a = _psd_sqrt(sa)
    cross = _psd_sqrt(root_a @ sb @ root_a)
    diff = np.ravel(a.mean) - np.ravel(b.mean)
    value = diff @ diff + np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross)
    return float(max(value, 0.0))


def mean_error(samples, reference) -> float:
    """Mean offset in units of the reference spread ``sqrt(tr cov)``."""
    a, b = fit_gaussian(samples), fit_gaussian(reference)
    spread = max(np.sqrt(np.trace(b.cov)), 1e-12)
    return float(np.linalg.norm(np.ravel(a.mean) - np.ravel(b.mean)) / spread)


def cov_relative_error(samples, reference) -> float:
    """Relative Frobenius error of the sample covariance."""
    a, b = fit_gaussian(samples), fit_gaussian(reference)
    return float(np.linalg.norm(a.cov - b.cov) / max(np.linalg.norm(b.cov), 1e-12))


def band_energy(op: BlurOperator, x, n_bands: int) -> np.ndarray:
    """Squared spectral energy per band (band 0 = lowest frequencies).

    Leading batch axes are kept: the result has shape ``(*batch, n_bands)``.
    """
    labels = frequency_bands(op, n_bands)
    power = op.to_spectral(x) ** 2
    return np.stack([power[..., labels == b].sum(axis=-1) for b in range(n_bands)], axis=-1)
