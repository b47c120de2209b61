"""Exponential-covariance Gaussian process utilities.

Covariance between two locations at distance d is sigma^2 * exp(-d / phi).
The range parameter phi is never estimated; it is fixed from pairwise
distances via `fix_phi`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import NumericalError, ValidationError

JITTER_FACTOR = 1e-8  # added to the diagonal as jitter * sigma^2 on failure


@dataclass(frozen=True)
class GPParams:
    sigma: float  # marginal standard deviation
    phi: float    # range, in coordinate units

    def __post_init__(self):
        if self.sigma <= 0 or self.phi <= 0:
            raise ValidationError("sigma and phi must be positive")


def exponential_covariance(dists: np.ndarray, sigma: float, phi: float) -> np.ndarray:
    return sigma ** 2 * np.exp(-np.asarray(dists, dtype=float) / phi)


def cross_covariance(a: np.ndarray, b: np.ndarray, gp: GPParams) -> np.ndarray:
    return exponential_covariance(cdist(a, b), gp.sigma, gp.phi)


def fix_phi(locations: np.ndarray) -> float:
    """Fix the range so extreme distance quantiles hit target correlations.

    With corr(d) = exp(-d/phi): the 95th percentile distance maps to
    correlation 0.05 and the 5th percentile to 0.95; the result is the
    average of the two implied ranges. Beyond 8,000 locations the distance
    quantiles are taken on an evenly strided subsample, keeping the
    pairwise-distance matrix bounded.
    """
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    if len(locations) < 2:
        raise ValidationError("need at least two locations to fix phi")
    if len(locations) > 8000:
        stride = -(-len(locations) // 8000)
        locations = locations[::stride]
    d = pdist(locations)
    if np.all(d == 0):
        raise ValidationError("all locations identical: zero distances")
    q05, q95 = np.quantile(d, [0.05, 0.95])
    phi_a = -q95 / np.log(0.05)
    phi_b = -q05 / np.log(0.95)
    return float((phi_a + phi_b) / 2)


def _factor(cov: np.ndarray, sigma: float) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jittered = cov + JITTER_FACTOR * sigma ** 2 * np.eye(len(cov))
    try:
        return np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance factorization failed after jitter") from exc


def draw_gp(locations: np.ndarray, gp: GPParams, seed) -> np.ndarray:
    """Mean-zero multivariate normal draw with exponential covariance."""
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    d = squareform(pdist(locations)) if len(locations) > 1 else np.zeros((1, 1))
    if len(locations) > 1 and np.min(pdist(locations)) == 0:
        raise ValidationError("locations must be pairwise distinct")
    cov = exponential_covariance(d, gp.sigma, gp.phi)
    chol = _factor(cov, gp.sigma)
    rng = np.random.default_rng(seed)
    return chol @ rng.standard_normal(len(locations))
