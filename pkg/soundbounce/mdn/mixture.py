"""Posterior algebra on diagonal-covariance Gaussian mixtures."""

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special, stats

from .. import constants
from ..errors import RejectedInputError

LOG_2PI = float(np.log(2.0 * np.pi))


def _bounds(lower, upper, dim: int) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    if lower is None and upper is None:
        return None, None
    lo = np.full(dim, -np.inf) if lower is None else np.asarray(lower, dtype=float).reshape(dim)
    hi = np.full(dim, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(dim)
    if np.any(lo > hi):
        raise RejectedInputError(f"empty truncation box: {lo} > {hi}")
    return lo, hi


def _log_normal(theta: np.ndarray, mean: np.ndarray, variance: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log density; broadcasts over leading axes."""
    return -0.5 * np.sum((theta - mean) ** 2 / variance + np.log(variance) + LOG_2PI, axis=-1)


@dataclass(frozen=True)
class GaussianD:
    """Diagonal Gaussian, optionally truncated to an axis-aligned box"""

    mean: np.ndarray
    variance: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        variance = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if mean.shape != variance.shape or mean.ndim != 1:
            raise RejectedInputError(f"mean {mean.shape} and variance {variance.shape} must be matching vectors")
        if not np.all(variance > 0):
            raise RejectedInputError("variances must be positive")
        lo, hi = _bounds(self.lower, self.upper, mean.size)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def truncated(self, lower, upper) -> "GaussianD":
        return replace(self, lower=lower, upper=upper)

    def log_pdf(self, theta: np.ndarray) -> np.ndarray:
        """Untruncated log density."""
        return _log_normal(np.asarray(theta, dtype=float), self.mean, self.variance)

    def mode(self) -> np.ndarray:
        if self.lower is None:
            return self.mean.copy()
        return np.clip(self.mean, self.lower, self.upper)

    def _standard_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.full(self.dim, -np.inf) if self.lower is None else self.lower
        hi = np.full(self.dim, np.inf) if self.upper is None else self.upper
        return (lo - self.mean) / self.std, (hi - self.mean) / self.std

    def moments(self) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the (possibly truncated) distribution."""
        a, b = self._standard_bounds()
        mean, var = stats.truncnorm.stats(a, b, loc=self.mean, scale=self.std, moments="mv")
        return np.asarray(mean, dtype=float), np.asarray(var, dtype=float)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a, b = self._standard_bounds()
        return stats.truncnorm.rvs(a, b, loc=self.mean, scale=self.std, size=(n, self.dim), random_state=rng)

    def as_mixture(self) -> "MixtureOfGaussians":
        return MixtureOfGaussians(np.ones(1), self.mean[None, :], self.variance[None, :], self.lower, self.upper)


@dataclass(frozen=True)
class MixtureOfGaussians:
    """Weighted sum of K diagonal Gaussians over D target dimensions.

    lower/upper, when set, truncate the density to a box; the component parameters
    always describe the untruncated mixture.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    extrapolated: bool = False

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.asarray(self.means, dtype=float).reshape(weights.size, -1)
        variances = np.asarray(self.variances, dtype=float).reshape(means.shape)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise RejectedInputError(f"weights must lie on the simplex, sum={weights.sum()}")
        if not np.all(variances > 0):
            raise RejectedInputError("variances must be positive")
        lo, hi = _bounds(self.lower, self.upper, means.shape[1])
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def truncated(self, lower, upper) -> "MixtureOfGaussians":
        return replace(self, lower=lower, upper=upper)

    def marginal(self, dims: Sequence[int]) -> "MixtureOfGaussians":
        dims = list(dims)
        return MixtureOfGaussians(
            self.weights,
            self.means[:, dims],
            self.variances[:, dims],
            None if self.lower is None else self.lower[dims],
            None if self.upper is None else self.upper[dims],
            self.extrapolated,
        )

    def log_pdf(self, theta: np.ndarray) -> np.ndarray:
        """Untruncated log density at theta of shape (..., D)."""
        theta = np.asarray(theta, dtype=float)[..., None, :]
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return special.logsumexp(log_w + _log_normal(theta, self.means, self.variances), axis=-1)

    def mass_inside(self, lower, upper) -> float:
        """Probability the untruncated mixture assigns to the box [lower, upper]."""
        lo, hi = _bounds(lower, upper, self.dim)
        std = np.sqrt(self.variances)
        per_dim = stats.norm.cdf((hi - self.means) / std) - stats.norm.cdf((lo - self.means) / std)
        return float(np.sum(self.weights * np.prod(per_dim, axis=1)))


def project_to_gaussian(m: MixtureOfGaussians) -> GaussianD:
    """Moment-matched single Gaussian (law of total variance, per dimension)."""
    mean = m.weights @ m.means
    second = m.weights @ (m.variances + m.means**2)
    variance = np.maximum(second - mean**2, np.min(m.variances, axis=0) * 1e-12)
    return GaussianD(mean, variance, m.lower, m.upper)


def multiply_gaussians(factors: Iterable[GaussianD]) -> GaussianD:
    """Normalized product of diagonal Gaussians: precisions add."""
    factors = list(factors)
    if not factors:
        raise RejectedInputError("multiply_gaussians needs at least one factor")
    precision = sum(1.0 / g.variance for g in factors)
    weighted = sum(g.mean / g.variance for g in factors)
    variance = 1.0 / precision
    lower, upper = None, None
    bounded = [g for g in factors if g.lower is not None]
    if bounded:
        lower = np.max([g.lower for g in bounded], axis=0)
        upper = np.min([g.upper for g in bounded], axis=0)
    return GaussianD(variance * weighted, variance, lower, upper)


def sample_mixture(
    m: MixtureOfGaussians, n: int, rng: np.random.Generator, max_rounds: int = 1000
) -> np.ndarray:
    """Ancestral sampling: pick a component, then draw from its Gaussian.

    Truncated mixtures redraw samples that fall outside the box.
    """
    samples = _ancestral(m, n, rng)
    if m.lower is None:
        return samples
    for _ in range(max_rounds):
        outside = np.any((samples < m.lower) | (samples > m.upper), axis=1)
        if not outside.any():
            break
        samples[outside] = _ancestral(m, int(outside.sum()), rng)
    return np.clip(samples, m.lower, m.upper)


def _ancestral(m: MixtureOfGaussians, n: int, rng: np.random.Generator) -> np.ndarray:
    components = rng.choice(m.n_components, size=n, p=m.weights)
    noise = rng.standard_normal((n, m.dim))
    return m.means[components] + np.sqrt(m.variances[components]) * noise


def sample_batched_mixture(
    weights: np.ndarray, means: np.ndarray, variances: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw n samples from each of B mixtures given as (B,K), (B,K,D), (B,K,D) arrays.

    Returns an array of shape (B, n, D).
    """
    batch, k, _ = means.shape
    cumulative = np.cumsum(weights, axis=1)
    u = rng.random((batch, n)) * cumulative[:, -1:]
    components = np.minimum((u[:, :, None] > cumulative[:, None, :]).sum(axis=2), k - 1)
    rows = np.arange(batch)[:, None]
    chosen_means = means[rows, components]
    chosen_std = np.sqrt(variances[rows, components])
    return chosen_means + chosen_std * rng.standard_normal(chosen_means.shape)


def mixture_mode(
    m: MixtureOfGaussians,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
    grid_points: Optional[int] = None,
) -> np.ndarray:
    """Highest-density point inside a search box: dense grid scan, then local refinement."""
    if lower is None and m.lower is not None:
        lower, upper = m.lower, m.upper
    if lower is None or upper is None:
        spread = 4.0 * np.sqrt(m.variances)
        lower = np.min(m.means - spread, axis=0)
        upper = np.max(m.means + spread, axis=0)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise RejectedInputError("mode search box must be finite")

    if grid_points is None:
        grid_points = constants.MODE_GRID_POINTS if m.dim <= 2 else constants.MODE_GRID_POINTS_HIGH_DIM
    axes = [np.linspace(lo, hi, grid_points) for lo, hi in zip(lower, upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    best = grid[int(np.argmax(m.log_pdf(grid)))]

    if np.all(upper > lower):
        result = optimize.minimize(
            lambda theta: -float(m.log_pdf(theta)),
            best,
            method="L-BFGS-B",
            bounds=list(zip(lower, upper)),
        )
        if result.success and -result.fun >= float(m.log_pdf(best)):
            return np.asarray(result.x, dtype=float)
    return best
