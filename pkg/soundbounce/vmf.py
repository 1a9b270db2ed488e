"""von Mises-Fisher sampling on the unit 2-sphere."""

from typing import Optional

import numpy as np

from .errors import RejectedInputError


def _orthonormal_frame(mu: np.ndarray) -> np.ndarray:
    """Return a 3x3 matrix whose columns (u, v, mu) form a right-handed basis."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(mu[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(helper, mu)
    u /= np.linalg.norm(u)
    v = np.cross(mu, u)
    return np.column_stack([u, v, mu])


def sample_vmf_cosines(kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the polar cosine w = mu . x by inverting the vMF CDF on S^2.

    w = 1 + log(xi + (1 - xi) exp(-2 kappa)) / kappa, evaluated with logaddexp so
    that large kappa does not underflow.
    """
    xi = rng.random(size)
    with np.errstate(divide="ignore"):
        log_xi = np.log(xi)
    w = 1.0 + np.logaddexp(log_xi, np.log1p(-xi) - 2.0 * kappa) / kappa
    return np.clip(w, -1.0, 1.0)


def sample_vmf(
    mu: np.ndarray,
    kappa: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """Sample unit vectors from the vMF distribution with mean direction mu.

    Args:
        mu: unit 3-vector, the mean direction
        kappa: concentration, strictly positive
        rng: numpy random generator
        size: number of samples; None returns a single 3-vector

    Returns:
        (3,) array when size is None, otherwise (size, 3)
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (3,) or not np.all(np.isfinite(mu)):
        raise RejectedInputError(f"mu must be a finite 3-vector, got {mu!r}")
    if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
        raise RejectedInputError(f"mu must have unit norm, got {np.linalg.norm(mu)}")
    if not np.isfinite(kappa) or kappa <= 0:
        raise RejectedInputError(f"kappa must be positive and finite, got {kappa}")

    n = 1 if size is None else int(size)
    w = sample_vmf_cosines(kappa, n, rng)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    radial = np.sqrt(np.clip(1.0 - w * w, 0.0, None))
    local = np.column_stack([radial * np.cos(phi), radial * np.sin(phi), w])
    samples = local @ _orthonormal_frame(mu).T
    samples /= np.linalg.norm(samples, axis=1, keepdims=True)
    return samples[0] if size is None else samples

