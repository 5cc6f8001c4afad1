"""Gaussian search distributions and multivariate sampling.

Every optimizer in this package updates the same object: a multivariate
Gaussian over parameter vectors, with an optional scalar step-size that
multiplies the covariance during sampling (the effective sampling
covariance is ``step_size**2 * covariance``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: absolute tolerance on max|C - C.T| for a covariance to count as symmetric
SYMMETRY_TOL = 1e-9
#: eigenvalues below this are a hard error; those in [EIG_FLOOR, 0) are clamped
EIG_FLOOR = -1e-9


class DecompositionError(RuntimeError):
    """Covariance factorization failed: matrix is not PSD within tolerance."""


def _as_float_array(x, ndim, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class GaussianSearchDistribution:
    """N(mean, step_size**2 * covariance) over real parameter vectors.

    Invariants (checked on construction): covariance symmetric within
    ``SYMMETRY_TOL``, eigenvalues >= ``EIG_FLOOR``, step_size > 0.
    """

    mean: np.ndarray
    covariance: np.ndarray
    step_size: float = 1.0

    def __post_init__(self):
        mean = _as_float_array(self.mean, 1, "mean")
        cov = _as_float_array(self.covariance, 2, "covariance")
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {n}")
        asym = np.abs(cov - cov.T).max() if n else 0.0
        if asym > SYMMETRY_TOL:
            raise ValueError(f"covariance is asymmetric: max|C - C.T| = {asym:.3e}")
        lo = np.linalg.eigvalsh(cov).min() if n else 0.0
        if lo < EIG_FLOOR:
            raise ValueError(f"covariance is not PSD: min eigenvalue = {lo:.3e}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "step_size", float(self.step_size))

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def effective_covariance(self) -> np.ndarray:
        """Covariance actually used for sampling: step_size**2 * covariance."""
        return self.step_size**2 * self.covariance


def covariance_sqrt(covariance: np.ndarray) -> np.ndarray:
    """Symmetric factor A with A @ A.T == covariance (up to clamping).

    The matrix is symmetrized as (C + C.T)/2 first; eigenvalues in
    [EIG_FLOOR, 0) are clamped to zero, anything below EIG_FLOOR raises
    DecompositionError.
    """
    cov = np.asarray(covariance, dtype=float)
    sym = 0.5 * (cov + cov.T)
    evals, vecs = np.linalg.eigh(sym)
    if evals.min() < EIG_FLOOR:
        raise DecompositionError(
            f"covariance not PSD after symmetrization: min eigenvalue = {evals.min():.3e}"
        )
    evals = np.clip(evals, 0.0, None)
    return vecs * np.sqrt(evals)


def sample(
    dist: GaussianSearchDistribution, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw `count` vectors from N(mean, step_size**2 * covariance).

    Returns an array of shape (count, n); rows are samples. Reproducible
    bit-for-bit for a fixed seeded generator on one platform.
    """
    if count < 1:
        raise ValueError(f"count must be a positive integer, got {count}")
    factor = covariance_sqrt(dist.covariance)
    z = rng.standard_normal((int(count), dist.n))
    return dist.mean + dist.step_size * (z @ factor.T)
