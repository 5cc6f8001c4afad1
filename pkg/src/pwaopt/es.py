"""Generic black-box CEM and CMA-ES over real vectors.

Both optimizers share one loop (sample, sort, update, iterate) and one
update primitive: a probability-weighted average of the samples for the
mean, and of outer products about the *old* mean for the covariance.
CMA-ES adds evolution paths, a separately adapted scalar step-size, and a
damped covariance update; setting c_sigma=0, sigma=1, c_1=0, c_mu=1
reduces it exactly to the CEM update.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .distributions import GaussianSearchDistribution, sample
from .weighting import (
    ProbabilityWeights,
    cem_weights,
    cmaes_weights,
    effective_selection_mass,
)


class ConditioningError(RuntimeError):
    """Covariance too ill-conditioned for the CMA-ES update."""


#: eigenvalues below this count as singular and raise ConditioningError
SINGULAR_EIG = 1e-300
#: floor applied to eigenvalues when forming C^(-1/2)
INV_SQRT_EIG_FLOOR = 1e-20


class Algorithm(enum.Enum):
    CEM = "CEM"
    CMAES = "CMAES"


@dataclass(frozen=True)
class CmaesState:
    """Evolution paths, scalar step-size, and generation counter."""

    sigma_path: np.ndarray
    covariance_path: np.ndarray
    step_size: float = 1.0
    generation: int = 0

    def __post_init__(self):
        p_sigma = np.asarray(self.sigma_path, dtype=float)
        p_cov = np.asarray(self.covariance_path, dtype=float)
        if p_sigma.shape != p_cov.shape or p_sigma.ndim != 1:
            raise ValueError("evolution paths must be vectors of equal length")
        if self.generation == 0 and (np.any(p_sigma != 0.0) or np.any(p_cov != 0.0)):
            raise ValueError("evolution paths must be zero at generation 0")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        object.__setattr__(self, "sigma_path", p_sigma)
        object.__setattr__(self, "covariance_path", p_cov)

    @classmethod
    def initial(cls, n: int, step_size: float = 1.0) -> "CmaesState":
        return cls(np.zeros(n), np.zeros(n), step_size, 0)


@dataclass(frozen=True)
class CmaesConfig:
    """Learning rates of the step-size and covariance adaptation rules."""

    c_sigma: float
    d_sigma: float
    c_cov: float
    c_1: float
    c_mu: float
    elite_count: int

    def __post_init__(self):
        if not 0.0 <= self.c_sigma <= 1.0:
            raise ValueError(f"c_sigma must be in [0, 1], got {self.c_sigma}")
        if not 0.0 <= self.c_cov <= 1.0:
            raise ValueError(f"c_cov must be in [0, 1], got {self.c_cov}")
        if self.c_1 < 0 or self.c_mu < 0:
            raise ValueError("c_1 and c_mu must be nonnegative")
        if self.c_1 + self.c_mu > 1.0:
            raise ValueError(f"c_1 + c_mu must be <= 1, got {self.c_1 + self.c_mu}")
        if not self.d_sigma > 0:
            raise ValueError(f"d_sigma must be positive, got {self.d_sigma}")

    @classmethod
    def defaults(cls, n: int, mu_eff: float, elite_count: int) -> "CmaesConfig":
        """Standard learning-rate defaults for dimension n and selection mass mu_eff."""
        c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
        d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
        c_cov = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
        c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
        c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
        return cls(c_sigma, d_sigma, c_cov, c_1, c_mu, elite_count)


def expected_gaussian_norm(n: int) -> float:
    """Approximate E||N(0, I_n)||: sqrt(n) * (1 - 1/(4n) + 1/(21 n^2))."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))


def _weight_values(weights) -> np.ndarray:
    if isinstance(weights, ProbabilityWeights):
        return weights.values
    return ProbabilityWeights(np.asarray(weights, dtype=float)).values


def _check_samples(dist: GaussianSearchDistribution, samples, weights) -> tuple:
    thetas = np.asarray(samples, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != dist.n:
        raise ValueError(
            f"samples must have shape (K, {dist.n}), got {thetas.shape}"
        )
    w = _weight_values(weights)
    if w.shape[0] != thetas.shape[0]:
        raise ValueError(
            f"got {thetas.shape[0]} samples but {w.shape[0]} weights"
        )
    return thetas, w


def _sym(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def weighted_scatter(samples: np.ndarray, center: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_k P_k (theta_k - center)(theta_k - center)^T.

    Symmetrized: the summation is symmetric in exact arithmetic, but the
    contraction can round the two triangles differently at large scales.
    """
    diff = samples - center
    return _sym(np.einsum("k,ki,kj->ij", weights, diff, diff))


def cem_update(
    dist: GaussianSearchDistribution, samples, weights
) -> GaussianSearchDistribution:
    """Probability-weighted mean and covariance update.

    The covariance is the weighted scatter about the *old* mean, which is
    known to be the true mean of the sampling distribution (so no 1/(K-1)
    correction applies). The step-size is passed through unchanged.
    """
    thetas, w = _check_samples(dist, samples, weights)
    new_mean = w @ thetas
    new_cov = weighted_scatter(thetas, dist.mean, w)
    return GaussianSearchDistribution(new_mean, new_cov, dist.step_size)


def _inverse_sqrt(covariance: np.ndarray) -> np.ndarray:
    evals, vecs = np.linalg.eigh(0.5 * (covariance + covariance.T))
    if evals.min() < SINGULAR_EIG:
        raise ConditioningError(
            f"covariance is singular: min eigenvalue = {evals.min():.3e}"
        )
    inv_sqrt = 1.0 / np.sqrt(np.maximum(evals, INV_SQRT_EIG_FLOOR))
    return (vecs * inv_sqrt) @ vecs.T


def _stall_indicator(
    p_sigma: np.ndarray, c_sigma: float, generation: int, n: int
) -> float:
    # c_sigma = 0 leaves the path permanently at zero; disable the detector.
    if c_sigma == 0.0:
        return 1.0
    normalizer = math.sqrt(1.0 - (1.0 - c_sigma) ** (2.0 * (generation + 1)))
    threshold = (1.4 + 2.0 / (n + 1.0)) * expected_gaussian_norm(n)
    return 1.0 if np.linalg.norm(p_sigma) / normalizer < threshold else 0.0


def cmaes_displacement_update(
    state: CmaesState,
    config: CmaesConfig,
    covariance: np.ndarray,
    displacement: np.ndarray,
    mu_eff: float,
    rank_mu_matrix: np.ndarray,
) -> tuple[CmaesState, np.ndarray]:
    """Core CMA-ES adaptation given a mean displacement and a rank-mu scatter.

    Returns the advanced state (paths, step-size, generation) and the new
    covariance. Factoring the update this way lets the rollout-based
    variant feed in temporally averaged displacements and scatters.
    """
    n = displacement.shape[0]
    sigma = state.step_size
    inv_sqrt = _inverse_sqrt(covariance)

    p_sigma = (1.0 - config.c_sigma) * state.sigma_path + math.sqrt(
        config.c_sigma * (2.0 - config.c_sigma) * mu_eff
    ) * (inv_sqrt @ (displacement / sigma))
    new_sigma = sigma * math.exp(
        (config.c_sigma / config.d_sigma)
        * (np.linalg.norm(p_sigma) / expected_gaussian_norm(n) - 1.0)
    )
    h_sig = _stall_indicator(p_sigma, config.c_sigma, state.generation, n)
    p_cov = (1.0 - config.c_cov) * state.covariance_path + h_sig * math.sqrt(
        config.c_cov * (2.0 - config.c_cov) * mu_eff
    ) * (displacement / sigma)
    delta_h = (1.0 - h_sig) * config.c_cov * (2.0 - config.c_cov)
    new_cov = _sym(
        (1.0 - config.c_1 - config.c_mu) * covariance
        + config.c_1 * (np.outer(p_cov, p_cov) + delta_h * covariance)
        + config.c_mu * rank_mu_matrix
    )
    new_state = CmaesState(p_sigma, p_cov, new_sigma, state.generation + 1)
    return new_state, new_cov


def cmaes_update(
    state: CmaesState,
    config: CmaesConfig,
    dist: GaussianSearchDistribution,
    samples,
    weights,
) -> tuple[CmaesState, GaussianSearchDistribution]:
    """One CMA-ES generation: mean, evolution paths, step-size, covariance.

    The sigma path uses C^(-1/2) of the pre-update covariance; the returned
    distribution carries the adapted step-size.
    """
    thetas, w = _check_samples(dist, samples, weights)
    mu_eff = effective_selection_mass(w)
    new_mean = w @ thetas
    rank_mu = weighted_scatter(thetas, dist.mean, w)
    new_state, new_cov = cmaes_displacement_update(
        state, config, dist.covariance, new_mean - dist.mean, mu_eff, rank_mu
    )
    new_dist = GaussianSearchDistribution(new_mean, new_cov, new_state.step_size)
    return new_state, new_dist


@dataclass(frozen=True)
class IterationRecord:
    """Per-iteration diagnostics of a minimize() run."""

    iteration: int
    best_cost: float
    mean_cost: float
    exploration_magnitude: float
    step_size: float


def minimize(
    cost_fn: Callable[[np.ndarray], float],
    algorithm: Algorithm,
    dist: GaussianSearchDistribution,
    iterations: int,
    samples_per_iter: int,
    rng: np.random.Generator,
    elite_count: Optional[int] = None,
    config: Optional[CmaesConfig] = None,
) -> tuple[list[IterationRecord], GaussianSearchDistribution]:
    """Sample / sort / update loop for CEM or CMA-ES.

    elite_count defaults to K/2. For CMAES, `config` defaults to the
    standard learning rates for the given dimension and weights.
    Deterministic for a fixed seeded generator.
    """
    if samples_per_iter < 2:
        raise ValueError(f"samples_per_iter must be >= 2, got {samples_per_iter}")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    algorithm = Algorithm(algorithm)
    k = int(samples_per_iter)
    k_e = k // 2 if elite_count is None else int(elite_count)

    if algorithm is Algorithm.CEM:
        rank_weights = cem_weights(np.arange(k, dtype=float), k_e)
    else:
        rank_weights = cmaes_weights(k, k_e)
    state = CmaesState.initial(dist.n, dist.step_size)
    if algorithm is Algorithm.CMAES and config is None:
        config = CmaesConfig.defaults(dist.n, effective_selection_mass(rank_weights), k_e)

    records: list[IterationRecord] = []
    for it in range(int(iterations)):
        thetas = sample(dist, k, rng)
        costs = np.array([cost_fn(theta) for theta in thetas], dtype=float)
        if not np.all(np.isfinite(costs)):
            bad = int(np.flatnonzero(~np.isfinite(costs))[0])
            raise RuntimeError(
                f"cost function returned a non-finite value at iteration {it} "
                f"(sample {bad}: cost = {costs[bad]!r})"
            )
        order = np.argsort(costs, kind="stable")
        ranked = thetas[order]
        if algorithm is Algorithm.CEM:
            dist = cem_update(dist, ranked, rank_weights)
        else:
            state, dist = cmaes_update(state, config, dist, ranked, rank_weights)
        records.append(
            IterationRecord(
                iteration=it,
                best_cost=float(costs[order[0]]),
                mean_cost=float(costs.mean()),
                exploration_magnitude=float(
                    np.trace(dist.effective_covariance()) / dist.n
                ),
                step_size=dist.step_size,
            )
        )
    return records, dist
