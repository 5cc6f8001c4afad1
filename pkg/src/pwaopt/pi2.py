"""Rollout-based probability-weighted averaging: the PI2 family.

One update takes K executed rollouts, computes the cost-to-go at every
timestep, maps each timestep's cost-to-go column to probabilities, forms
per-timestep mean (and optionally covariance) updates, and collapses them
with temporal averaging. Covariance handling selects the variant:

* ``NONE``        -- classic behavior, the sampling covariance is fixed;
* ``CEM_STYLE``   -- covariance replaced by the temporally averaged
                     probability-weighted scatter about the old mean;
* ``CMAES_STYLE`` -- the damped adaptation rule with evolution paths and a
                     separate step-size, fed the temporally averaged
                     displacement and scatter.

Covariances are maintained per DOF (B x B blocks), never jointly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .distributions import GaussianSearchDistribution, covariance_sqrt
from .es import CmaesConfig, CmaesState, cmaes_displacement_update
from .weighting import (
    CemEliteness,
    CmaesEliteness,
    Eliteness,
    Pi2Eliteness,
    as_eliteness,
    cmaes_raw_rank_weights,
    effective_selection_mass,
)


class ExplorationMode(enum.Enum):
    TIME_VARYING = "time_varying"
    PER_BASIS = "per_basis"
    CONSTANT = "constant"


class CovarianceUpdate(enum.Enum):
    NONE = "none"
    CEM_STYLE = "cem"
    CMAES_STYLE = "cmaes"


@dataclass(frozen=True)
class Pi2Config:
    trials_per_update: int
    eliteness: Eliteness | float = 10.0
    exploration_mode: ExplorationMode = ExplorationMode.CONSTANT
    covariance_update: CovarianceUpdate = CovarianceUpdate.NONE
    base_noise_level: float = 0.0
    evaluation_rollout: bool = True

    def __post_init__(self):
        if self.trials_per_update < 2:
            raise ValueError(
                f"trials_per_update must be >= 2, got {self.trials_per_update}"
            )
        if self.base_noise_level < 0:
            raise ValueError(
                f"base_noise_level must be nonnegative, got {self.base_noise_level}"
            )
        object.__setattr__(self, "eliteness", as_eliteness(self.eliteness))
        object.__setattr__(self, "exploration_mode", ExplorationMode(self.exploration_mode))
        object.__setattr__(self, "covariance_update", CovarianceUpdate(self.covariance_update))


@dataclass(frozen=True)
class RolloutBatch:
    """K executed rollouts: parameter offsets, trajectories, per-step costs.

    sampled_offsets has shape (K, N, D, B) and holds the deviations from
    the base parameters actually in effect at each timestep. trajectories
    is optional bookkeeping (kept for inspection and export).
    """

    sampled_offsets: np.ndarray
    step_costs: np.ndarray
    trajectories: Optional[tuple] = None

    def __post_init__(self):
        offsets = np.asarray(self.sampled_offsets, dtype=float)
        costs = np.asarray(self.step_costs, dtype=float)
        if offsets.ndim != 4:
            raise ValueError(f"sampled_offsets must be (K, N, D, B), got {offsets.shape}")
        if costs.shape != offsets.shape[:2]:
            raise ValueError(
                f"step_costs shape {costs.shape} does not match rollouts "
                f"{offsets.shape[:2]}"
            )
        if self.trajectories is not None:
            trajectories = tuple(self.trajectories)
            if len(trajectories) != offsets.shape[0]:
                raise ValueError("need one trajectory per rollout")
            for traj in trajectories:
                if traj.n_steps != offsets.shape[1]:
                    raise ValueError("all rollouts must share the timestep count")
            object.__setattr__(self, "trajectories", trajectories)
        object.__setattr__(self, "sampled_offsets", offsets)
        object.__setattr__(self, "step_costs", costs)

    @property
    def n_rollouts(self) -> int:
        return self.sampled_offsets.shape[0]

    @property
    def n_steps(self) -> int:
        return self.sampled_offsets.shape[1]


@dataclass(frozen=True)
class UpdateReport:
    """Result of one parameter update."""

    noise_free_cost: float
    exploration_magnitudes: np.ndarray
    distributions: tuple[GaussianSearchDistribution, ...]
    cmaes_states: Optional[tuple[CmaesState, ...]] = None

    @property
    def mean_parameters(self) -> np.ndarray:
        return np.stack([dist.mean for dist in self.distributions])


def generate_exploration(
    mode: ExplorationMode,
    dist: GaussianSearchDistribution,
    n_steps: int,
    activations: Optional[np.ndarray],
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-timestep exploration offsets for one rollout, shape (N, n).

    CONSTANT draws once and repeats it; TIME_VARYING draws independently
    per timestep; PER_BASIS draws once per basis function at trial start
    and, at each timestep, keeps only the entry of the most active basis
    (ties broken toward the lower index).
    """
    mode = ExplorationMode(mode)
    factor = covariance_sqrt(dist.covariance)

    def draw(count: int) -> np.ndarray:
        z = rng.standard_normal((count, dist.n))
        return dist.step_size * (z @ factor.T)

    if mode is ExplorationMode.CONSTANT:
        return np.repeat(draw(1), n_steps, axis=0)
    if mode is ExplorationMode.TIME_VARYING:
        return draw(n_steps)
    if activations is None:
        raise ValueError("per-basis exploration needs the activation matrix")
    acts = np.asarray(activations, dtype=float)
    if acts.shape != (n_steps, dist.n):
        raise ValueError(
            f"activations must have shape ({n_steps}, {dist.n}), got {acts.shape}"
        )
    draws = draw(dist.n)
    active = np.argmax(acts, axis=1)
    offsets = np.zeros((n_steps, dist.n))
    offsets[np.arange(n_steps), active] = draws[active, active]
    return offsets


def cost_to_go(step_costs) -> np.ndarray:
    """S[k, i] = sum of step costs from timestep i to the end of rollout k."""
    costs = np.asarray(step_costs, dtype=float)
    if costs.ndim != 2:
        raise ValueError(f"step_costs must be (K, N), got {costs.shape}")
    if not np.all(np.isfinite(costs)):
        raise ValueError("step costs must be finite")
    return costs[:, ::-1].cumsum(axis=1)[:, ::-1]


def _per_timestep_weights(cost_to_go_matrix: np.ndarray, eliteness) -> np.ndarray:
    """Apply the eliteness mapping to every timestep column; shape (K, N)."""
    s = np.asarray(cost_to_go_matrix, dtype=float)
    scheme = as_eliteness(eliteness)
    k = s.shape[0]
    if isinstance(scheme, Pi2Eliteness):
        lo = s.min(axis=0)
        span = s.max(axis=0) - lo
        safe = np.where(span > 0.0, span, 1.0)
        e = np.exp(-scheme.h * (s - lo) / safe)
        e[:, span == 0.0] = 1.0
        return e / e.sum(axis=0)
    order = np.argsort(s, axis=0, kind="stable")
    if isinstance(scheme, CemEliteness):
        if not 1 <= scheme.elite_count <= k:
            raise ValueError(f"elite_count must be in [1, {k}]")
        ranked = np.zeros(k)
        ranked[: scheme.elite_count] = 1.0 / scheme.elite_count
    else:
        raw = cmaes_raw_rank_weights(k, scheme.elite_count)
        if raw[-1] <= 0.0:
            raise ValueError(
                f"log-rank weights require elite_count < (K+1)/2, got "
                f"{scheme.elite_count} for K={k}"
            )
        ranked = np.zeros(k)
        ranked[: scheme.elite_count] = raw / raw.sum()
    weights = np.zeros_like(s)
    np.put_along_axis(weights, order, np.broadcast_to(ranked[:, None], s.shape), axis=0)
    return weights


def per_timestep_updates(
    sampled_offsets, cost_to_go_matrix, eliteness, theta_old
) -> tuple[np.ndarray, np.ndarray]:
    """Probability-weighted mean and scatter per timestep.

    Returns means (N, D, B) and covariances (N, D, B, B); the scatter is
    taken about the old mean, so it is a weighted sum of offset outer
    products.
    """
    offsets = np.asarray(sampled_offsets, dtype=float)
    theta = np.asarray(theta_old, dtype=float)
    if offsets.ndim != 4 or offsets.shape[2:] != theta.shape:
        raise ValueError(
            f"offsets {offsets.shape} inconsistent with parameters {theta.shape}"
        )
    weights = _per_timestep_weights(cost_to_go_matrix, eliteness)
    if weights.shape != offsets.shape[:2]:
        raise ValueError(
            f"cost-to-go shape {weights.shape} does not match rollouts "
            f"{offsets.shape[:2]}"
        )
    means = theta + np.einsum("kn,kndb->ndb", weights, offsets)
    covariances = np.einsum("kn,kndb,kndc->ndbc", weights, offsets, offsets)
    return means, covariances


def temporal_average(values) -> np.ndarray:
    """Average over the leading (time) axis with weights N, N-1, ..., 1.

    Earlier entries weigh more because they influence a longer remaining
    horizon. A convex combination, so PSD inputs stay PSD.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim < 1 or arr.shape[0] < 1:
        raise ValueError("need at least one value to average")
    n = arr.shape[0]
    w = np.arange(n, 0, -1, dtype=float)
    return np.tensordot(w, arr, axes=(0, 0)) / w.sum()


def exploration_magnitude(covariance) -> float:
    """Mean eigenvalue of a symmetric PSD matrix, computed as trace / n."""
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got {cov.shape}")
    if np.abs(cov - cov.T).max() > 1e-9:
        raise ValueError("covariance must be symmetric within 1e-9")
    return float(np.trace(cov) / cov.shape[0])


def _distribution_magnitudes(
    dists: Sequence[GaussianSearchDistribution],
) -> np.ndarray:
    return np.array([exploration_magnitude(d.effective_covariance()) for d in dists])


def pi2_update(
    batch: RolloutBatch,
    config: Pi2Config,
    dists: Sequence[GaussianSearchDistribution],
    cmaes_states: Optional[Sequence[CmaesState]] = None,
    noise_free_cost: float = float("nan"),
) -> UpdateReport:
    """One full parameter update from a batch of rollouts.

    Composes cost-to-go, per-timestep probability-weighted updates and
    temporal averaging; the covariance handling follows the configured
    variant, after which isotropic base noise (if any) is added.
    """
    offsets = batch.sampled_offsets
    n_rollouts, n_steps, dof_count, basis_count = offsets.shape
    if len(dists) != dof_count:
        raise ValueError(f"need one distribution per DOF ({dof_count}), got {len(dists)}")
    for dist in dists:
        if dist.n != basis_count:
            raise ValueError(
                f"distribution dimension {dist.n} does not match basis count "
                f"{basis_count}"
            )
    theta_old = np.stack([dist.mean for dist in dists])

    s = cost_to_go(batch.step_costs)
    weights = _per_timestep_weights(s, config.eliteness)
    means_i = theta_old + np.einsum("kn,kndb->ndb", weights, offsets)
    theta_new = temporal_average(means_i)

    style = config.covariance_update
    new_states: Optional[tuple[CmaesState, ...]] = None
    if style is CovarianceUpdate.NONE:
        new_covs = [dist.covariance for dist in dists]
        step_sizes = [dist.step_size for dist in dists]
        new_states = tuple(cmaes_states) if cmaes_states is not None else None
    else:
        scatter_i = np.einsum("kn,kndb,kndc->ndbc", weights, offsets, offsets)
        scatter = temporal_average(scatter_i)
        # exact symmetry can be lost to rounding at large magnitudes
        scatter = 0.5 * (scatter + np.swapaxes(scatter, -1, -2))
        if style is CovarianceUpdate.CEM_STYLE:
            new_covs = list(scatter)
            step_sizes = [dist.step_size for dist in dists]
            new_states = tuple(cmaes_states) if cmaes_states is not None else None
        else:
            if cmaes_states is None or len(cmaes_states) != dof_count:
                raise ValueError("CMAES-style updates need one CmaesState per DOF")
            mu_eff = effective_selection_mass(temporal_average(weights.T))
            cma_config = CmaesConfig.defaults(basis_count, mu_eff, n_rollouts)
            new_covs = []
            step_sizes = []
            states = []
            for d in range(dof_count):
                state, cov = cmaes_displacement_update(
                    cmaes_states[d],
                    cma_config,
                    dists[d].covariance,
                    theta_new[d] - theta_old[d],
                    mu_eff,
                    scatter[d],
                )
                new_covs.append(cov)
                step_sizes.append(state.step_size)
                states.append(state)
            new_states = tuple(states)

    if config.base_noise_level > 0.0:
        noise = config.base_noise_level * np.eye(basis_count)
        new_covs = [cov + noise for cov in new_covs]

    new_dists = tuple(
        GaussianSearchDistribution(theta_new[d], new_covs[d], step_sizes[d])
        for d in range(dof_count)
    )
    return UpdateReport(
        noise_free_cost=float(noise_free_cost),
        exploration_magnitudes=_distribution_magnitudes(new_dists),
        distributions=new_dists,
        cmaes_states=new_states,
    )
