"""Eliteness mappings: from sample costs to probability weights.

Three schemes share the probability-weighted-averaging update:

* hard cutoff -- the best ``elite_count`` samples get weight 1/elite_count
  (:func:`cem_weights`);
* log-rank -- elite ranks get ln(0.5(K+1)) - ln(k), normalized
  (:func:`cmaes_weights`);
* exponentiated cost -- exp(-h (S - min S)/(max S - min S)), normalized
  (:func:`pi2_weights`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class ProbabilityWeights:
    """Per-sample probability weights: nonnegative, summing to 1 (tol 1e-12)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError(f"weights must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite")
        if v.min(initial=0.0) < 0.0:
            raise ValueError(f"weights must be nonnegative, min = {v.min():.3e}")
        if abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {v.sum()!r}")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return self.values.shape[0]


def _check_costs(costs) -> np.ndarray:
    c = np.asarray(costs, dtype=float)
    if c.ndim != 1 or c.shape[0] < 1:
        raise ValueError(f"costs must be a nonempty vector, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    return c


def cem_weights(costs, elite_count: int) -> ProbabilityWeights:
    """Hard-cutoff eliteness: the `elite_count` lowest costs get 1/elite_count.

    Ties at the cutoff are broken by original sample index (stable sort),
    so exactly `elite_count` samples are elite.
    """
    c = _check_costs(costs)
    k = c.shape[0]
    if not 1 <= elite_count <= k:
        raise ValueError(f"elite_count must be in [1, {k}], got {elite_count}")
    order = np.argsort(c, kind="stable")
    w = np.zeros(k)
    w[order[:elite_count]] = 1.0 / elite_count
    return ProbabilityWeights(w)


def cmaes_raw_rank_weights(count: int, elite_count: int) -> np.ndarray:
    """Unnormalized log-rank weights ln(0.5(K+1)) - ln(k) for ranks 1..elite_count."""
    ranks = np.arange(1, elite_count + 1, dtype=float)
    return np.log(0.5 * (count + 1)) - np.log(ranks)


def cmaes_weights(count: int, elite_count: int) -> ProbabilityWeights:
    """Log-rank eliteness, in rank order (entry 0 is the best sample).

    Raw weights are normalized to sum to 1 over the elite ranks; ranks past
    `elite_count` get zero. The raw weight of the last elite rank must be
    positive, which bounds elite_count by (count+1)/2.
    """
    if not 1 <= elite_count <= count:
        raise ValueError(f"elite_count must be in [1, {count}], got {elite_count}")
    raw = cmaes_raw_rank_weights(count, elite_count)
    if raw[-1] <= 0.0:
        raise ValueError(
            f"log-rank weight of rank {elite_count} is not positive for K={count}; "
            f"elite_count must be < (K+1)/2"
        )
    w = np.zeros(count)
    w[:elite_count] = raw / raw.sum()
    return ProbabilityWeights(w)


def pi2_weights(costs, eliteness_h: float) -> ProbabilityWeights:
    """Exponentiated-cost eliteness with range baselining.

    weight_k = exp(-h (S_k - min S)/(max S - min S)), normalized. When all
    costs are equal the weights are uniform (the limit of the formula).
    """
    c = _check_costs(costs)
    if not eliteness_h > 0:
        raise ValueError(f"eliteness_h must be positive, got {eliteness_h}")
    k = c.shape[0]
    span = c.max() - c.min()
    if span == 0.0:
        return ProbabilityWeights(np.full(k, 1.0 / k))
    e = np.exp(-eliteness_h * (c - c.min()) / span)
    return ProbabilityWeights(e / e.sum())


def effective_selection_mass(weights) -> float:
    """Variance effective selection mass 1 / sum(P_k**2)."""
    v = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(v * v))


# ---------------------------------------------------------------------------
# Eliteness dispatch used by the rollout-based updates, where the same
# mapping is applied independently to every timestep's cost-to-go column.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pi2Eliteness:
    h: float = 10.0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")


@dataclass(frozen=True)
class CemEliteness:
    elite_count: int


@dataclass(frozen=True)
class CmaesEliteness:
    elite_count: int


Eliteness = Union[Pi2Eliteness, CemEliteness, CmaesEliteness]


def as_eliteness(scheme) -> Eliteness:
    """Coerce a bare positive float h into Pi2Eliteness; pass schemes through."""
    if isinstance(scheme, (Pi2Eliteness, CemEliteness, CmaesEliteness)):
        return scheme
    return Pi2Eliteness(float(scheme))


def weights_for_costs(costs, eliteness) -> np.ndarray:
    """Apply an eliteness scheme to a cost vector; result is in sample order."""
    scheme = as_eliteness(eliteness)
    if isinstance(scheme, Pi2Eliteness):
        return pi2_weights(costs, scheme.h).values
    if isinstance(scheme, CemEliteness):
        return cem_weights(costs, scheme.elite_count).values
    c = _check_costs(costs)
    ranked = cmaes_weights(c.shape[0], scheme.elite_count).values
    order = np.argsort(c, kind="stable")
    w = np.empty_like(ranked)
    w[order] = ranked
    return w
