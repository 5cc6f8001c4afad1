"""Rollout-based updates against a straight-line loop transcription."""

import math

import numpy as np
import pytest

from pwaopt.distributions import GaussianSearchDistribution
from pwaopt.es import CmaesState
from pwaopt.pi2 import (
    CovarianceUpdate,
    ExplorationMode,
    Pi2Config,
    RolloutBatch,
    cost_to_go,
    exploration_magnitude,
    generate_exploration,
    per_timestep_updates,
    pi2_update,
    temporal_average,
)
from pwaopt.weighting import CemEliteness, Pi2Eliteness


def brute_force_pi2(theta_old, offsets, step_costs, h):
    """Loop transcription of one full update: cost-to-go, per-timestep
    exponentiated weights, per-timestep mean/covariance, temporal average."""
    n_rollouts, n_steps, dof_count, basis_count = offsets.shape
    s = [[sum(step_costs[k][j] for j in range(i, n_steps)) for i in range(n_steps)]
         for k in range(n_rollouts)]
    mean_sum = np.zeros((dof_count, basis_count))
    cov_sum = np.zeros((dof_count, basis_count, basis_count))
    weight_total = 0.0
    for i in range(n_steps):
        col = [s[k][i] for k in range(n_rollouts)]
        lo, hi = min(col), max(col)
        if hi == lo:
            probs = [1.0 / n_rollouts] * n_rollouts
        else:
            raw = [math.exp(-h * (c - lo) / (hi - lo)) for c in col]
            probs = [r / sum(raw) for r in raw]
        time_weight = n_steps - i
        weight_total += time_weight
        for d in range(dof_count):
            mean_i = np.zeros(basis_count)
            cov_i = np.zeros((basis_count, basis_count))
            for k in range(n_rollouts):
                sample = theta_old[d] + offsets[k, i, d]
                mean_i += probs[k] * sample
                dev = sample - theta_old[d]
                cov_i += probs[k] * np.outer(dev, dev)
            mean_sum[d] += time_weight * mean_i
            cov_sum[d] += time_weight * cov_i
    return mean_sum / weight_total, cov_sum / weight_total


class TestGenerateExploration:
    def _dist(self, n=4, lam=4.0):
        return GaussianSearchDistribution(np.zeros(n), lam * np.eye(n))

    def test_constant_rows_identical(self, rng):
        offsets = generate_exploration(ExplorationMode.CONSTANT, self._dist(), 12, None, rng)
        assert offsets.shape == (12, 4)
        np.testing.assert_array_equal(offsets, np.tile(offsets[0], (12, 1)))

    def test_time_varying_rows_differ(self, rng):
        offsets = generate_exploration(ExplorationMode.TIME_VARYING, self._dist(), 12, None, rng)
        assert not np.array_equal(offsets[0], offsets[1])

    def test_zero_covariance_gives_zero_offsets(self, rng):
        dist = GaussianSearchDistribution(np.zeros(3), np.zeros((3, 3)))
        for mode in ExplorationMode:
            acts = np.tile(np.eye(3)[0], (5, 1))
            offsets = generate_exploration(mode, dist, 5, acts, rng)
            np.testing.assert_array_equal(offsets, 0.0)

    def test_per_basis_structure(self, rng):
        from pwaopt.dmp import DmpPolicy, activation_matrix, phase_sequence

        pol = DmpPolicy.equal_time_basis(np.zeros(1), np.ones(1), 0.5, 5)
        phases = phase_sequence(pol, 50, 0.01)
        acts = activation_matrix(pol, phases)
        dist = self._dist(n=5)
        offsets = generate_exploration(ExplorationMode.PER_BASIS, dist, 50, acts, rng)
        nonzero_counts = np.count_nonzero(offsets, axis=1)
        assert nonzero_counts.max() <= 1
        active = np.argmax(acts, axis=1)
        hot = np.argmax(np.abs(offsets), axis=1)
        rows = np.flatnonzero(nonzero_counts)
        np.testing.assert_array_equal(hot[rows], active[rows])
        assert np.all(np.diff(active) >= 0)  # sweeps the centers in time order

    def test_per_basis_requires_activations(self, rng):
        with pytest.raises(ValueError):
            generate_exploration(ExplorationMode.PER_BASIS, self._dist(), 10, None, rng)

    def test_reproducible_per_seed(self):
        dist = self._dist()
        a = generate_exploration(
            ExplorationMode.TIME_VARYING, dist, 6, None, np.random.default_rng([3, 1, 0])
        )
        b = generate_exploration(
            ExplorationMode.TIME_VARYING, dist, 6, None, np.random.default_rng([3, 1, 0])
        )
        np.testing.assert_array_equal(a, b)


class TestCostToGo:
    def test_all_ones(self):
        s = cost_to_go(np.ones((2, 3)))
        np.testing.assert_array_equal(s, [[3, 2, 1], [3, 2, 1]])

    def test_terminal_cost_propagates(self):
        s = cost_to_go(np.array([[0.0, 0.0, 5.0]]))
        np.testing.assert_array_equal(s, [[5, 5, 5]])

    def test_matches_reverse_cumsum_oracle(self, rng):
        j = rng.standard_normal((3, 4))
        s = cost_to_go(j)
        ref = np.array(
            [[j[k, i:].sum() for i in range(4)] for k in range(3)]
        )
        np.testing.assert_allclose(s, ref, atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            cost_to_go(np.array([[1.0, np.nan]]))


class TestPerTimestepUpdates:
    def test_weight_concentration(self, rng):
        offsets = rng.standard_normal((2, 3, 1, 2))
        theta = np.zeros((1, 2))
        s = np.array([[0.0, 0.0, 0.0], [100.0, 100.0, 100.0]])
        means, covs = per_timestep_updates(offsets, s, 50.0, theta)
        # rollout 0 dominates every timestep
        for i in range(3):
            np.testing.assert_allclose(means[i, 0], offsets[0, i, 0], atol=1e-8)

    def test_uniform_when_costs_equal(self, rng):
        offsets = rng.standard_normal((3, 2, 1, 2))
        theta = np.zeros((1, 2))
        s = np.full((3, 2), 4.2)
        means, covs = per_timestep_updates(offsets, s, 10.0, theta)
        np.testing.assert_allclose(means[0, 0], offsets[:, 0, 0].mean(axis=0), atol=1e-12)
        ref_cov = sum(np.outer(offsets[k, 0, 0], offsets[k, 0, 0]) for k in range(3)) / 3
        np.testing.assert_allclose(covs[0, 0], ref_cov, atol=1e-12)

    def test_hand_instance(self):
        # K=3 rollouts, N=1 timestep, D=1, B=1: trivially checkable numbers
        offsets = np.array([[[[1.0]]], [[[2.0]]], [[[4.0]]]])
        theta = np.array([[10.0]])
        s = np.array([[0.0], [1.0], [2.0]])
        means, covs = per_timestep_updates(offsets, s, 1.0, theta)
        e = [1.0, math.exp(-0.5), math.exp(-1.0)]
        probs = [x / sum(e) for x in e]
        want_mean = 10.0 + probs[0] * 1 + probs[1] * 2 + probs[2] * 4
        want_cov = probs[0] * 1 + probs[1] * 4 + probs[2] * 16
        assert means[0, 0, 0] == pytest.approx(want_mean, abs=1e-12)
        assert covs[0, 0, 0, 0] == pytest.approx(want_cov, abs=1e-12)


class TestTemporalAverage:
    def test_identical_inputs(self):
        values = np.tile(np.array([1.0, 2.0]), (5, 1))
        np.testing.assert_allclose(temporal_average(values), [1.0, 2.0], atol=1e-15)

    def test_two_step_weighting(self):
        v = np.array([[3.0], [9.0]])
        assert temporal_average(v)[0] == pytest.approx((2 * 3.0 + 9.0) / 3.0, abs=1e-15)

    def test_psd_preserved(self, rng):
        mats = []
        for _ in range(3):
            a = rng.standard_normal((4, 4))
            mats.append(a @ a.T)
        avg = temporal_average(np.stack(mats))
        assert np.linalg.eigvalsh(avg).min() >= -1e-9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            temporal_average(np.zeros((0, 2)))


class TestExplorationMagnitude:
    def test_isotropic(self):
        assert exploration_magnitude(3.5 * np.eye(4)) == pytest.approx(3.5, abs=1e-15)

    def test_diagonal(self):
        assert exploration_magnitude(np.diag([1.0, 2.0, 3.0])) == pytest.approx(2.0)

    def test_trace_identity(self, rng):
        a = rng.standard_normal((5, 5))
        cov = a @ a.T
        assert exploration_magnitude(cov) == pytest.approx(np.trace(cov) / 5, abs=1e-12)

    def test_asymmetric_rejected(self):
        cov = np.eye(3)
        cov[0, 1] = 1e-6
        with pytest.raises(ValueError):
            exploration_magnitude(cov)


def small_batch(rng, k=3, n=4, d=1, b=2, scale=1.0):
    offsets = rng.standard_normal((k, n, d, b)) * scale
    step_costs = rng.uniform(0.0, 5.0, (k, n))
    return RolloutBatch(offsets, step_costs)


class TestPi2Update:
    def _dists(self, d=1, b=2, lam=1.0):
        return [GaussianSearchDistribution(np.zeros(b), lam * np.eye(b)) for _ in range(d)]

    def test_matches_brute_force_oracle(self, rng):
        batch = small_batch(rng)
        dists = self._dists()
        config = Pi2Config(trials_per_update=3, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CEM_STYLE)
        report = pi2_update(batch, config, dists)
        ref_mean, ref_cov = brute_force_pi2(
            np.zeros((1, 2)), batch.sampled_offsets, batch.step_costs, 10.0
        )
        np.testing.assert_allclose(report.distributions[0].mean, ref_mean[0], atol=1e-10)
        np.testing.assert_allclose(
            report.distributions[0].covariance, ref_cov[0], atol=1e-10
        )

    def test_covariance_none_is_bit_identical(self, rng):
        batch = small_batch(rng)
        dists = self._dists(lam=2.5)
        config = Pi2Config(trials_per_update=3, eliteness=10.0)
        report = pi2_update(batch, config, dists)
        np.testing.assert_array_equal(
            report.distributions[0].covariance, dists[0].covariance
        )
        assert not np.array_equal(report.distributions[0].mean, dists[0].mean)

    def test_base_noise_on_degenerate_batch(self):
        offsets = np.zeros((3, 4, 1, 5))
        step_costs = np.zeros((3, 4))
        batch = RolloutBatch(offsets, step_costs)
        dists = [GaussianSearchDistribution(np.zeros(5), np.eye(5))]
        config = Pi2Config(trials_per_update=3, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CEM_STYLE,
                           base_noise_level=100.0)
        report = pi2_update(batch, config, dists)
        np.testing.assert_array_equal(
            report.distributions[0].covariance, 100.0 * np.eye(5)
        )

    def test_per_dof_decomposition_exact(self, rng):
        k, n, b = 4, 5, 3
        offsets = rng.standard_normal((k, n, 2, b))
        costs = rng.uniform(0, 3, (k, n))
        config = Pi2Config(trials_per_update=k, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CEM_STYLE)
        joint = pi2_update(RolloutBatch(offsets, costs), config, self._dists(2, b))
        for d in range(2):
            solo = pi2_update(
                RolloutBatch(offsets[:, :, d : d + 1, :], costs),
                config,
                self._dists(1, b),
            )
            np.testing.assert_array_equal(
                joint.distributions[d].mean, solo.distributions[0].mean
            )
            np.testing.assert_array_equal(
                joint.distributions[d].covariance, solo.distributions[0].covariance
            )

    def test_mean_invariant_to_constant_step_cost_shift(self, rng):
        batch = small_batch(rng)
        config = Pi2Config(trials_per_update=3, eliteness=10.0)
        base = pi2_update(batch, config, self._dists())
        shifted = pi2_update(
            RolloutBatch(batch.sampled_offsets, batch.step_costs + 7.5),
            config,
            self._dists(),
        )
        np.testing.assert_allclose(
            base.distributions[0].mean, shifted.distributions[0].mean, atol=1e-12
        )

    def test_cem_eliteness_weighting(self, rng):
        batch = small_batch(rng, k=6)
        config = Pi2Config(trials_per_update=6, eliteness=CemEliteness(3),
                           covariance_update=CovarianceUpdate.CEM_STYLE)
        report = pi2_update(batch, config, self._dists())
        assert np.linalg.eigvalsh(report.distributions[0].covariance).min() >= -1e-9

    def test_cmaes_style_needs_states(self, rng):
        batch = small_batch(rng)
        config = Pi2Config(trials_per_update=3, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CMAES_STYLE)
        with pytest.raises(ValueError, match="CmaesState"):
            pi2_update(batch, config, self._dists())

    def test_cmaes_style_advances_state(self, rng):
        batch = small_batch(rng)
        config = Pi2Config(trials_per_update=3, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CMAES_STYLE)
        states = [CmaesState.initial(2)]
        report = pi2_update(batch, config, self._dists(), states)
        assert report.cmaes_states[0].generation == 1
        assert report.distributions[0].step_size == report.cmaes_states[0].step_size

    def test_base_noise_floor_invariant(self, rng):
        batch = small_batch(rng, scale=0.3)
        config = Pi2Config(trials_per_update=3, eliteness=10.0,
                           covariance_update=CovarianceUpdate.CEM_STYLE,
                           base_noise_level=2.0)
        report = pi2_update(batch, config, self._dists())
        eigs = np.linalg.eigvalsh(report.distributions[0].covariance)
        assert eigs.min() >= 2.0 - 1e-9

    def test_shape_validation(self, rng):
        batch = small_batch(rng, d=2)
        config = Pi2Config(trials_per_update=3, eliteness=10.0)
        with pytest.raises(ValueError):
            pi2_update(batch, config, self._dists(d=1))

    def test_report_magnitudes(self, rng):
        batch = small_batch(rng)
        config = Pi2Config(trials_per_update=3, eliteness=10.0)
        report = pi2_update(batch, config, self._dists(lam=3.0), noise_free_cost=1.25)
        assert report.noise_free_cost == 1.25
        assert report.exploration_magnitudes[0] == pytest.approx(3.0)


class TestRolloutBatch:
    def test_constant_mode_rows_identical_property(self, rng):
        dist = GaussianSearchDistribution(np.zeros(2), np.eye(2))
        offsets = np.stack(
            [
                generate_exploration(
                    ExplorationMode.CONSTANT, dist, 5, None, np.random.default_rng([0, 1, k])
                )
                for k in range(3)
            ]
        )[:, :, None, :]
        batch = RolloutBatch(offsets, np.zeros((3, 5)))
        for k in range(3):
            for i in range(5):
                np.testing.assert_array_equal(
                    batch.sampled_offsets[k, i], batch.sampled_offsets[k, 0]
                )

    def test_shape_checks(self, rng):
        with pytest.raises(ValueError):
            RolloutBatch(rng.standard_normal((2, 3, 1, 2)), np.zeros((2, 4)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            Pi2Config(trials_per_update=1, eliteness=10.0)
        with pytest.raises(ValueError):
            Pi2Config(trials_per_update=5, eliteness=10.0, base_noise_level=-1.0)
