"""Experiment configs, learning sessions, CSV persistence, CLI."""

import math

import numpy as np
import pytest

import pwaopt.backend
from pwaopt import cli, harness
from pwaopt.harness import (
    AggregateRow,
    ConfigError,
    CurveRow,
    ExperimentConfig,
    LearningCurve,
    aggregate_curves,
    aggregate_directory,
    build_problem,
    format_config,
    load_config,
    parse_config,
    preset,
    read_curve_csv,
    run,
    run_session,
    write_config,
    write_curve_csv,
)

TINY = dict(
    algorithm="PI2",
    trials_per_update=3,
    h=10.0,
    lambda_init=1e4,
    updates=2,
    replications=1,
    seed=7,
    dof_count=2,
    basis_count=3,
)


class TestConfigValidation:
    def test_defaults_valid(self):
        ExperimentConfig()

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError, match="algorithm"):
            ExperimentConfig(algorithm="SGD")

    def test_h_for_cem_rejected(self):
        with pytest.raises(ConfigError, match="'h'"):
            ExperimentConfig(algorithm="CEM", h=10.0)

    def test_elite_count_for_pi2_rejected(self):
        with pytest.raises(ConfigError, match="K_e"):
            ExperimentConfig(algorithm="PI2", elite_count=5)

    def test_field_errors_name_fields(self):
        with pytest.raises(ConfigError, match="lambda_init"):
            ExperimentConfig(lambda_init=0.0)
        with pytest.raises(ConfigError, match="'dt'"):
            ExperimentConfig(dt=0.2)
        with pytest.raises(ConfigError, match="viapoint_time"):
            ExperimentConfig(viapoint_time=0.7)

    def test_eliteness_defaults(self):
        assert ExperimentConfig(algorithm="PI2").eliteness().h == 10.0
        assert ExperimentConfig(algorithm="CEM").eliteness().elite_count == 5
        assert ExperimentConfig(algorithm="CMAES", elite_count=3).eliteness().elite_count == 3

    def test_pi2_config_mapping(self):
        from pwaopt.pi2 import CovarianceUpdate

        assert ExperimentConfig(algorithm="PI2").to_pi2_config().covariance_update \
            is CovarianceUpdate.NONE
        assert ExperimentConfig(algorithm="PI2CMA").to_pi2_config().covariance_update \
            is CovarianceUpdate.CEM_STYLE
        assert ExperimentConfig(algorithm="PI2CMAES").to_pi2_config().covariance_update \
            is CovarianceUpdate.CMAES_STYLE


class TestConfigFiles:
    def test_round_trip(self, tmp_path):
        config = ExperimentConfig(**TINY)
        path = tmp_path / "exp.conf"
        write_config(config, path)
        assert load_config(path) == config

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_config("frobnicate = 3\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("K = 10\nK = 12\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="'K'"):
            parse_config("K = ten\n")

    def test_comments_and_blanks_ignored(self):
        config = parse_config("# a comment\n\nK = 12  # trailing\nalgorithm = PI2\n")
        assert config.trials_per_update == 12

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("K 10\n")


class TestBuildProblem:
    def test_pieces_consistent(self):
        config = ExperimentConfig(**TINY)
        arm, task, policy = build_problem(config)
        assert arm.dof_count == 2
        assert policy.theta.shape == (2, 3)
        assert task.dof_count == 2
        np.testing.assert_array_equal(policy.start, np.zeros(2))
        assert np.all(policy.goal > 0)


class TestSessions:
    def test_row_count_and_schema(self):
        config = ExperimentConfig(**TINY)
        curve = run_session(config, seed=7)
        assert len(curve) == config.updates + 1
        assert [row.update for row in curve.rows] == [0, 1, 2]
        assert math.isnan(curve.rows[-1].mean_batch_cost)
        assert all(not math.isnan(r.mean_batch_cost) for r in curve.rows[:-1])
        assert all(len(r.lambda_per_dof) == 2 for r in curve.rows)

    def test_zero_updates_single_positive_row(self):
        config = ExperimentConfig(**{**TINY, "updates": 0})
        curve = run_session(config, seed=7)
        assert len(curve) == 1
        assert curve.rows[0].noise_free_cost > 0  # min-jerk init misses the viapoint

    def test_fixed_covariance_lambda_constant(self):
        config = ExperimentConfig(**{**TINY, "updates": 3})
        curve = run_session(config, seed=7)
        lams = curve.lambda_means()
        np.testing.assert_array_equal(lams, np.full(4, 1e4))

    def test_deterministic_csv_bytes(self, tmp_path):
        config = ExperimentConfig(**TINY)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_curve_csv(run_session(config, seed=7), a)
        write_curve_csv(run_session(config, seed=7), b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_curve_not_schema(self):
        config = ExperimentConfig(**TINY)
        c1 = run_session(config, seed=7)
        c2 = run_session(config, seed=8)
        assert len(c1) == len(c2)
        assert not c1.equals(c2)

    def test_run_uses_base_seed_plus_rep(self, tmp_path):
        config = ExperimentConfig(**{**TINY, "replications": 2})
        curves, failures = run(config, out_dir=tmp_path, stem="t")
        assert not failures
        assert curves[0].equals(run_session(config, seed=7))
        assert curves[1].equals(run_session(config, seed=8))
        assert (tmp_path / "t.rep0.csv").exists()
        assert (tmp_path / "t.rep1.csv").exists()

    def test_abort_on_non_finite_cost(self, tmp_path, monkeypatch):
        real = pwaopt.backend.viapoint_rollout_batch
        calls = {"n": 0}

        def poisoned(*args, **kwargs):
            pos, vel, acc, costs = real(*args, **kwargs)
            calls["n"] += 1
            if calls["n"] >= 4:
                costs = costs.copy()
                costs[0, 0] = np.inf
            return pos, vel, acc, costs

        monkeypatch.setattr("pwaopt.backend.viapoint_rollout_batch", poisoned)
        config = ExperimentConfig(**{**TINY, "updates": 5})
        curves, failures = run(config, out_dir=tmp_path, stem="bad")
        assert 0 in failures and "non-finite" in failures[0]
        text = (tmp_path / "bad.rep0.csv").read_text()
        assert "# aborted" in text
        back = read_curve_csv(tmp_path / "bad.rep0.csv")
        assert len(back) < 6  # partial curve


class TestCurveCsv:
    def test_round_trip_exact(self, tmp_path):
        config = ExperimentConfig(**TINY)
        curve = run_session(config, seed=7)
        path = tmp_path / "curve.csv"
        write_curve_csv(curve, path)
        assert read_curve_csv(path).equals(curve)

    def test_header(self, tmp_path):
        curve = LearningCurve(
            (CurveRow(0, 1.0, float("nan"), 2.0, (2.0, 2.0)),)
        )
        path = tmp_path / "h.csv"
        write_curve_csv(curve, path)
        header = path.read_text().splitlines()[0]
        assert header == "update,noise_free_cost,mean_batch_cost,lambda_mean,lambda_dof_1,lambda_dof_2"


class TestAggregate:
    def _curve(self, costs, lams):
        rows = tuple(
            CurveRow(i, c, 0.0, l, (l,)) for i, (c, l) in enumerate(zip(costs, lams))
        )
        return LearningCurve(rows)

    def test_mean_and_sample_std(self):
        curves = [self._curve([1.0, 2.0], [5.0, 6.0]), self._curve([3.0, 4.0], [7.0, 8.0])]
        rows = aggregate_curves(curves)
        assert rows[0].cost_mean == pytest.approx(2.0)
        assert rows[0].cost_std == pytest.approx(np.std([1.0, 3.0], ddof=1))
        assert rows[1].lambda_mean == pytest.approx(7.0)

    def test_single_replication_nan_std(self):
        rows = aggregate_curves([self._curve([1.0], [2.0])])
        assert math.isnan(rows[0].cost_std)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            aggregate_curves([self._curve([1.0], [2.0]), self._curve([1.0, 2.0], [2.0, 3.0])])

    def test_directory_grouping(self, tmp_path):
        config = ExperimentConfig(**{**TINY, "replications": 2})
        run(config, out_dir=tmp_path, stem="expA")
        written = aggregate_directory(tmp_path)
        assert [p.name for p in written] == ["expA.aggregate.csv"]
        lines = written[0].read_text().splitlines()
        assert lines[0] == "update,cost_mean,cost_std,lambda_mean,lambda_std"
        assert len(lines) == config.updates + 2


class TestPresets:
    def test_fig3(self):
        configs = preset("fig3")
        assert len(configs) == 3
        modes = [c.exploration_mode for _, c in configs]
        assert sorted(modes) == ["constant", "per_basis", "time_varying"]
        for _, c in configs:
            assert (c.algorithm, c.trials_per_update, c.h, c.lambda_init) == ("PI2", 10, 10.0, 1e4)
            assert c.replications >= 3

    def test_fig3_differs_only_in_mode(self):
        import dataclasses

        configs = [c for _, c in preset("fig3")]
        base = dataclasses.replace(configs[0], exploration_mode="constant")
        for c in configs:
            assert dataclasses.replace(c, exploration_mode="constant") == base

    def test_fig5(self):
        configs = preset("fig5")
        assert len(configs) == 6
        kinds = {(c.algorithm, c.h, c.elite_count) for _, c in configs}
        assert ("PI2", 5.0, None) in kinds and ("PI2", 10.0, None) in kinds
        assert ("CEM", None, 3) in kinds and ("CMAES", None, 5) in kinds
        assert all(c.replications >= 3 for _, c in configs)

    def test_fig6(self):
        configs = preset("fig6")
        assert len(configs) == 6
        for _, c in configs:
            assert c.updates == 200 and c.trials_per_update == 20 and c.replications == 5
        algos = {(c.algorithm, c.lambda_init) for _, c in configs}
        assert algos == {(a, l) for a in ("PI2", "PI2CMA") for l in (1e2, 1e4, 1e6)}
        noise = {c.algorithm: c.base_noise_level for _, c in configs}
        assert noise["PI2CMA"] == 100.0 and noise["PI2"] == 0.0

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset("fig9")


class TestCli:
    def _write_tiny(self, tmp_path):
        path = tmp_path / "tiny.conf"
        write_config(ExperimentConfig(**TINY), path)
        return path

    def test_run_command(self, tmp_path, capsys):
        config_path = self._write_tiny(tmp_path)
        out = tmp_path / "out"
        code = cli.main(["run", str(config_path), "--out", str(out)])
        assert code == 0
        assert (out / "tiny.rep0.csv").exists()
        assert "final noise-free cost" in capsys.readouterr().out

    def test_run_overrides(self, tmp_path):
        config_path = self._write_tiny(tmp_path)
        out = tmp_path / "out"
        code = cli.main([
            "run", str(config_path), "--out", str(out), "--replications", "2", "--seed", "3",
        ])
        assert code == 0
        assert (out / "tiny.rep1.csv").exists()
        direct = run_session(ExperimentConfig(**{**TINY, "seed": 3}), seed=3)
        assert read_curve_csv(out / "tiny.rep0.csv").equals(direct)

    def test_preset_and_aggregate_commands(self, tmp_path):
        out = tmp_path / "m"
        assert cli.main(["preset", "fig3", "--out", str(out)]) == 0
        confs = sorted(p.name for p in out.glob("*.conf"))
        assert confs == ["fig3_constant.conf", "fig3_per_basis.conf", "fig3_time_varying.conf"]
        # run one tiny replication into the dir, then aggregate
        tiny = self._write_tiny(tmp_path)
        assert cli.main(["run", str(tiny), "--out", str(out)]) == 0
        assert cli.main(["aggregate", str(out)]) == 0
        assert (out / "tiny.aggregate.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.conf"
        bad.write_text("algorithm = WRONG\n")
        assert cli.main(["run", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "nope.conf")]) == 1

    def test_aggregate_empty_dir(self, tmp_path, capsys):
        assert cli.main(["aggregate", str(tmp_path)]) == 1
