"""Experiment harness: configs, learning sessions, CSV persistence, presets.

A session optimizes the planar-arm viapoint task with one of five
algorithms, all sharing the rollout machinery: classic fixed-covariance
updates under three weighting schemes (PI2, CEM, CMAES), and the two
covariance-adapting variants (PI2CMA, PI2CMAES). Each update runs one
noise-free evaluation rollout (logged, never learned from) plus K
exploring rollouts (learned from, never logged).

Learning-curve row u describes the state after u updates: the noise-free
cost of the current mean policy, the mean total cost of the batch sampled
*from* that state (nan on the final row, which samples no batch), and the
exploration magnitude per DOF.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import backend
from .arm import BENCHMARK_VIAPOINT_WEIGHT, ArmModel, ViapointTask, final_posture
from .distributions import GaussianSearchDistribution
from .dmp import (
    DEFAULT_ALPHA_X,
    DEFAULT_ALPHA_Z,
    DEFAULT_FORCING_SCALE,
    DmpPolicy,
    Trajectory,
    activation_matrix,
    forcing_features,
    min_jerk,
    phase_sequence,
    train_from_trajectory,
)
from .es import CmaesState
from .pi2 import (
    CovarianceUpdate,
    ExplorationMode,
    Pi2Config,
    RolloutBatch,
    exploration_magnitude,
    generate_exploration,
    pi2_update,
)
from .weighting import CemEliteness, CmaesEliteness, Pi2Eliteness


class ConfigError(ValueError):
    """Configuration rejected; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class NonFiniteCostError(RuntimeError):
    """A rollout produced a non-finite cost; the replication is aborted.

    Carries the learning-curve rows completed before the abort so the
    runner can persist a partial curve with a diagnostic.
    """

    def __init__(self, update: int, detail: str, partial_rows=()):
        self.update = update
        self.partial_rows = tuple(partial_rows)
        super().__init__(f"non-finite cost at update {update}: {detail}")


ALGORITHMS = ("CEM", "CMAES", "PI2", "PI2CMA", "PI2CMAES")
_MODES = {
    "constant": ExplorationMode.CONSTANT,
    "per_basis": ExplorationMode.PER_BASIS,
    "time_varying": ExplorationMode.TIME_VARYING,
}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "PI2"
    trials_per_update: int = 10
    h: Optional[float] = None
    elite_count: Optional[int] = None
    exploration_mode: str = "constant"
    lambda_init: float = 1e4
    base_noise_level: float = 0.0
    updates: int = 100
    replications: int = 1
    seed: int = 0
    dt: float = 0.01
    duration: float = 0.5
    viapoint_x: float = 0.5
    viapoint_y: float = 0.5
    viapoint_time: float = 0.3
    viapoint_weight: float = BENCHMARK_VIAPOINT_WEIGHT
    dof_count: int = 10
    basis_count: int = 5
    alpha_z: float = DEFAULT_ALPHA_Z
    alpha_x: float = DEFAULT_ALPHA_X
    forcing_scale: float = DEFAULT_FORCING_SCALE

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.trials_per_update < 2:
            raise ConfigError("K", f"must be >= 2, got {self.trials_per_update}")
        if self.exploration_mode not in _MODES:
            raise ConfigError(
                "exploration_mode",
                f"must be one of {sorted(_MODES)}, got {self.exploration_mode!r}",
            )
        uses_h = self.algorithm in ("PI2", "PI2CMA", "PI2CMAES")
        if uses_h and self.elite_count is not None:
            raise ConfigError("K_e", f"{self.algorithm} takes an eliteness h, not K_e")
        if not uses_h and self.h is not None:
            raise ConfigError("h", f"{self.algorithm} takes an elite count K_e, not h")
        if self.h is not None and not self.h > 0:
            raise ConfigError("h", f"must be positive, got {self.h}")
        if self.elite_count is not None and not 1 <= self.elite_count <= self.trials_per_update:
            raise ConfigError(
                "K_e", f"must be in [1, K={self.trials_per_update}], got {self.elite_count}"
            )
        if not self.lambda_init > 0:
            raise ConfigError("lambda_init", f"must be positive, got {self.lambda_init}")
        if self.base_noise_level < 0:
            raise ConfigError("base_noise_level", f"must be >= 0, got {self.base_noise_level}")
        if self.updates < 0:
            raise ConfigError("updates", f"must be >= 0, got {self.updates}")
        if self.replications < 1:
            raise ConfigError("replications", f"must be >= 1, got {self.replications}")
        if not 0 < self.dt <= self.duration / 10.0:
            raise ConfigError("dt", f"must be in (0, duration/10], got {self.dt}")
        if not 0 < self.viapoint_time < self.duration:
            raise ConfigError(
                "viapoint_time",
                f"must be inside (0, duration={self.duration}), got {self.viapoint_time}",
            )
        if not self.viapoint_weight > 0:
            raise ConfigError(
                "viapoint_weight", f"must be positive, got {self.viapoint_weight}"
            )
        if self.dof_count < 1:
            raise ConfigError("D", f"must be >= 1, got {self.dof_count}")
        if self.basis_count < 2:
            raise ConfigError("B", f"must be >= 2, got {self.basis_count}")
        if not self.alpha_z > 0:
            raise ConfigError("alpha_z", f"must be positive, got {self.alpha_z}")
        if not self.alpha_x > 0:
            raise ConfigError("alpha_x", f"must be positive, got {self.alpha_x}")
        if not self.forcing_scale > 0:
            raise ConfigError(
                "forcing_scale", f"must be positive, got {self.forcing_scale}"
            )

    @property
    def viapoint(self) -> tuple[float, float]:
        return (self.viapoint_x, self.viapoint_y)

    def eliteness(self):
        if self.algorithm in ("PI2", "PI2CMA", "PI2CMAES"):
            return Pi2Eliteness(10.0 if self.h is None else self.h)
        k_e = self.trials_per_update // 2 if self.elite_count is None else self.elite_count
        if self.algorithm == "CEM":
            return CemEliteness(k_e)
        return CmaesEliteness(k_e)

    def to_pi2_config(self) -> Pi2Config:
        covariance = {
            "PI2": CovarianceUpdate.NONE,
            "CEM": CovarianceUpdate.NONE,
            "CMAES": CovarianceUpdate.NONE,
            "PI2CMA": CovarianceUpdate.CEM_STYLE,
            "PI2CMAES": CovarianceUpdate.CMAES_STYLE,
        }[self.algorithm]
        return Pi2Config(
            trials_per_update=self.trials_per_update,
            eliteness=self.eliteness(),
            exploration_mode=_MODES[self.exploration_mode],
            covariance_update=covariance,
            base_noise_level=self.base_noise_level,
            evaluation_rollout=True,
        )


# config file keys <-> dataclass fields; flat `key = value` text format
_CONFIG_KEYS = {
    "algorithm": ("algorithm", str),
    "K": ("trials_per_update", int),
    "h": ("h", float),
    "K_e": ("elite_count", int),
    "exploration_mode": ("exploration_mode", str),
    "lambda_init": ("lambda_init", float),
    "base_noise_level": ("base_noise_level", float),
    "updates": ("updates", int),
    "replications": ("replications", int),
    "seed": ("seed", int),
    "dt": ("dt", float),
    "duration": ("duration", float),
    "viapoint_x": ("viapoint_x", float),
    "viapoint_y": ("viapoint_y", float),
    "viapoint_time": ("viapoint_time", float),
    "viapoint_weight": ("viapoint_weight", float),
    "D": ("dof_count", int),
    "B": ("basis_count", int),
    "alpha_z": ("alpha_z", float),
    "alpha_x": ("alpha_x", float),
    "forcing_scale": ("forcing_scale", float),
}


def parse_config(text: str) -> ExperimentConfig:
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(key, "unknown key")
        field, caster = _CONFIG_KEYS[key]
        if field in fields:
            raise ConfigError(key, "duplicate key")
        try:
            fields[field] = caster(value)
        except ValueError:
            raise ConfigError(key, f"cannot parse {value!r} as {caster.__name__}") from None
    return ExperimentConfig(**fields)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for key, (field, caster) in _CONFIG_KEYS.items():
        value = getattr(config, field)
        if value is None:
            continue
        if caster is float:
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(format_config(config))


@dataclass(frozen=True)
class CurveRow:
    update: int
    noise_free_cost: float
    mean_batch_cost: float
    lambda_mean: float
    lambda_per_dof: tuple[float, ...]


@dataclass(frozen=True)
class LearningCurve:
    rows: tuple[CurveRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def dof_count(self) -> int:
        if not self.rows:
            raise ValueError("empty learning curve has no DOF count")
        return len(self.rows[0].lambda_per_dof)

    def noise_free_costs(self) -> np.ndarray:
        return np.array([row.noise_free_cost for row in self.rows])

    def lambda_means(self) -> np.ndarray:
        return np.array([row.lambda_mean for row in self.rows])

    def equals(self, other: "LearningCurve") -> bool:
        """Exact (bitwise) row equality, treating nan == nan."""
        if len(self) != len(other):
            return False

        def same(a: float, b: float) -> bool:
            return (math.isnan(a) and math.isnan(b)) or a == b

        for mine, theirs in zip(self.rows, other.rows):
            if mine.update != theirs.update:
                return False
            if not same(mine.noise_free_cost, theirs.noise_free_cost):
                return False
            if not same(mine.mean_batch_cost, theirs.mean_batch_cost):
                return False
            if not same(mine.lambda_mean, theirs.lambda_mean):
                return False
            if len(mine.lambda_per_dof) != len(theirs.lambda_per_dof):
                return False
            if not all(same(a, b) for a, b in zip(mine.lambda_per_dof, theirs.lambda_per_dof)):
                return False
        return True


def curve_header(dof_count: int) -> list[str]:
    return (
        ["update", "noise_free_cost", "mean_batch_cost", "lambda_mean"]
        + [f"lambda_dof_{d + 1}" for d in range(dof_count)]
    )


def write_curve_csv(
    curve: LearningCurve, path, diagnostic: Optional[str] = None, dof_count: Optional[int] = None
) -> None:
    if dof_count is None:
        dof_count = curve.dof_count
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(curve_header(dof_count))
        for row in curve.rows:
            values = [row.noise_free_cost, row.mean_batch_cost, row.lambda_mean]
            values += list(row.lambda_per_dof)
            writer.writerow([str(row.update)] + [format(v, ".17g") for v in values])
        if diagnostic:
            fh.write(f"# {diagnostic}\n")


def read_curve_csv(path) -> LearningCurve:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dof_count = len(header) - 4
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            values = [float(v) for v in row[1:]]
            rows.append(
                CurveRow(
                    update=int(row[0]),
                    noise_free_cost=values[0],
                    mean_batch_cost=values[1],
                    lambda_mean=values[2],
                    lambda_per_dof=tuple(values[3 : 3 + dof_count]),
                )
            )
    return LearningCurve(tuple(rows))


def build_problem(config: ExperimentConfig) -> tuple[ArmModel, ViapointTask, DmpPolicy]:
    """Arm, task and the min-jerk-initialized policy for a config."""
    arm = ArmModel.unit_reach(config.dof_count)
    task = ViapointTask.standard(
        config.dof_count,
        viapoint=config.viapoint,
        viapoint_time=config.viapoint_time,
        duration=config.duration,
        viapoint_weight=config.viapoint_weight,
    )
    start = np.zeros(config.dof_count)
    goal = final_posture(arm)
    template = DmpPolicy.equal_time_basis(
        start,
        goal,
        config.duration,
        config.basis_count,
        alpha_z=config.alpha_z,
        alpha_x=config.alpha_x,
        forcing_scale=config.forcing_scale,
    )
    demo = min_jerk(start, goal, config.duration, config.dt)
    policy = train_from_trajectory(demo, template)
    return arm, task, policy


class _Session:
    """One learning session: fixed seed, one policy, K rollouts per update."""

    def __init__(self, config: ExperimentConfig, seed: int):
        self.config = config
        self.seed = seed
        self.arm, self.task, self.policy = build_problem(config)
        self.pi2_config = config.to_pi2_config()
        self.n_steps = int(round(config.duration / config.dt)) + 1
        self.features = forcing_features(self.policy, self.n_steps, config.dt)
        phases = phase_sequence(self.policy, self.n_steps, config.dt)
        self.activations = activation_matrix(self.policy, phases)
        self.viapoint_step = int(math.floor(config.viapoint_time / config.dt + 0.5))
        self.times = np.arange(self.n_steps) * config.dt
        self.dists = [
            GaussianSearchDistribution(
                self.policy.theta[d],
                config.lambda_init * np.eye(config.basis_count),
            )
            for d in range(config.dof_count)
        ]
        self.states = None
        if self.pi2_config.covariance_update is CovarianceUpdate.CMAES_STYLE:
            self.states = [CmaesState.initial(config.basis_count) for _ in range(config.dof_count)]

    def _rollout_batch(self, offsets: np.ndarray):
        cfg = self.config
        return backend.viapoint_rollout_batch(
            self._theta(),
            offsets,
            self.features,
            self.policy.start,
            self.policy.goal,
            self.policy.forcing_gains(),
            self.policy.alpha_z,
            self.policy.beta_z,
            cfg.duration,
            cfg.dt,
            self.arm.link_lengths,
            np.asarray(cfg.viapoint),
            self.viapoint_step,
            self.task.dof_weights,
            self.task.viapoint_weight,
        )

    def _theta(self) -> np.ndarray:
        return np.stack([dist.mean for dist in self.dists])

    def _lambdas(self) -> np.ndarray:
        return np.array(
            [exploration_magnitude(d.effective_covariance()) for d in self.dists]
        )

    def probe_cost(self) -> float:
        cfg = self.config
        zero = np.zeros((1, self.n_steps, cfg.dof_count, cfg.basis_count))
        _, _, _, costs = self._rollout_batch(zero)
        return float(costs[0].sum())

    def explore(self, update: int) -> np.ndarray:
        cfg = self.config
        offsets = np.empty(
            (cfg.trials_per_update, self.n_steps, cfg.dof_count, cfg.basis_count)
        )
        for k in range(cfg.trials_per_update):
            rng = np.random.default_rng([self.seed, update, k])
            for d in range(cfg.dof_count):
                offsets[k, :, d, :] = generate_exploration(
                    self.pi2_config.exploration_mode,
                    self.dists[d],
                    self.n_steps,
                    self.activations,
                    rng,
                )
        return offsets

    def run(self) -> LearningCurve:
        cfg = self.config
        rows: list[CurveRow] = []
        probe = self.probe_cost() if self.pi2_config.evaluation_rollout else float("nan")
        for update in range(1, cfg.updates + 1):
            offsets = self.explore(update)
            pos, vel, acc, step_costs = self._rollout_batch(offsets)
            if not np.all(np.isfinite(step_costs)):
                bad = np.argwhere(~np.isfinite(step_costs))[0]
                raise NonFiniteCostError(
                    update, f"rollout {bad[0]}, timestep {bad[1]}", partial_rows=rows
                )
            trajectories = tuple(
                Trajectory(self.times, pos[k], vel[k], acc[k])
                for k in range(cfg.trials_per_update)
            )
            batch = RolloutBatch(offsets, step_costs, trajectories)
            lambdas = self._lambdas()
            rows.append(
                CurveRow(
                    update=update - 1,
                    noise_free_cost=probe,
                    mean_batch_cost=float(step_costs.sum(axis=1).mean()),
                    lambda_mean=float(lambdas.mean()),
                    lambda_per_dof=tuple(lambdas),
                )
            )
            report = pi2_update(
                batch, self.pi2_config, self.dists, self.states, noise_free_cost=probe
            )
            self.dists = list(report.distributions)
            if report.cmaes_states is not None:
                self.states = list(report.cmaes_states)
            probe = self.probe_cost() if self.pi2_config.evaluation_rollout else float("nan")
        lambdas = self._lambdas()
        rows.append(
            CurveRow(
                update=cfg.updates,
                noise_free_cost=probe,
                mean_batch_cost=float("nan"),
                lambda_mean=float(lambdas.mean()),
                lambda_per_dof=tuple(lambdas),
            )
        )
        return LearningCurve(tuple(rows))


def run_session(config: ExperimentConfig, seed: int) -> LearningCurve:
    """Run one replication with the given seed; deterministic per (config, seed)."""
    return _Session(config, seed).run()


def run(config: ExperimentConfig, out_dir=None, stem: str = "experiment"):
    """Run all replications (seed = base seed + r).

    Returns (curves, failures): failures maps replication index to the
    error message of an aborted run. When out_dir is given, each curve is
    written to `<stem>.rep<r>.csv`; aborted replications get a trailing
    diagnostic comment line.
    """
    curves: list[Optional[LearningCurve]] = []
    failures: dict[int, str] = {}
    for rep in range(config.replications):
        seed = config.seed + rep
        session = _Session(config, seed)
        diagnostic = None
        try:
            curve = session.run()
        except NonFiniteCostError as err:
            diagnostic = f"aborted: {err}"
            failures[rep] = str(err)
            curve = LearningCurve(err.partial_rows)
        curves.append(curve)
        if out_dir is not None:
            path = Path(out_dir) / f"{stem}.rep{rep}.csv"
            write_curve_csv(
                curve, path, diagnostic=diagnostic, dof_count=config.dof_count
            )
    return curves, failures


# ---------------------------------------------------------------------------
# Presets reproducing the benchmark experiment matrices
# ---------------------------------------------------------------------------


def preset(name: str) -> list[tuple[str, ExperimentConfig]]:
    """Named experiment matrices; returns (experiment name, config) pairs."""
    if name == "fig3":
        # 400 updates: the slower exploration modes need the longer horizon
        # to reach the comparison thresholds
        return [
            (
                f"fig3_{mode}",
                ExperimentConfig(
                    algorithm="PI2",
                    trials_per_update=10,
                    h=10.0,
                    exploration_mode=mode,
                    lambda_init=1e4,
                    updates=400,
                    replications=5,
                    seed=1,
                ),
            )
            for mode in ("constant", "per_basis", "time_varying")
        ]
    if name == "fig5":
        configs = []
        for h in (5.0, 10.0):
            configs.append(
                (
                    f"fig5_pi2_h{h:g}",
                    ExperimentConfig(
                        algorithm="PI2",
                        trials_per_update=10,
                        h=h,
                        lambda_init=1e4,
                        updates=100,
                        replications=3,
                        seed=1,
                    ),
                )
            )
        for algorithm in ("CEM", "CMAES"):
            for k_e in (3, 5):
                configs.append(
                    (
                        f"fig5_{algorithm.lower()}_ke{k_e}",
                        ExperimentConfig(
                            algorithm=algorithm,
                            trials_per_update=10,
                            elite_count=k_e,
                            lambda_init=1e4,
                            updates=100,
                            replications=3,
                            seed=1,
                        ),
                    )
                )
        return configs
    if name == "fig6":
        configs = []
        for algorithm, noise in (("PI2", 0.0), ("PI2CMA", 100.0)):
            for lambda_init in (1e2, 1e4, 1e6):
                configs.append(
                    (
                        f"fig6_{algorithm.lower()}_lambda1e{int(math.log10(lambda_init))}",
                        ExperimentConfig(
                            algorithm=algorithm,
                            trials_per_update=20,
                            h=10.0,
                            lambda_init=lambda_init,
                            base_noise_level=noise,
                            updates=200,
                            replications=5,
                            seed=1,
                        ),
                    )
                )
        return configs
    raise ValueError(f"unknown preset {name!r}; expected fig3, fig5 or fig6")


@dataclass(frozen=True)
class AggregateRow:
    update: int
    cost_mean: float
    cost_std: float
    lambda_mean: float
    lambda_std: float


def aggregate_curves(curves) -> list[AggregateRow]:
    """Mean and sample standard deviation per update index across replications."""
    curves = [c for c in curves if c is not None and len(c)]
    if not curves:
        raise ValueError("no curves to aggregate")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise ValueError(f"curves disagree on row count: {sorted(lengths)}")
    costs = np.stack([c.noise_free_costs() for c in curves])
    lambdas = np.stack([c.lambda_means() for c in curves])
    n_reps = costs.shape[0]
    rows = []
    for i, row in enumerate(curves[0].rows):
        cost_std = float(costs[:, i].std(ddof=1)) if n_reps > 1 else float("nan")
        lambda_std = float(lambdas[:, i].std(ddof=1)) if n_reps > 1 else float("nan")
        rows.append(
            AggregateRow(
                update=row.update,
                cost_mean=float(costs[:, i].mean()),
                cost_std=cost_std,
                lambda_mean=float(lambdas[:, i].mean()),
                lambda_std=lambda_std,
            )
        )
    return rows


def write_aggregate_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "cost_mean", "cost_std", "lambda_mean", "lambda_std"])
        for row in rows:
            writer.writerow(
                [str(row.update)]
                + [
                    format(v, ".17g")
                    for v in (row.cost_mean, row.cost_std, row.lambda_mean, row.lambda_std)
                ]
            )


def aggregate_directory(directory) -> list[Path]:
    """Group `<stem>.rep<r>.csv` files and write `<stem>.aggregate.csv` each."""
    directory = Path(directory)
    groups: dict[str, list[Path]] = {}
    for path in sorted(directory.glob("*.rep*.csv")):
        stem = path.name.rsplit(".rep", 1)[0]
        groups.setdefault(stem, []).append(path)
    written = []
    for stem, paths in sorted(groups.items()):
        curves = [read_curve_csv(p) for p in paths]
        rows = aggregate_curves(curves)
        out = directory / f"{stem}.aggregate.csv"
        write_aggregate_csv(rows, out)
        written.append(out)
    return written
