"""Dynamic Movement Primitives: policy, integration, and training.

Formulation (one transformation system per DOF, shared canonical system):

    canonical       dx/dt = -alpha_x * x / T,  x(0) = 1
    transformation  T dz/dt = alpha_z * (beta_z * (g - y) - z) + f(x)
                    T dy/dt = z
    forcing         f(x) = x * (g - y0) * sum_b psi_b(x) theta_b
                           / (forcing_scale * sum_b psi_b(x))
    kernel          psi_b(x) = exp(-(x - c_b)^2 / (2 w_b^2))

with critical damping alpha_z = 4 beta_z. For g = y0 the forcing gain
(g - y0) is replaced by 1 so zero-amplitude DOFs keep a live forcing term.
Integration is explicit Euler at the task timestep.

`forcing_scale` sets the units of the weight vector: trained weights grow
proportionally to it while the realized forcing is unchanged. The default
puts typical trained weights for the benchmark task in the thousands, the
scale at which the standard exploration magnitudes (1e2..1e6 variance per
weight) span "too timid" to "too wild".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from . import backend

DEFAULT_ALPHA_Z = 25.0
DEFAULT_ALPHA_X = 0.5
DEFAULT_FORCING_SCALE = 16.0


class FittingError(RuntimeError):
    """Weight regression failed (rank-deficient design matrix)."""


@dataclass(frozen=True)
class DmpPolicy:
    """Per-DOF basis weights plus the dynamical-system constants."""

    theta: np.ndarray
    start: np.ndarray
    goal: np.ndarray
    duration: float
    basis_centers: np.ndarray
    basis_widths: np.ndarray
    alpha_z: float = DEFAULT_ALPHA_Z
    beta_z: float = DEFAULT_ALPHA_Z / 4.0
    alpha_x: float = DEFAULT_ALPHA_X
    forcing_scale: float = DEFAULT_FORCING_SCALE

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=float)
        start = np.asarray(self.start, dtype=float)
        goal = np.asarray(self.goal, dtype=float)
        centers = np.asarray(self.basis_centers, dtype=float)
        widths = np.asarray(self.basis_widths, dtype=float)
        if theta.ndim != 2:
            raise ValueError(f"theta must be (D, B), got shape {theta.shape}")
        dof_count, basis_count = theta.shape
        if basis_count < 2:
            raise ValueError(f"need at least 2 basis functions, got {basis_count}")
        if start.shape != (dof_count,) or goal.shape != (dof_count,):
            raise ValueError("start and goal must be vectors of length D")
        if centers.shape != (basis_count,) or widths.shape != (basis_count,):
            raise ValueError("basis_centers and basis_widths must be vectors of length B")
        if not np.all(widths > 0):
            raise ValueError("basis widths must be positive")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not (self.alpha_z > 0 and self.beta_z > 0 and self.alpha_x > 0):
            raise ValueError("attractor and canonical constants must be positive")
        if not self.forcing_scale > 0:
            raise ValueError(f"forcing_scale must be positive, got {self.forcing_scale}")
        if abs(self.alpha_z - 4.0 * self.beta_z) > 1e-9 * self.alpha_z:
            raise ValueError(
                f"critical damping requires alpha_z = 4 beta_z, got "
                f"{self.alpha_z} vs 4*{self.beta_z}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "basis_centers", centers)
        object.__setattr__(self, "basis_widths", widths)

    @classmethod
    def equal_time_basis(
        cls,
        start,
        goal,
        duration: float,
        basis_count: int,
        theta=None,
        alpha_z: float = DEFAULT_ALPHA_Z,
        alpha_x: float = DEFAULT_ALPHA_X,
        forcing_scale: float = DEFAULT_FORCING_SCALE,
    ) -> "DmpPolicy":
        """Basis centers equally spaced in time (exponentially in phase).

        Widths make a kernel intersect its wider (earlier) neighbor at
        roughly half height; the first kernel reuses the first gap.
        """
        start = np.atleast_1d(np.asarray(start, dtype=float))
        goal = np.atleast_1d(np.asarray(goal, dtype=float))
        centers = np.exp(-alpha_x * np.linspace(0.0, 1.0, basis_count))
        gaps = -np.diff(centers)
        widths = np.empty(basis_count)
        widths[0] = gaps[0]
        widths[1:] = gaps
        widths *= 0.75
        if theta is None:
            theta = np.zeros((start.shape[0], basis_count))
        return cls(
            theta=np.asarray(theta, dtype=float),
            start=start,
            goal=goal,
            duration=float(duration),
            basis_centers=centers,
            basis_widths=widths,
            alpha_z=alpha_z,
            beta_z=alpha_z / 4.0,
            alpha_x=alpha_x,
            forcing_scale=forcing_scale,
        )

    @property
    def dof_count(self) -> int:
        return self.theta.shape[0]

    @property
    def basis_count(self) -> int:
        return self.theta.shape[1]

    def forcing_gains(self) -> np.ndarray:
        """Per-DOF forcing gain g - y0, with 1 substituted where g == y0."""
        amp = self.goal - self.start
        return np.where(amp == 0.0, 1.0, amp)

    def with_theta(self, theta) -> "DmpPolicy":
        return replace(self, theta=np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled positions, velocities and accelerations (N x D)."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        arrays = {}
        for name in ("positions", "velocities", "accelerations"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[0] != times.shape[0]:
                raise ValueError(f"{name} must be (N, D) with N = len(times)")
            arrays[name] = arr
        if times.shape[0] < 2:
            raise ValueError("a trajectory needs at least two timesteps")
        steps = np.diff(times)
        if not np.all(steps > 0):
            raise ValueError("times must be strictly increasing")
        if steps.max() - steps.min() > 1e-9 * steps[0]:
            raise ValueError("times must be uniformly spaced")
        object.__setattr__(self, "times", times)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return self.times.shape[0]

    @property
    def dof_count(self) -> int:
        return self.positions.shape[1]


def _check_dt(duration: float, dt: float) -> int:
    if not 0 < dt <= duration / 10.0:
        raise ValueError(f"dt must be in (0, duration/10], got dt={dt}, duration={duration}")
    return int(round(duration / dt)) + 1


def phase_sequence(policy: DmpPolicy, n_steps: int, dt: float) -> np.ndarray:
    """Euler trace of the canonical system: x[i+1] = x[i] (1 - alpha_x dt / T)."""
    decay = 1.0 - policy.alpha_x * dt / policy.duration
    if decay <= 0.0:
        raise ValueError(
            f"Euler canonical system unstable: alpha_x*dt/duration = "
            f"{policy.alpha_x * dt / policy.duration:.3f} >= 1"
        )
    return np.cumprod(np.concatenate(([1.0], np.full(n_steps - 1, decay))))


def basis_activations(policy: DmpPolicy, phase: float) -> np.ndarray:
    """Normalized Gaussian kernel activations at one phase value in (0, 1]."""
    if not 0.0 < phase <= 1.0:
        raise ValueError(f"phase must be in (0, 1], got {phase}")
    psi = np.exp(
        -0.5 * ((phase - policy.basis_centers) / policy.basis_widths) ** 2
    )
    return psi / psi.sum()


def activation_matrix(policy: DmpPolicy, phases: np.ndarray) -> np.ndarray:
    """Normalized activations for a whole phase sequence, shape (N, B)."""
    x = np.asarray(phases, dtype=float)[:, None]
    psi = np.exp(-0.5 * ((x - policy.basis_centers) / policy.basis_widths) ** 2)
    return psi / psi.sum(axis=1, keepdims=True)


def forcing_features(policy: DmpPolicy, n_steps: int, dt: float) -> np.ndarray:
    """Phase-scaled activation rows: forcing = gain * features[i] . theta.

    The rows fold in the phase factor and the 1/forcing_scale weight-unit
    factor, so the forcing term is exactly a dot product with theta.
    """
    phases = phase_sequence(policy, n_steps, dt)
    return phases[:, None] * activation_matrix(policy, phases) / policy.forcing_scale


def integrate(policy: DmpPolicy, dt: float, exploration=None) -> Trajectory:
    """Integrate the DMP over [0, duration].

    `exploration`, when given, is an (N, D, B) array of per-timestep
    additions to theta (the effective weights at step i are
    theta + exploration[i]).
    """
    n_steps = _check_dt(policy.duration, dt)
    if exploration is None:
        offsets = np.zeros((n_steps, policy.dof_count, policy.basis_count))
    else:
        offsets = np.asarray(exploration, dtype=float)
        if offsets.shape != (n_steps, policy.dof_count, policy.basis_count):
            raise ValueError(
                f"exploration must have shape "
                f"({n_steps}, {policy.dof_count}, {policy.basis_count}), "
                f"got {offsets.shape}"
            )
    features = forcing_features(policy, n_steps, dt)
    pos, vel, acc = backend.dmp_rollout(
        policy.theta,
        offsets,
        features,
        policy.start,
        policy.goal,
        policy.forcing_gains(),
        policy.alpha_z,
        policy.beta_z,
        policy.duration,
        dt,
    )
    times = np.arange(n_steps) * dt
    return Trajectory(times, pos, vel, acc)


def min_jerk(start, goal, duration: float, dt: float) -> Trajectory:
    """Analytic minimum-jerk trajectory y = y0 + (g-y0)(10 s^3 - 15 s^4 + 6 s^5)."""
    start = np.atleast_1d(np.asarray(start, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))
    n_steps = _check_dt(duration, dt)
    times = np.arange(n_steps) * dt
    s = (times / duration)[:, None]
    amp = (goal - start)[None, :]
    pos = start + amp * (10 * s**3 - 15 * s**4 + 6 * s**5)
    vel = amp * (30 * s**2 - 60 * s**3 + 30 * s**4) / duration
    acc = amp * (60 * s - 180 * s**2 + 120 * s**3) / duration**2
    return Trajectory(times, pos, vel, acc)


def train_from_trajectory(demo: Trajectory, template: DmpPolicy) -> DmpPolicy:
    """Least-squares fit of the basis weights to a demonstration.

    The required forcing term is recovered from the demo's positions,
    velocities and accelerations via the transformation-system equation;
    the returned policy keeps the template's start, goal, duration and
    constants. Refitting a policy's own integrated output is a fixed
    point of this operation.
    """
    if demo.dof_count != template.dof_count:
        raise ValueError(
            f"demo has {demo.dof_count} DOFs, template {template.dof_count}"
        )
    period = demo.times[-1] - demo.times[0]
    if abs(period - template.duration) > 1e-6 * template.duration:
        raise ValueError(
            f"demo spans {period:g} s but the template duration is "
            f"{template.duration:g} s"
        )
    duration = template.duration
    features = forcing_features(template, demo.n_steps, demo.dt)
    z = duration * demo.velocities
    zdot = duration * demo.accelerations
    forcing = duration * zdot - template.alpha_z * (
        template.beta_z * (template.goal - demo.positions) - z
    )
    targets = forcing / template.forcing_gains()
    theta_t, _, rank, _ = np.linalg.lstsq(features, targets, rcond=None)
    if rank < template.basis_count:
        raise FittingError(
            f"degenerate demonstration: design matrix rank {rank} < "
            f"{template.basis_count} basis functions"
        )
    return template.with_theta(theta_t.T)


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """CSV rows: t, then D positions, D velocities, D accelerations."""
    dof_count = trajectory.dof_count
    header = (
        ["t"]
        + [f"pos_{d + 1}" for d in range(dof_count)]
        + [f"vel_{d + 1}" for d in range(dof_count)]
        + [f"acc_{d + 1}" for d in range(dof_count)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(trajectory.n_steps):
            row = np.concatenate(
                (
                    [trajectory.times[i]],
                    trajectory.positions[i],
                    trajectory.velocities[i],
                    trajectory.accelerations[i],
                )
            )
            writer.writerow([format(v, ".17g") for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dof_count = (len(header) - 1) // 3
        data = np.array([[float(v) for v in row] for row in reader])
    return Trajectory(
        times=data[:, 0],
        positions=data[:, 1 : 1 + dof_count],
        velocities=data[:, 1 + dof_count : 1 + 2 * dof_count],
        accelerations=data[:, 1 + 2 * dof_count :],
    )
