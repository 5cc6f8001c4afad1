"""Pure-numpy implementations of the hot rollout kernels.

These mirror the compiled extension in `_kernels.pyx`; the backend module
picks one implementation at import time. Signatures and semantics must
stay in lockstep with the extension.
"""

from __future__ import annotations

import numpy as np

from .arm import viapoint_step_costs

COMPILED = False


def dmp_rollout(theta, offsets, features, start, goal, gains, alpha_z, beta_z, duration, dt):
    """Euler-integrate one DMP rollout.

    theta (D, B) base weights; offsets (N, D, B) per-timestep additions;
    features (N, B) phase-scaled normalized basis activations, so the
    forcing term is gains[d] * features[i] . (theta[d] + offsets[i, d]).
    Returns (positions, velocities, accelerations), each (N, D).
    """
    n_steps = features.shape[0]
    dof_count = theta.shape[0]
    base_forcing = features @ theta.T
    offset_forcing = np.einsum("ndb,nb->nd", offsets, features)

    pos = np.empty((n_steps, dof_count))
    vel = np.empty((n_steps, dof_count))
    acc = np.empty((n_steps, dof_count))
    y = start.astype(float).copy()
    z = np.zeros(dof_count)
    for i in range(n_steps):
        f = gains * (base_forcing[i] + offset_forcing[i])
        zdot = (alpha_z * (beta_z * (goal - y) - z) + f) / duration
        pos[i] = y
        vel[i] = z / duration
        acc[i] = zdot / duration
        y = y + dt * (z / duration)
        z = z + dt * zdot
    return pos, vel, acc


def viapoint_rollout_batch(
    theta,
    offsets,
    features,
    start,
    goal,
    gains,
    alpha_z,
    beta_z,
    duration,
    dt,
    link_lengths,
    viapoint,
    viapoint_step,
    dof_weights,
    viapoint_weight,
):
    """Integrate K exploring rollouts and score them on the viapoint task.

    offsets has shape (K, N, D, B). Returns (positions, velocities,
    accelerations) of shape (K, N, D) and step costs of shape (K, N).
    """
    n_rollouts, n_steps = offsets.shape[0], features.shape[0]
    dof_count = theta.shape[0]
    base_forcing = features @ theta.T
    offset_forcing = np.einsum("kndb,nb->knd", offsets, features)

    pos = np.empty((n_rollouts, n_steps, dof_count))
    vel = np.empty((n_rollouts, n_steps, dof_count))
    acc = np.empty((n_rollouts, n_steps, dof_count))
    y = np.broadcast_to(start, (n_rollouts, dof_count)).astype(float).copy()
    z = np.zeros((n_rollouts, dof_count))
    for i in range(n_steps):
        f = gains * (base_forcing[i] + offset_forcing[:, i])
        zdot = (alpha_z * (beta_z * (goal - y) - z) + f) / duration
        pos[:, i] = y
        vel[:, i] = z / duration
        acc[:, i] = zdot / duration
        y = y + dt * (z / duration)
        z = z + dt * zdot

    costs = np.empty((n_rollouts, n_steps))
    for k in range(n_rollouts):
        costs[k] = viapoint_step_costs(
            pos[k], acc[k], link_lengths, viapoint, viapoint_step, dof_weights,
            viapoint_weight,
        )
    return pos, vel, acc, costs
