# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernels; see `_kernels_py` for the reference semantics."""

from libc.math cimport cos, sin

import numpy as np

COMPILED = True


def dmp_rollout(
    double[:, ::1] theta,
    double[:, :, ::1] offsets,
    double[:, ::1] features,
    double[::1] start,
    double[::1] goal,
    double[::1] gains,
    double alpha_z,
    double beta_z,
    double duration,
    double dt,
):
    cdef Py_ssize_t n_steps = features.shape[0]
    cdef Py_ssize_t n_basis = features.shape[1]
    cdef Py_ssize_t n_dofs = theta.shape[0]
    pos_arr = np.empty((n_steps, n_dofs))
    vel_arr = np.empty((n_steps, n_dofs))
    acc_arr = np.empty((n_steps, n_dofs))
    cdef double[:, ::1] pos = pos_arr
    cdef double[:, ::1] vel = vel_arr
    cdef double[:, ::1] acc = acc_arr
    y_arr = np.array(start, dtype=float)
    z_arr = np.zeros(n_dofs)
    cdef double[::1] y = y_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t i, d, b
    cdef double f, zdot, s

    for i in range(n_steps):
        for d in range(n_dofs):
            s = 0.0
            for b in range(n_basis):
                s += (theta[d, b] + offsets[i, d, b]) * features[i, b]
            f = gains[d] * s
            zdot = (alpha_z * (beta_z * (goal[d] - y[d]) - z[d]) + f) / duration
            pos[i, d] = y[d]
            vel[i, d] = z[d] / duration
            acc[i, d] = zdot / duration
            y[d] = y[d] + dt * (z[d] / duration)
            z[d] = z[d] + dt * zdot
    return pos_arr, vel_arr, acc_arr


def viapoint_rollout_batch(
    double[:, ::1] theta,
    double[:, :, :, ::1] offsets,
    double[:, ::1] features,
    double[::1] start,
    double[::1] goal,
    double[::1] gains,
    double alpha_z,
    double beta_z,
    double duration,
    double dt,
    double[::1] link_lengths,
    double[::1] viapoint,
    Py_ssize_t viapoint_step,
    double[::1] dof_weights,
    double viapoint_weight,
):
    cdef Py_ssize_t n_rollouts = offsets.shape[0]
    cdef Py_ssize_t n_steps = features.shape[0]
    cdef Py_ssize_t n_basis = features.shape[1]
    cdef Py_ssize_t n_dofs = theta.shape[0]
    pos_arr = np.empty((n_rollouts, n_steps, n_dofs))
    vel_arr = np.empty((n_rollouts, n_steps, n_dofs))
    acc_arr = np.empty((n_rollouts, n_steps, n_dofs))
    cost_arr = np.empty((n_rollouts, n_steps))
    cdef double[:, :, ::1] pos = pos_arr
    cdef double[:, :, ::1] vel = vel_arr
    cdef double[:, :, ::1] acc = acc_arr
    cdef double[:, ::1] costs = cost_arr
    y_arr = np.empty(n_dofs)
    z_arr = np.empty(n_dofs)
    cdef double[::1] y = y_arr
    cdef double[::1] z = z_arr
    cdef Py_ssize_t k, i, d, b
    cdef double f, zdot, s, gamma, ex, ey, acc_term, dx, dy
    cdef double weight_sum = 0.0

    for d in range(n_dofs):
        weight_sum += dof_weights[d]

    for k in range(n_rollouts):
        for d in range(n_dofs):
            y[d] = start[d]
            z[d] = 0.0
        for i in range(n_steps):
            for d in range(n_dofs):
                s = 0.0
                for b in range(n_basis):
                    s += (theta[d, b] + offsets[k, i, d, b]) * features[i, b]
                f = gains[d] * s
                zdot = (alpha_z * (beta_z * (goal[d] - y[d]) - z[d]) + f) / duration
                pos[k, i, d] = y[d]
                vel[k, i, d] = z[d] / duration
                acc[k, i, d] = zdot / duration
                y[d] = y[d] + dt * (z[d] / duration)
                z[d] = z[d] + dt * zdot
            acc_term = 0.0
            for d in range(n_dofs):
                acc_term += dof_weights[d] * acc[k, i, d] * acc[k, i, d]
            costs[k, i] = acc_term / weight_sum
        gamma = 0.0
        ex = 0.0
        ey = 0.0
        for d in range(n_dofs):
            gamma += pos[k, viapoint_step, d]
            ex += link_lengths[d] * cos(gamma)
            ey += link_lengths[d] * sin(gamma)
        dx = ex - viapoint[0]
        dy = ey - viapoint[1]
        costs[k, viapoint_step] += viapoint_weight * (dx * dx + dy * dy)
    return pos_arr, vel_arr, acc_arr, cost_arr
