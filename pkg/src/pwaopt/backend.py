"""Rollout-kernel backend selection.

The compiled extension (`pwaopt._kernels`, built from Cython) is used when
importable; otherwise the pure-numpy fallback takes over. Set the
environment variable ``PWAOPT_PURE_PYTHON=1`` to force the fallback.
Results agree across backends to floating-point rounding, but bitwise
reproducibility is only guaranteed within one backend.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
if not os.environ.get("PWAOPT_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled


def backend_name() -> str:
    return "compiled" if _impl is not _kernels_py else "python"


def has_compiled_kernels() -> bool:
    return _impl is not _kernels_py


def _c(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=float)


def dmp_rollout(theta, offsets, features, start, goal, gains, alpha_z, beta_z, duration, dt):
    pos, vel, acc = _impl.dmp_rollout(
        _c(theta),
        _c(offsets),
        _c(features),
        _c(start),
        _c(goal),
        _c(gains),
        float(alpha_z),
        float(beta_z),
        float(duration),
        float(dt),
    )
    return np.asarray(pos), np.asarray(vel), np.asarray(acc)


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
    viapoint_weight=1.0,
):
    pos, vel, acc, costs = _impl.viapoint_rollout_batch(
        _c(theta),
        _c(offsets),
        _c(features),
        _c(start),
        _c(goal),
        _c(gains),
        float(alpha_z),
        float(beta_z),
        float(duration),
        float(dt),
        _c(link_lengths),
        _c(viapoint),
        int(viapoint_step),
        _c(dof_weights),
        float(viapoint_weight),
    )
    return np.asarray(pos), np.asarray(vel), np.asarray(acc), np.asarray(costs)
