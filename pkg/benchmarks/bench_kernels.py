#!/usr/bin/env python3
"""Benchmark the compiled rollout kernels against the pure-numpy fallback.

Times the two hot paths on the benchmark task's shapes: a K-rollout batch
(one optimizer update's worth of simulation) and a single noise-free
rollout. Run as `python benchmarks/bench_kernels.py`.
"""

import argparse
import time

import numpy as np

from pwaopt import _kernels_py
from pwaopt.backend import has_compiled_kernels
from pwaopt.dmp import DmpPolicy, forcing_features
from pwaopt.harness import ExperimentConfig, build_problem


def build_workload(trials=20, dof_count=10, basis_count=5):
    config = ExperimentConfig(
        algorithm="PI2CMA", trials_per_update=trials, h=10.0,
        base_noise_level=100.0, dof_count=dof_count, basis_count=basis_count,
    )
    arm, task, policy = build_problem(config)
    n_steps = int(round(config.duration / config.dt)) + 1
    rng = np.random.default_rng(0)
    offsets = rng.standard_normal((trials, n_steps, dof_count, basis_count)) * 100.0
    return {
        "theta": np.ascontiguousarray(policy.theta),
        "offsets": np.ascontiguousarray(offsets),
        "features": np.ascontiguousarray(forcing_features(policy, n_steps, config.dt)),
        "start": policy.start,
        "goal": policy.goal,
        "gains": policy.forcing_gains(),
        "alpha_z": policy.alpha_z,
        "beta_z": policy.beta_z,
        "duration": config.duration,
        "dt": config.dt,
        "link_lengths": arm.link_lengths,
        "viapoint": task.viapoint,
        "viapoint_step": int(round(config.viapoint_time / config.dt)),
        "dof_weights": task.dof_weights,
        "viapoint_weight": task.viapoint_weight,
    }


def time_call(fn, args, repeats):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--trials", type=int, default=20, help="rollouts per batch")
    args = parser.parse_args()

    w = build_workload(trials=args.trials)
    batch_args = tuple(w.values())
    single_args = (
        w["theta"], w["offsets"][0], w["features"], w["start"], w["goal"],
        w["gains"], w["alpha_z"], w["beta_z"], w["duration"], w["dt"],
    )

    impls = [("python", _kernels_py)]
    if has_compiled_kernels():
        from pwaopt import _kernels

        impls.append(("compiled", _kernels))
    else:
        print("compiled kernels not available; timing the fallback only")

    results = {}
    k, n, d, b = w["offsets"].shape
    print(f"workload: K={k} rollouts x N={n} steps x D={d} DOFs x B={b} basis functions")
    for name, impl in impls:
        batch = time_call(impl.viapoint_rollout_batch, batch_args, args.repeats)
        single = time_call(impl.dmp_rollout, single_args, args.repeats * 5)
        results[name] = (batch, single)
        print(
            f"{name:9s} batch rollout+cost: {batch * 1e3:8.3f} ms   "
            f"single rollout: {single * 1e6:8.1f} us"
        )
    if len(results) == 2:
        py, cy = results["python"], results["compiled"]
        print(
            f"speedup   batch: {py[0] / cy[0]:5.1f}x   single: {py[1] / cy[1]:5.1f}x"
        )
        ref = _kernels_py.viapoint_rollout_batch(*batch_args)
        from pwaopt import _kernels

        got = _kernels.viapoint_rollout_batch(*batch_args)
        err = max(
            float(np.abs(np.asarray(a) - np.asarray(r)).max()) for a, r in zip(got, ref)
        )
        print(f"agreement max |diff| across outputs: {err:.3e}")


if __name__ == "__main__":
    main()
