"""Benchmark the trilateration sweep backends (compiled vs numpy fallback).

Usage:
    python benchmarks/bench_kernels.py [--angles 200] [--mechanisms 200]

Times three workloads on identical inputs and verifies that both backends
produce bitwise-identical trajectories while timing them:
  1. a single four-bar sweep (the smallest real workload),
  2. sweeps over a pool of random generated mechanisms (datagen/eval shape),
  3. full validate() throughput, which is what node-retry synthesis pays.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from linksyn._kernels import reference
from linksyn.datagen import DataGenConfig, sample_random_mechanism
from linksyn.graph import MOTOR_NODE, MOTOR_PIVOT, MechanismGraph, NodeRecord, NodeType, build_graph
from linksyn.kinematics import check_dyadic_solvability, link_lengths, motor_angles, validate
from linksyn.seeds import make_rng

try:
    from linksyn._kernels import _sweep_cy
except ImportError:
    _sweep_cy = None


def fourbar() -> MechanismGraph:
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0),
        NodeRecord.joint(NodeType.REVOLUTE, (0.25, 0.0), edges_to=[0], index=1),
        NodeRecord.joint(NodeType.GROUNDED, (1.0, 0.0), index=2),
        NodeRecord.joint(NodeType.REVOLUTE, (0.75, 0.6), edges_to=[1, 2], index=3),
    ])


def kernel_args(graph: MechanismGraph, n_angles: int):
    order = check_dyadic_solvability(graph)
    lengths = link_lengths(graph)
    base = graph.positions()
    fixed = np.zeros(graph.n_valid, dtype=np.uint8)
    for g in graph.grounded_indices():
        fixed[g] = 1
    steps = np.array([list(s) for s in order.steps], dtype=np.int64).reshape(-1, 3)
    g1 = np.array([lengths[(min(i, k), max(i, k))] for k, i, j in order.steps])
    g2 = np.array([lengths[(min(j, k), max(j, k))] for k, i, j in order.steps])
    branch = np.array(order.branches)
    angles = motor_angles(n_angles)
    return (base, fixed, MOTOR_PIVOT, MOTOR_NODE, np.cos(angles), np.sin(angles),
            steps, g1, g2, branch)


def time_fn(fn, repeats: int) -> float:
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--angles", type=int, default=200)
    parser.add_argument("--mechanisms", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    backends = [("python", reference.sweep)]
    if _sweep_cy is not None:
        backends.append(("cython", _sweep_cy.sweep))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    config = DataGenConfig(count=1, min_nodes=4, max_nodes=8, seed=99)
    pool = [sample_random_mechanism(config, make_rng(99, i)) for i in range(args.mechanisms)]
    pool_args = [kernel_args(g, args.angles) for g in pool]
    fb_args = kernel_args(fourbar(), args.angles)

    if _sweep_cy is not None:
        mismatch = 0
        for ka in pool_args:
            p_ref = reference.sweep(*ka)
            p_cy = _sweep_cy.sweep(*ka)
            if p_ref[1] == 0 and not np.array_equal(p_ref[0], p_cy[0]):
                mismatch += 1
        print(f"bitwise agreement over {len(pool_args)} mechanisms: "
              f"{'OK' if mismatch == 0 else f'{mismatch} MISMATCHES'}")

    print(f"\n{'workload':<34}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    rows = [
        (f"four-bar sweep ({args.angles} angles)",
         [lambda fn=fn: fn(*fb_args) for _, fn in backends], args.repeats),
        (f"{args.mechanisms}-mechanism pool sweep",
         [lambda fn=fn: [fn(*ka) for ka in pool_args] for _, fn in backends], 3),
    ]
    for label, fns, repeats in rows:
        times = [time_fn(fn, repeats) for fn in fns]
        speedup = times[0] / times[-1] if len(times) > 1 else 1.0
        cells = "".join(f"{t * 1e3:>10.3f}ms" for t in times)
        print(f"{label:<34}{cells}{speedup:>9.1f}x")

    # validate() throughput picks up the active backend
    import linksyn._kernels as kernels
    start = time.perf_counter()
    for graph in pool:
        validate(graph, args.angles)
    per = (time.perf_counter() - start) / len(pool)
    print(f"\nvalidate() with active backend ({kernels.BACKEND}): {per * 1e3:.3f}ms per mechanism")


if __name__ == "__main__":
    main()
