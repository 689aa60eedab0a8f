"""Backend parity: the Cython sweep must be bitwise-identical to the numpy
reference (both use only IEEE-exact operations in mirrored order)."""
import numpy as np
import pytest

from helpers import fourbar, locking_fourbar

from linksyn import _kernels
from linksyn._kernels import reference
from linksyn.datagen import DataGenConfig, sample_random_mechanism
from linksyn.graph import MOTOR_NODE, MOTOR_PIVOT
from linksyn.kinematics import check_dyadic_solvability, link_lengths, motor_angles
from linksyn.seeds import make_rng

cython_kernel = pytest.importorskip(
    "linksyn._kernels._sweep_cy", reason="compiled kernel not built")


def kernel_args(graph, n_angles=200):
    order = check_dyadic_solvability(graph)
    lengths = link_lengths(graph)
    base = graph.positions()
    fixed = np.zeros(graph.n_valid, dtype=np.uint8)
    for g in graph.grounded_indices():
        fixed[g] = 1
    steps = np.array([list(s) for s in order.steps], dtype=np.int64).reshape(-1, 3)
    g1 = np.array([lengths[(min(i, k), max(i, k))] for k, i, j in order.steps])
    g2 = np.array([lengths[(min(j, k), max(j, k))] for k, i, j in order.steps])
    branch = np.array(order.branches, dtype=np.float64)
    angles = motor_angles(n_angles)
    return (base, fixed, MOTOR_PIVOT, MOTOR_NODE, np.cos(angles), np.sin(angles),
            steps, g1, g2, branch)


def test_backends_bitwise_identical_on_success():
    rng_graphs = [fourbar()]
    config = DataGenConfig(count=10, min_nodes=4, max_nodes=8, seed=77)
    rng_graphs += [sample_random_mechanism(config, make_rng(77, i)) for i in range(10)]
    for graph in rng_graphs:
        args = kernel_args(graph)
        p_ref, s_ref, fs_ref, fa_ref = reference.sweep(*args)
        p_cy, s_cy, fs_cy, fa_cy = cython_kernel.sweep(*args)
        assert (s_ref, fs_ref, fa_ref) == (0, -1, -1)
        assert (s_cy, fs_cy, fa_cy) == (0, -1, -1)
        assert np.array_equal(p_ref, p_cy)  # bitwise


def test_backends_agree_on_failures():
    args = kernel_args(locking_fourbar())
    _, s_ref, fs_ref, fa_ref = reference.sweep(*args)
    _, s_cy, fs_cy, fa_cy = cython_kernel.sweep(*args)
    assert s_ref == reference.STATUS_BRANCH_DEFECT
    assert (s_ref, fs_ref, fa_ref) == (s_cy, fs_cy, fa_cy)


def test_backends_agree_on_degenerate_base():
    # parents forced to coincide at theta = pi: pivot at origin, second
    # grounded joint on the crank circle
    base = np.array([[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [0.0, 0.5]])
    fixed = np.array([1, 0, 1, 0], dtype=np.uint8)
    steps = np.array([[3, 1, 2]], dtype=np.int64)
    g1 = np.array([np.hypot(0.5, 0.5)])
    g2 = np.array([np.hypot(0.5, 0.5)])
    branch = np.array([1.0])
    angles = motor_angles(8)  # includes pi where joints 1 and 2 coincide
    args = (base, fixed, 0, 1, np.cos(angles), np.sin(angles), steps, g1, g2, branch)
    _, s_ref, fs_ref, fa_ref = reference.sweep(*args)
    _, s_cy, fs_cy, fa_cy = cython_kernel.sweep(*args)
    assert s_ref == reference.STATUS_DEGENERATE
    assert fa_ref == 4  # angle index of theta = pi
    assert (s_ref, fs_ref, fa_ref) == (s_cy, fs_cy, fa_cy)


def test_empty_step_list():
    args = kernel_args(fourbar())
    empty = (args[0], args[1], args[2], args[3], args[4], args[5],
             np.zeros((0, 3), dtype=np.int64), np.zeros(0), np.zeros(0), np.zeros(0))
    p_ref, s_ref, _, _ = reference.sweep(*empty)
    p_cy, s_cy, _, _ = cython_kernel.sweep(*empty)
    assert s_ref == s_cy == 0
    assert np.array_equal(p_ref[:, :2], p_cy[:, :2])


def test_selected_backend_exposed():
    assert _kernels.BACKEND in ("python", "cython")
