"""Topological solvability checking and forward kinematic simulation.

Validation is two sequential checks:

  1. Topology: the linkage must be assemblable dyad by dyad. Starting from
     the known set (grounded joints plus the motor endpoint), repeatedly
     find an unknown joint linked to exactly two known joints and solve it.
     An unknown joint with three or more known neighbors is overconstrained;
     a stall with unknowns remaining is a non-dyadic structure. Any link
     that is never consumed as one of a child's two parent constraints would
     leave an unenforced length (the simulation could not preserve it), so
     leftovers are rejected as overconstraints too. An accepted graph with
     N valid joints, F of them grounded, therefore has exactly
     1 + 2*(N - F - 1) links: the motor link plus two per solved joint.

  2. Kinematics: sweep the motor through n_angles uniform angles on
     [0, 2*pi) (theta=0 included, 2*pi excluded) and solve every joint by
     trilateration at each angle. cos(phi) outside [-1, 1] means the
     triangle inequality fails at that angle: a branch defect, the linkage
     locks. Values within 1e-12 outside the interval are clamped as a
     floating-point guard.

Link lengths are frozen from the initial joint positions stored in the
graph (the theta=0 configuration). All joints use the counter-clockwise
(positive) trilateration branch; parent pairs are ordered by ascending
index, which together make simulation fully deterministic.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BranchDefect, DegenerateBase, NonDyadic, Overconstrained
from .graph import MOTOR_NODE, MOTOR_PIVOT, MechanismGraph, check_well_formed

DEFAULT_N_ANGLES = 200


@dataclass(frozen=True)
class SolveOrder:
    """Trilateration schedule: per-step (child, parent_i, parent_j) with i < j."""

    steps: tuple[tuple[int, int, int], ...]
    fixed_set: frozenset[int]
    branches: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.branches:
            object.__setattr__(self, "branches", (1.0,) * len(self.steps))


@dataclass(frozen=True)
class Trajectory:
    """Joint positions over the motor cycle: positions[a, n] at angles[a]."""

    angles: np.ndarray     # (A,)
    positions: np.ndarray  # (A, n_valid, 2)

    @property
    def n_angles(self) -> int:
        return int(self.angles.shape[0])


@dataclass(frozen=True)
class ValidationReport:
    topology_ok: bool
    kinematics_ok: bool | None  # None = not attempted (topology already failed)
    failing_node: int | None = None
    failing_angle: float | None = None
    failing_angle_index: int | None = None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.topology_ok and self.kinematics_ok is True


def link_lengths(graph: MechanismGraph) -> dict[tuple[int, int], float]:
    """Length of every link, from the initial positions."""
    pos = graph.positions()
    return {
        (j, i): float(np.hypot(pos[i, 0] - pos[j, 0], pos[i, 1] - pos[j, 1]))
        for j, i in graph.edges()
    }


def check_dyadic_solvability(graph: MechanismGraph) -> SolveOrder:
    """Topological check; returns the solve order or raises.

    Raises Overconstrained(node) when a joint has more than two known
    neighbors (or carries a link no dyad consumes), NonDyadic when unknown
    joints remain but none has exactly two known neighbors.
    """
    check_well_formed(graph)
    n = graph.n_valid
    edges = graph.edges()
    neighbors: dict[int, list[int]] = {i: [] for i in range(n)}
    for j, i in edges:
        neighbors[i].append(j)
        neighbors[j].append(i)

    known = set(graph.grounded_indices())
    known.add(MOTOR_NODE)
    unknown = [i for i in range(n) if i not in known]
    consumed: set[tuple[int, int]] = {(MOTOR_PIVOT, MOTOR_NODE)}

    steps: list[tuple[int, int, int]] = []
    while unknown:
        counts = {u: sorted(v for v in neighbors[u] if v in known) for u in unknown}
        for u in unknown:
            if len(counts[u]) > 2:
                raise Overconstrained(u, f"node {u} has {len(counts[u])} known neighbors")
        eligible = [u for u in unknown if len(counts[u]) == 2]
        if not eligible:
            raise NonDyadic(tuple(unknown))
        child = min(eligible)
        pi, pj = counts[child]
        steps.append((child, pi, pj))
        consumed.add((min(child, pi), max(child, pi)))
        consumed.add((min(child, pj), max(child, pj)))
        known.add(child)
        unknown.remove(child)

    leftovers = [e for e in edges if e not in consumed]
    if leftovers:
        j, i = leftovers[0]
        raise Overconstrained(
            i, f"link {{{j},{i}}} is never consumed by a dyad; its length would be unconstrained")

    fixed = frozenset(graph.grounded_indices()) | {MOTOR_NODE}
    return SolveOrder(steps=tuple(steps), fixed_set=fixed)


def solve_position(xi, xj, g_ik: float, g_jk: float, branch: float = 1.0) -> tuple[float, float]:
    """Locate a joint at distances (g_ik, g_jk) from known points (xi, xj).

    cos(phi) = (l^2 + g_ik^2 - g_jk^2) / (2 * l * g_ik) with l = |xj - xi|;
    the result is xi plus the direction to xj rotated by branch*phi and
    scaled to g_ik. Raises BranchDefect when cos(phi) is outside [-1, 1]
    (beyond the 1e-12 clamp guard) and DegenerateBase when l < 1e-9.
    """
    dx = float(xj[0]) - float(xi[0])
    dy = float(xj[1]) - float(xi[1])
    l2 = dx * dx + dy * dy
    length = np.sqrt(l2)
    if length < _kernels.DEGENERATE_TOL:
        raise DegenerateBase(-1)
    g1sq = g_ik * g_ik
    g2sq = g_jk * g_jk
    c = (l2 + g1sq - g2sq) / (2.0 * length * g_ik)
    if not (-1.0 - _kernels.COS_SLACK <= c <= 1.0 + _kernels.COS_SLACK):
        raise BranchDefect(-1, cos_phi=float(c))
    c = min(1.0, max(-1.0, c))
    sphi = branch * np.sqrt(1.0 - c * c)
    ux = dx / length
    uy = dy / length
    return (float(xi[0]) + g_ik * (c * ux - sphi * uy),
            float(xi[1]) + g_ik * (sphi * ux + c * uy))


def motor_angles(n_angles: int) -> np.ndarray:
    """Uniform half-open grid on [0, 2*pi)."""
    if n_angles < 1:
        raise ValueError(f"need at least one motor angle, got {n_angles}")
    return 2.0 * np.pi * np.arange(n_angles, dtype=np.float64) / n_angles


def simulate(graph: MechanismGraph, n_angles: int = DEFAULT_N_ANGLES,
             order: SolveOrder | None = None) -> Trajectory:
    """Full forward simulation over the motor cycle.

    Raises BranchDefect/DegenerateBase identifying the locking joint and the
    first motor angle at which it fails (scanning angles in grid order).
    """
    if order is None:
        order = check_dyadic_solvability(graph)
    lengths = link_lengths(graph)

    n = graph.n_valid
    base = graph.positions()
    fixed_mask = np.zeros(n, dtype=np.uint8)
    for g in graph.grounded_indices():
        fixed_mask[g] = 1

    s_count = len(order.steps)
    steps = np.zeros((s_count, 3), dtype=np.int64)
    g1 = np.zeros(s_count, dtype=np.float64)
    g2 = np.zeros(s_count, dtype=np.float64)
    branch = np.array(order.branches, dtype=np.float64)
    for s, (k, i, j) in enumerate(order.steps):
        steps[s] = (k, i, j)
        g1[s] = lengths[(min(i, k), max(i, k))]
        g2[s] = lengths[(min(j, k), max(j, k))]

    angles = motor_angles(n_angles)
    cos_t = np.cos(angles)
    sin_t = np.sin(angles)

    pos, status, fail_step, fail_angle = _kernels.sweep(
        base, fixed_mask, MOTOR_PIVOT, MOTOR_NODE, cos_t, sin_t, steps, g1, g2, branch)

    if status == _kernels.STATUS_BRANCH_DEFECT:
        raise BranchDefect(int(steps[fail_step, 0]), fail_angle, float(angles[fail_angle]))
    if status == _kernels.STATUS_DEGENERATE:
        raise DegenerateBase(int(steps[fail_step, 0]), fail_angle, float(angles[fail_angle]))
    return Trajectory(angles=angles, positions=pos)


def trace_coupler_curve(graph: MechanismGraph, n_angles: int = DEFAULT_N_ANGLES,
                        order: SolveOrder | None = None) -> np.ndarray:
    """End-effector path over one motor revolution: (n_angles, 2)."""
    trajectory = simulate(graph, n_angles, order=order)
    return np.ascontiguousarray(trajectory.positions[:, graph.end_effector_index, :])


def validate(graph: MechanismGraph, n_angles: int = DEFAULT_N_ANGLES) -> ValidationReport:
    """Run both checks in order; failures are report states, not exceptions."""
    try:
        order = check_dyadic_solvability(graph)
    except Overconstrained as exc:
        return ValidationReport(False, None, failing_node=exc.node, reason="overconstrained")
    except NonDyadic as exc:
        node = exc.remaining[0] if exc.remaining else None
        return ValidationReport(False, None, failing_node=node, reason="non-dyadic")

    try:
        simulate(graph, n_angles, order=order)
    except BranchDefect as exc:
        return ValidationReport(True, False, failing_node=exc.node,
                                failing_angle=exc.theta, failing_angle_index=exc.angle_index,
                                reason="branch-defect")
    except DegenerateBase as exc:
        return ValidationReport(True, False, failing_node=exc.node,
                                failing_angle=exc.theta, failing_angle_index=exc.angle_index,
                                reason="degenerate-base")
    return ValidationReport(True, True)


def trajectory_to_csv(trajectory: Trajectory) -> str:
    """CSV export with header theta,node,x,y; rows are angle-major."""
    buf = io.StringIO()
    buf.write("theta,node,x,y\n")
    a_count, n_count, _ = trajectory.positions.shape
    for a in range(a_count):
        theta = repr(float(trajectory.angles[a]))
        for n in range(n_count):
            x = repr(float(trajectory.positions[a, n, 0]))
            y = repr(float(trajectory.positions[a, n, 1]))
            buf.write(f"{theta},{n},{x},{y}\n")
    return buf.getvalue()
