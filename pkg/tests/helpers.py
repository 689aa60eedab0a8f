"""Shared graph builders, geometry oracles, and stub models for the tests."""
from __future__ import annotations

import numpy as np

from linksyn.diffusion import ConditioningContext, DenoiserOutput
from linksyn.graph import MechanismGraph, NodeRecord, NodeType, build_graph, record_to_row


# --- canonical fixtures -----------------------------------------------------

def fourbar() -> MechanismGraph:
    """Valid four-bar inside the unit box: grounded 0/2, motor 1, coupler 3."""
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0),
        NodeRecord.joint(NodeType.REVOLUTE, (0.25, 0.0), edges_to=[0], index=1),
        NodeRecord.joint(NodeType.GROUNDED, (1.0, 0.0), index=2),
        NodeRecord.joint(NodeType.REVOLUTE, (0.75, 0.6), edges_to=[1, 2], index=3),
    ])


def overconstrained_fourbar() -> MechanismGraph:
    """Node 3 tied to three already-known joints."""
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0),
        NodeRecord.joint(NodeType.REVOLUTE, (0.25, 0.0), edges_to=[0], index=1),
        NodeRecord.joint(NodeType.GROUNDED, (1.0, 0.0), index=2),
        NodeRecord.joint(NodeType.REVOLUTE, (0.75, 0.6), edges_to=[0, 1, 2], index=3),
    ])


def nondyadic_graph() -> MechanismGraph:
    """Node 3 has a single link: never exactly two known neighbors."""
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0),
        NodeRecord.joint(NodeType.REVOLUTE, (0.25, 0.0), edges_to=[0], index=1),
        NodeRecord.joint(NodeType.GROUNDED, (1.0, 0.0), index=2),
        NodeRecord.joint(NodeType.REVOLUTE, (0.75, 0.6), edges_to=[1], index=3),
    ])


def locking_fourbar() -> MechanismGraph:
    """Crank radius 0.5, coupler/rocker links 0.3 each: |x1 - x2| reaches 1.5
    but the links only span 0.6, so the triangle fails partway through the
    cycle. Node 3 starts on the positive branch of its parents (1, 2)."""
    x1 = np.array([0.5, 0.0])
    x2 = np.array([1.0, 0.0])
    d = np.linalg.norm(x2 - x1)
    a = d / 2.0
    h = np.sqrt(0.3 ** 2 - a ** 2)
    n3 = (x1[0] + a, h)
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0),
        NodeRecord.joint(NodeType.REVOLUTE, (0.5, 0.0), edges_to=[0], index=1),
        NodeRecord.joint(NodeType.GROUNDED, (1.0, 0.0), index=2),
        NodeRecord.joint(NodeType.REVOLUTE, n3, edges_to=[1, 2], index=3),
    ])


def motor_stub_graph(pivot=(0.0, 0.0), endpoint=(0.5, 0.0)) -> MechanismGraph:
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, pivot, index=0),
        NodeRecord.joint(NodeType.REVOLUTE, endpoint, edges_to=[0], index=1),
    ])


# --- independent geometric oracle -------------------------------------------

def circle_intersection_oracle(pi, pj, r1, r2, branch=1.0):
    """Two-circle intersection via the perpendicular-offset construction
    (distinct formulas from the production law-of-cosines path).

    Returns the intersection point on the requested branch, or None when the
    circles do not intersect.
    """
    pi = np.asarray(pi, dtype=np.float64)
    pj = np.asarray(pj, dtype=np.float64)
    d = np.linalg.norm(pj - pi)
    if d < 1e-12:
        return None
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h_sq = r1 * r1 - a * a
    if h_sq < -1e-9:
        return None
    h = np.sqrt(max(h_sq, 0.0))
    u = (pj - pi) / d
    mid = pi + a * u
    perp = np.array([-u[1], u[0]])
    return mid + branch * h * perp


def oracle_check_trajectory(graph, trajectory, order, lengths, tol=1e-9):
    """Every solved joint must match the oracle at every angle."""
    pos = trajectory.positions
    worst = 0.0
    for s, (k, i, j) in enumerate(order.steps):
        g1 = lengths[(min(i, k), max(i, k))]
        g2 = lengths[(min(j, k), max(j, k))]
        for a in range(pos.shape[0]):
            expected = circle_intersection_oracle(pos[a, i], pos[a, j], g1, g2, order.branches[s])
            assert expected is not None, f"oracle found no intersection at step {s}, angle {a}"
            worst = max(worst, float(np.max(np.abs(expected - pos[a, k]))))
    assert worst < tol, f"oracle deviation {worst:.3e} exceeds {tol}"
    return worst


# --- stub generative models ---------------------------------------------------

class _StubBase:
    """Minimal model protocol: embed_curve / make_context / sample_node_from_context."""

    n_max = 20

    def embed_curve(self, curve):
        pts = curve.points if hasattr(curve, "points") else np.asarray(curve)
        return np.asarray(pts, dtype=np.float64).reshape(-1)[:4]

    def make_context(self, prefix_rows, t, curve_embedding):
        return ConditioningContext(curve_embedding=np.asarray(curve_embedding),
                                   summary=np.zeros(1), t=t, onehot=np.zeros(1),
                                   film=(np.ones((1, 1)), np.zeros((1, 1))))


def _stop_record():
    return NodeRecord.pad()


def _raw_for(record: NodeRecord) -> DenoiserOutput:
    row = record_to_row(record)
    return DenoiserOutput(20.0 if record.valid else -20.0,
                          20.0 if record.node_type == NodeType.GROUNDED else -20.0,
                          row[2:4].copy(), row[4:].copy())


class ReplayModel(_StubBase):
    """Replays a fixed graph's rows, then emits the stop row. Always valid."""

    def __init__(self, graph: MechanismGraph):
        self.records = [graph.nodes[i] for i in range(graph.n_valid)]

    def sample_node_from_context(self, ctx, rng):
        rng.standard_normal(1)  # consume like a real sampler would
        if ctx.t < len(self.records):
            rec = self.records[ctx.t]
        else:
            rec = _stop_record()
        return rec, _raw_for(rec)


class CurveKeyedReplayModel(_StubBase):
    """Replays the true mechanism of whichever dataset record is conditioning
    the generation (keyed by curve bytes). The oracle 'model' for evaluation."""

    def __init__(self, records):
        self.by_curve = {np.asarray(r.curve).tobytes(): r.graph for r in records}

    def embed_curve(self, curve):
        pts = curve.points if hasattr(curve, "points") else np.asarray(curve)
        return np.asarray(pts, dtype=np.float64).reshape(-1)

    def sample_node_from_context(self, ctx, rng):
        rng.standard_normal(1)
        graph = self.by_curve[np.asarray(ctx.curve_embedding).tobytes()]
        if ctx.t < graph.n_valid:
            rec = graph.nodes[ctx.t]
        else:
            rec = _stop_record()
        return rec, _raw_for(rec)


class ScriptedModel(_StubBase):
    """Replays a graph but emits a topology-breaking row the first
    `fail_counts[t]` times node t is requested (an extra link into the known
    set makes the prefix overconstrained)."""

    def __init__(self, graph: MechanismGraph, fail_counts: dict[int, int]):
        self.records = [graph.nodes[i] for i in range(graph.n_valid)]
        self.remaining = dict(fail_counts)

    def _bad_record(self, t: int) -> NodeRecord:
        # one link only: the node can never gain two known neighbors, so the
        # prefix is non-dyadic no matter what else happens
        return NodeRecord.joint(NodeType.REVOLUTE, (0.1, 0.1), edges_to=[0], index=t)

    def sample_node_from_context(self, ctx, rng):
        rng.standard_normal(1)
        t = ctx.t
        if self.remaining.get(t, 0) > 0:
            self.remaining[t] -= 1
            rec = self._bad_record(t)
        elif t < len(self.records):
            rec = self.records[t]
        else:
            rec = _stop_record()
        return rec, _raw_for(rec)


class AlwaysInvalidModel(_StubBase):
    """Every node from index 2 on is single-linked (non-dyadic); resampling
    never helps because the stub is deterministic in structure."""

    def sample_node_from_context(self, ctx, rng):
        rng.standard_normal(1)
        t = ctx.t
        if t == 0:
            rec = NodeRecord.joint(NodeType.GROUNDED, (0.0, 0.0), index=0)
        elif t == 1:
            rec = NodeRecord.joint(NodeType.REVOLUTE, (0.5, 0.0), edges_to=[0], index=1)
        else:
            rec = NodeRecord.joint(NodeType.REVOLUTE, (0.2, 0.2), edges_to=[0], index=t)
        return rec, _raw_for(rec)
