"""Mechanism graph data model and its 24-wide feature-row encoding.

A planar 1-DoF linkage is stored as a fixed-length sequence of 20 joint
records. Each record encodes to one row of a 20x24 float matrix:

    col 0      validity flag            {0, 1}
    col 1      joint type               {1 grounded, 0 revolute, -1 pad}
    cols 2-3   normalized position      [-1, 1] each (pad rows use -1)
    cols 4-23  adjacency slots 0..19    {1 edge, 0 no edge, -1 pad}

Adjacency is strictly lower-triangular: slot j of row i describes the edge
{i, j} and is meaningful only for j < i, so every unordered pair appears
exactly once and each node references only its predecessors. Slot j >= i is
always pad, which leaves slot 19 structurally unused (19 possible
predecessors vs 20 slots).

Conventions baked into the model:
  - node 0 is the motor pivot (grounded), node 1 the motor endpoint
    (revolute) whose single edge goes to node 0; the crank radius is their
    initial distance,
  - valid nodes form a contiguous prefix; the tail is padding,
  - the end effector is the highest-index valid node,
  - invalid records are fully canonical: pad type, position (-1, -1), all
    adjacency slots pad.

Encoding and decoding are exact inverses on their respective legal domains.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import IllegalAlphabet, MalformedGraph, NonPrefixValidity, ParseError, PrefixTooShort

N_MAX = 20
ADJ_SLOTS = 20
ROW_DIM = 4 + ADJ_SLOTS
MOTOR_PIVOT = 0
MOTOR_NODE = 1

PAD = -1
PAD_POSITION = (-1.0, -1.0)


class NodeType(enum.IntEnum):
    """Joint classification; the int value is the encoded scalar."""

    GROUNDED = 1
    REVOLUTE = 0
    PAD = -1


@dataclass(frozen=True)
class NodeRecord:
    """One joint: validity, type, position and its lower-triangular adjacency row."""

    valid: bool
    node_type: NodeType
    position: tuple[float, float]
    adjacency: tuple[int, ...]  # length 20, values in {-1, 0, 1}

    @staticmethod
    def pad() -> "NodeRecord":
        return NodeRecord(False, NodeType.PAD, PAD_POSITION, (PAD,) * ADJ_SLOTS)

    @staticmethod
    def joint(node_type: NodeType, position: Sequence[float],
              edges_to: Iterable[int] = (), index: int | None = None) -> "NodeRecord":
        """Valid record with edges to the given predecessor indices.

        When `index` is given, slots >= index are padded; otherwise the
        highest edge target + 1 determines nothing and all non-edge slots
        are 0 up to ADJ_SLOTS (callers building real graphs should pass
        `index`).
        """
        row = [0] * ADJ_SLOTS
        for j in edges_to:
            row[j] = 1
        if index is not None:
            for j in range(index, ADJ_SLOTS):
                row[j] = PAD
        return NodeRecord(True, node_type, (float(position[0]), float(position[1])), tuple(row))


@dataclass(frozen=True)
class MechanismGraph:
    """Complete linkage specification: 20 node records, motor at indices 0/1."""

    nodes: tuple[NodeRecord, ...]

    @property
    def n_valid(self) -> int:
        count = 0
        for record in self.nodes:
            if not record.valid:
                break
            count += 1
        return count

    @property
    def end_effector_index(self) -> int:
        """Highest-index valid node; traces the coupler curve."""
        return self.n_valid - 1

    def edges(self) -> list[tuple[int, int]]:
        """Unordered edge pairs (j, i) with j < i, in row-major order."""
        pairs = []
        for i, record in enumerate(self.nodes):
            if not record.valid:
                break
            for j in range(min(i, ADJ_SLOTS)):
                if record.adjacency[j] == 1:
                    pairs.append((j, i))
        return pairs

    def grounded_indices(self) -> list[int]:
        return [i for i in range(self.n_valid) if self.nodes[i].node_type == NodeType.GROUNDED]

    def positions(self) -> np.ndarray:
        """(n_valid, 2) array of initial joint positions."""
        return np.array([self.nodes[i].position for i in range(self.n_valid)], dtype=np.float64)


def build_graph(records: Sequence[NodeRecord]) -> MechanismGraph:
    """Pad a record prefix to N_MAX and wrap it."""
    if len(records) > N_MAX:
        raise MalformedGraph(f"too many nodes ({len(records)} > {N_MAX})")
    nodes = tuple(records) + tuple(NodeRecord.pad() for _ in range(N_MAX - len(records)))
    return MechanismGraph(nodes)


def motor_stub(pivot: Sequence[float], endpoint: Sequence[float]) -> MechanismGraph:
    """Smallest legal graph: grounded pivot plus the revolving motor endpoint."""
    return build_graph([
        NodeRecord.joint(NodeType.GROUNDED, pivot, index=0),
        NodeRecord.joint(NodeType.REVOLUTE, endpoint, edges_to=[MOTOR_PIVOT], index=1),
    ])


def check_well_formed(graph: MechanismGraph) -> None:
    """Raise MalformedGraph on the first violated structural invariant."""
    if len(graph.nodes) != N_MAX:
        raise MalformedGraph(f"expected {N_MAX} node records, got {len(graph.nodes)}")

    seen_invalid = False
    for i, rec in enumerate(graph.nodes):
        if len(rec.adjacency) != ADJ_SLOTS:
            raise MalformedGraph("adjacency row must have 20 slots", i)
        if rec.valid:
            if seen_invalid:
                raise MalformedGraph("valid node after padding (validity must be a prefix)", i)
            if rec.node_type not in (NodeType.GROUNDED, NodeType.REVOLUTE):
                raise MalformedGraph("valid node must be grounded or revolute", i)
            x, y = rec.position
            if not (np.isfinite(x) and np.isfinite(y)):
                raise MalformedGraph("non-finite position", i)
            if not (-1.0 <= x <= 1.0 and -1.0 <= y <= 1.0):
                raise MalformedGraph(f"position {rec.position} outside [-1, 1]^2", i)
            for j, flag in enumerate(rec.adjacency):
                if j < i and flag not in (0, 1):
                    raise MalformedGraph(f"adjacency slot {j} must be 0 or 1", i)
                if j >= i and flag != PAD:
                    raise MalformedGraph(f"adjacency slot {j} >= node index must be pad", i)
        else:
            seen_invalid = True
            if rec.node_type != NodeType.PAD:
                raise MalformedGraph("invalid node must have pad type", i)
            if tuple(rec.position) != PAD_POSITION:
                raise MalformedGraph("invalid node must sit at the pad position (-1, -1)", i)
            if any(flag != PAD for flag in rec.adjacency):
                raise MalformedGraph("invalid node must have an all-pad adjacency row", i)

    if graph.n_valid < 2:
        raise MalformedGraph("graph needs at least the motor pair (2 valid nodes)")
    if graph.nodes[MOTOR_PIVOT].node_type != NodeType.GROUNDED:
        raise MalformedGraph("motor pivot must be grounded", MOTOR_PIVOT)
    if graph.nodes[MOTOR_NODE].node_type != NodeType.REVOLUTE:
        raise MalformedGraph("motor endpoint must be revolute", MOTOR_NODE)
    if graph.nodes[MOTOR_NODE].adjacency[0] != 1:
        raise MalformedGraph("motor endpoint must link to the pivot", MOTOR_NODE)


def encode_mechanism(graph: MechanismGraph) -> np.ndarray:
    """Encode a well-formed graph to its (20, 24) feature matrix."""
    check_well_formed(graph)
    matrix = np.empty((N_MAX, ROW_DIM), dtype=np.float64)
    for i, rec in enumerate(graph.nodes):
        matrix[i, 0] = 1.0 if rec.valid else 0.0
        matrix[i, 1] = float(rec.node_type)
        matrix[i, 2] = rec.position[0]
        matrix[i, 3] = rec.position[1]
        matrix[i, 4:] = rec.adjacency
    return matrix


def decode_feature_matrix(matrix: np.ndarray) -> MechanismGraph:
    """Decode a feature matrix, enforcing per-slot alphabets and prefix validity.

    Raises IllegalAlphabet with the offending (row, col) or NonPrefixValidity.
    Structural motor invariants are deliberately not enforced here (use
    check_well_formed); this keeps decoding total over everything the
    node sampler can emit.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (N_MAX, ROW_DIM):
        raise ParseError(f"feature matrix must be {N_MAX}x{ROW_DIM}, got {matrix.shape}")

    records: list[NodeRecord] = []
    seen_invalid = False
    for i in range(N_MAX):
        row = matrix[i]
        v = row[0]
        if v not in (0.0, 1.0):
            raise IllegalAlphabet(i, 0, v)
        if v == 1.0:
            if seen_invalid:
                raise NonPrefixValidity(i)
            if row[1] not in (0.0, 1.0):
                raise IllegalAlphabet(i, 1, row[1])
            for col in (2, 3):
                if not (np.isfinite(row[col]) and -1.0 <= row[col] <= 1.0):
                    raise IllegalAlphabet(i, col, row[col])
            adjacency = []
            for j in range(ADJ_SLOTS):
                flag = row[4 + j]
                legal = (0.0, 1.0) if j < i else (-1.0,)
                if flag not in legal:
                    raise IllegalAlphabet(i, 4 + j, flag)
                adjacency.append(int(flag))
            records.append(NodeRecord(True, NodeType(int(row[1])),
                                      (float(row[2]), float(row[3])), tuple(adjacency)))
        else:
            seen_invalid = True
            for col in range(1, ROW_DIM):
                if row[col] != -1.0:
                    raise IllegalAlphabet(i, col, row[col])
            records.append(NodeRecord.pad())
    return MechanismGraph(tuple(records))


def record_to_row(rec: NodeRecord) -> np.ndarray:
    """Single feature row (24,) for one node record."""
    row = np.empty(ROW_DIM, dtype=np.float64)
    row[0] = 1.0 if rec.valid else 0.0
    row[1] = float(rec.node_type)
    row[2] = rec.position[0]
    row[3] = rec.position[1]
    row[4:] = rec.adjacency
    return row


def record_from_row(row: np.ndarray, index: int) -> NodeRecord:
    """Inverse of record_to_row for the node at the given index.

    Enforces the same per-slot alphabets as decode_feature_matrix.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (ROW_DIM,):
        raise ParseError(f"feature row must have {ROW_DIM} entries, got {row.shape}")
    if row[0] not in (0.0, 1.0):
        raise IllegalAlphabet(index, 0, row[0])
    if row[0] == 0.0:
        for col in range(1, ROW_DIM):
            if row[col] != -1.0:
                raise IllegalAlphabet(index, col, row[col])
        return NodeRecord.pad()
    if row[1] not in (0.0, 1.0):
        raise IllegalAlphabet(index, 1, row[1])
    for col in (2, 3):
        if not (np.isfinite(row[col]) and -1.0 <= row[col] <= 1.0):
            raise IllegalAlphabet(index, col, row[col])
    adjacency = []
    for j in range(ADJ_SLOTS):
        flag = row[4 + j]
        legal = (0.0, 1.0) if j < index else (-1.0,)
        if flag not in legal:
            raise IllegalAlphabet(index, 4 + j, flag)
        adjacency.append(int(flag))
    return NodeRecord(True, NodeType(int(row[1])), (float(row[2]), float(row[3])), tuple(adjacency))


def truncate_to_prefix(graph: MechanismGraph, k: int) -> MechanismGraph:
    """Restrict to nodes 0..k-1; their rows only reference predecessors, so
    no edits are needed beyond padding the tail."""
    if k < 2:
        raise PrefixTooShort(f"prefix must keep the motor pair, got k={k}")
    check_well_formed(graph)
    if k > graph.n_valid:
        raise ValueError(f"k={k} exceeds the {graph.n_valid} valid nodes")
    return build_graph(list(graph.nodes[:k]))


# --- canonical mechanism file (one JSON object per line) ---

def graph_to_json_dict(graph: MechanismGraph, seed: int | None = None,
                       curve: np.ndarray | None = None) -> dict:
    """Mechanism file record; key order is fixed: nodes, seed, curve."""
    out: dict = {
        "nodes": [
            {
                "valid": rec.valid,
                "type": int(rec.node_type),
                "x": float(rec.position[0]),
                "y": float(rec.position[1]),
                "adj": [int(f) for f in rec.adjacency],
            }
            for rec in graph.nodes
        ]
    }
    out["seed"] = int(seed) if seed is not None else 0
    if curve is not None:
        out["curve"] = [[float(p[0]), float(p[1])] for p in np.asarray(curve)]
    return out


def graph_from_json_dict(obj: dict, line: int | None = None) -> tuple[MechanismGraph, int, np.ndarray | None]:
    """Parse a mechanism record; returns (graph, seed, curve-or-None)."""
    try:
        raw_nodes = obj["nodes"]
        records = []
        for entry in raw_nodes:
            records.append(NodeRecord(
                bool(entry["valid"]),
                NodeType(int(entry["type"])),
                (float(entry["x"]), float(entry["y"])),
                tuple(int(f) for f in entry["adj"]),
            ))
        seed = int(obj.get("seed", 0))
        curve = None
        if obj.get("curve") is not None:
            curve = np.array(obj["curve"], dtype=np.float64)
        graph = build_graph(records)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"bad mechanism record: {exc}", line=line) from exc
    check_well_formed(graph)
    return graph, seed, curve


def write_mechanism_file(path, graphs: Iterable[tuple[MechanismGraph, int, np.ndarray | None]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for graph, seed, curve in graphs:
            fh.write(json.dumps(graph_to_json_dict(graph, seed, curve)) + "\n")


def read_mechanism_file(path) -> list[tuple[MechanismGraph, int, np.ndarray | None]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from exc
            out.append(graph_from_json_dict(obj, line=lineno))
    if not out:
        raise ParseError("empty mechanism file")
    return out
