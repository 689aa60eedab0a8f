"""Random valid-mechanism generation and dataset serialization.

Mechanisms are grown the same way they are solved: start from the motor
pair, then append joints one at a time. Each new revolute joint picks two
distinct existing joints as parents and a position inside the lens where
both candidate links stay shorter than the length cap; grounded extras drop
anywhere in the working area. Every appended joint must leave the partial
linkage fully valid (topology + a complete branch-defect-free motor sweep),
so every prefix of an emitted mechanism is itself a valid mechanism.

Sampled positions are mirrored onto the counter-clockwise side of their
parent pair when needed, because simulation always takes the positive
trilateration branch: the stored initial position must be the one the
sweep reproduces at theta = 0.

Dataset files are line-delimited JSON, one record per line with fields
`seed`, `nodes`, `curve` (the normalized end-effector trace). Generation is
embarrassingly parallel: record i draws from a stream derived from
(seed, i), and lines are written in index order, so output bytes do not
depend on the worker count.
"""
from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .curves import Curve, normalize_curve
from .errors import GenerationExhausted, InvariantViolation, ParseError
from .graph import (MechanismGraph, NodeRecord, NodeType, build_graph,
                    graph_from_json_dict, graph_to_json_dict)
from .kinematics import trace_coupler_curve, validate
from .seeds import DOMAIN_DATAGEN, derive_int, make_rng

MAX_LINK = 0.8        # cap on sampled link lengths
MIN_LINK = 0.05       # reject nearly-coincident child/parent placements
MIN_PARENT_SEP = 1e-3
_PLACEMENT_TRIES = 20  # inner rejection budget per position draw


@dataclass(frozen=True)
class DataGenConfig:
    count: int = 100
    min_nodes: int = 4
    max_nodes: int = 8
    extra_ground_prob: float = 0.15
    n_angles: int = 200
    max_node_attempts: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.min_nodes < 4:
            raise ValueError("min_nodes must be >= 4")
        if self.max_nodes > 20:
            raise ValueError("max_nodes must be <= 20")
        if self.min_nodes > self.max_nodes:
            raise ValueError("min_nodes must not exceed max_nodes")


@dataclass(frozen=True)
class DatasetRecord:
    graph: MechanismGraph
    curve: np.ndarray  # (n_angles, 2) normalized end-effector trace
    seed: int


@dataclass
class DataGenSummary:
    requested: int = 0
    written: int = 0
    exhausted: int = 0
    node_attempts: int = 0


def _reflect(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Mirror p across the line through a and b."""
    d = b - a
    t = np.dot(p - a, d) / np.dot(d, d)
    foot = a + t * d
    return 2.0 * foot - p


def _sample_motor(rng: np.random.Generator, attempts: int) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(attempts):
        pivot = rng.uniform(-0.9, 0.9, size=2)
        radius = rng.uniform(0.1, 0.5)
        psi = rng.uniform(0.0, 2.0 * np.pi)
        endpoint = pivot + radius * np.array([np.cos(psi), np.sin(psi)])
        if np.all(np.abs(endpoint) <= 1.0):
            return pivot, endpoint
    raise GenerationExhausted("could not place the motor pair inside the box")


def _sample_child_position(rng: np.random.Generator, pa: np.ndarray,
                           pb: np.ndarray) -> np.ndarray | None:
    """Uniform draw from the positive-branch half of the reachable lens."""
    if np.hypot(*(pb - pa)) >= 2.0 * MAX_LINK:
        return None
    lo = np.maximum(np.maximum(pa, pb) - MAX_LINK, -1.0)
    hi = np.minimum(np.minimum(pa, pb) + MAX_LINK, 1.0)
    if np.any(lo >= hi):
        return None
    for _ in range(_PLACEMENT_TRIES):
        p = rng.uniform(lo, hi)
        da = np.hypot(*(p - pa))
        db = np.hypot(*(p - pb))
        if da > MAX_LINK or db > MAX_LINK or da < MIN_LINK or db < MIN_LINK:
            continue
        cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0])
        if cross == 0.0:
            continue
        if cross < 0.0:
            p = _reflect(p, pa, pb)
            if np.any(np.abs(p) > 1.0):
                continue
        return p
    return None


def _sample(config: DataGenConfig, rng: np.random.Generator) -> tuple[MechanismGraph, np.ndarray, int]:
    """Build one valid mechanism; returns (graph, normalized curve, attempts)."""
    attempts_used = 0
    target_n = int(rng.integers(config.min_nodes, config.max_nodes + 1))

    pivot, endpoint = _sample_motor(rng, config.max_node_attempts)
    records = [
        NodeRecord.joint(NodeType.GROUNDED, pivot, index=0),
        NodeRecord.joint(NodeType.REVOLUTE, endpoint, edges_to=[0], index=1),
    ]
    moving = [False, True]
    positions = [pivot, endpoint]
    n_grounded = 1

    for k in range(2, target_n):
        is_last = k == target_n - 1
        placed = False
        for _ in range(config.max_node_attempts):
            attempts_used += 1
            # Grounded extras never take the end-effector slot (the traced
            # joint has to move) and are capped so mechanisms stay mobile.
            can_ground = (not is_last) and (n_grounded + 1) * 2 <= target_n
            if can_ground and rng.uniform() < config.extra_ground_prob:
                pos = rng.uniform(-0.9, 0.9, size=2)
                candidate = records + [NodeRecord.joint(NodeType.GROUNDED, pos, index=k)]
                if validate(build_graph(candidate), config.n_angles).ok:
                    records = candidate
                    moving.append(False)
                    positions.append(pos)
                    n_grounded += 1
                    placed = True
                    break
                continue

            pick = rng.choice(k, size=2, replace=False)
            i, j = int(min(pick)), int(max(pick))
            if is_last and not (moving[i] or moving[j]):
                continue
            pa, pb = positions[i], positions[j]
            if np.hypot(*(pb - pa)) < MIN_PARENT_SEP:
                continue
            p = _sample_child_position(rng, pa, pb)
            if p is None:
                continue
            candidate = records + [NodeRecord.joint(NodeType.REVOLUTE, p, edges_to=[i, j], index=k)]
            if validate(build_graph(candidate), config.n_angles).ok:
                records = candidate
                moving.append(moving[i] or moving[j])
                positions.append(p)
                placed = True
                break
        if not placed:
            raise GenerationExhausted(f"could not place node {k} in {config.max_node_attempts} attempts")

    graph = build_graph(records)
    raw = trace_coupler_curve(graph, config.n_angles)
    extent = np.sqrt(((raw - raw.mean(axis=0)) ** 2).sum(axis=1)).max()
    if extent < 1e-6:
        raise GenerationExhausted("end effector does not move")
    normalized, _, _ = normalize_curve(Curve(raw))
    return graph, normalized.points, attempts_used


def sample_random_mechanism(config: DataGenConfig, rng: np.random.Generator) -> MechanismGraph:
    """One random valid mechanism with node count in [min_nodes, max_nodes]."""
    graph, _, _ = _sample(config, rng)
    return graph


def _record_task(args: tuple[DataGenConfig, int]) -> tuple[str | None, int]:
    """Worker body: one record slot -> (serialized line or None, attempts)."""
    config, index = args
    rng = make_rng(config.seed, DOMAIN_DATAGEN, index)
    record_seed = derive_int(config.seed, DOMAIN_DATAGEN, index)
    try:
        graph, curve, attempts = _sample(config, rng)
    except GenerationExhausted:
        return None, 0
    obj = {"seed": record_seed}
    mech = graph_to_json_dict(graph, record_seed, curve)
    obj["nodes"] = mech["nodes"]
    obj["curve"] = mech["curve"]
    return json.dumps(obj), attempts


def generate_dataset(config: DataGenConfig, path, workers: int = 1) -> DataGenSummary:
    """Write `count` record slots to a JSONL file; exhausted slots are skipped."""
    jobs = [(config, i) for i in range(config.count)]
    if workers > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            results = pool.map(_record_task, jobs)
    else:
        results = [_record_task(job) for job in jobs]

    summary = DataGenSummary(requested=config.count)
    with open(path, "w", encoding="utf-8") as fh:
        for line, attempts in results:
            summary.node_attempts += attempts
            if line is None:
                summary.exhausted += 1
                continue
            fh.write(line + "\n")
            summary.written += 1
    return summary


def load_dataset(path, verify: bool = True) -> list[DatasetRecord]:
    """Parse a dataset file; with verify=True re-checks every record invariant
    (graph validates, curve length matches, curve equals the re-simulated
    normalized trace to 1e-9)."""
    records: list[DatasetRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from exc
            if "curve" not in obj or obj["curve"] is None:
                raise ParseError("dataset record is missing its curve", line=lineno, field="curve")
            graph, seed, curve = graph_from_json_dict(obj, line=lineno)
            records.append(DatasetRecord(graph=graph, curve=curve, seed=seed))

    if verify:
        for idx, rec in enumerate(records):
            if not validate(rec.graph, rec.curve.shape[0]).ok:
                raise InvariantViolation("mechanism fails validation", index=idx)
            retraced = trace_coupler_curve(rec.graph, rec.curve.shape[0])
            renormalized, _, _ = normalize_curve(Curve(retraced))
            if rec.curve.shape != renormalized.points.shape:
                raise InvariantViolation("curve length mismatch", index=idx)
            if np.abs(rec.curve - renormalized.points).max() > 1e-9:
                raise InvariantViolation("stored curve does not match the re-simulated trace", index=idx)
    return records
