"""Curve-conditioned autoregressive mechanism construction.

Three strategies share one node-by-node sampler and differ only in what
gets resampled after a validation failure:

  one-shot     sample every node once, validate the finished graph, never
               resample;
  graph-retry  rerun one-shot with fresh attempt streams until the finished
               graph validates or the retry budget is exhausted (the first
               attempt replays the one-shot stream bit for bit);
  node-retry   validate the partial mechanism after every appended node
               (only once at least three nodes exist) and resample just the
               failing node with the same conditioning context, up to K
               retries, then proceed with the last attempt and record a
               warning.

Sampling stops naturally when a node arrives with its validity flag off
(the padding scheme's stop token). Rows 0 and 1 keep the motor convention:
their discrete structure (grounded pivot, revolute endpoint linked to the
pivot) is fixed and only their positions come from the sampler.

Determinism: an outcome is fully determined by (curve, model parameters,
config, seed). Batch generation advances all items through node steps in
lockstep, resampling only items whose new node failed validation; each item
draws from its own derived stream, so batch results are bitwise identical
to running items alone.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .curves import Curve
from .graph import ROW_DIM, MechanismGraph, NodeRecord, NodeType, build_graph, record_to_row
from .kinematics import ValidationReport, validate
from .seeds import DOMAIN_SYNTH, SeedLike, make_rng


class SynthesisStrategy(str, enum.Enum):
    ONE_SHOT = "one-shot"
    GRAPH_RETRY = "graph-retry"
    NODE_RETRY = "node-retry"


@dataclass(frozen=True)
class SynthesisConfig:
    strategy: SynthesisStrategy = SynthesisStrategy.NODE_RETRY
    k_retries: int = 25
    n_max: int = 20
    n_angles: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.k_retries < 1:
            raise ValueError("k_retries must be >= 1")
        if not 4 <= self.n_max <= 20:
            raise ValueError("n_max must be in [4, 20]")


@dataclass(frozen=True)
class SynthesisOutcome:
    graph: MechanismGraph
    valid: bool
    report: ValidationReport
    attempts: tuple[int, ...]      # per node index: sampler calls consumed
    warnings: tuple[int, ...]      # nodes still invalid after K retries
    graph_attempts: int = 1        # full passes (graph-retry only > 1)

    @property
    def n_nodes(self) -> int:
        return self.graph.n_valid


def _force_motor(record: NodeRecord, raw, t: int) -> NodeRecord:
    """Pin the discrete motor structure of rows 0 and 1; positions stay sampled."""
    if t > 1:
        return record
    if record.valid:
        pos = record.position
    else:
        pos = tuple(np.clip(np.nan_to_num(np.asarray(raw.position, dtype=np.float64)), -1.0, 1.0))
    if t == 0:
        return NodeRecord.joint(NodeType.GROUNDED, pos, index=0)
    return NodeRecord.joint(NodeType.REVOLUTE, pos, edges_to=[0], index=1)


class _Generation:
    """Node-by-node sampler state for one curve (shared by all strategies)."""

    def __init__(self, model, curve_emb: np.ndarray, config: SynthesisConfig,
                 rng: np.random.Generator, validate_prefix: bool):
        self.model = model
        self.curve_emb = curve_emb
        self.config = config
        self.rng = rng
        self.validate_prefix = validate_prefix
        self.records: list[NodeRecord] = []
        self.rows = np.zeros((0, ROW_DIM))
        self.attempts = [0] * config.n_max
        self.warnings: list[int] = []
        self.done = False

    def _draw(self, ctx, t: int) -> tuple[NodeRecord, object]:
        record, raw = self.model.sample_node_from_context(ctx, self.rng)
        self.attempts[t] += 1
        return _force_motor(record, raw, t), raw

    def _append(self, record: NodeRecord) -> None:
        self.records.append(record)
        self.rows = np.vstack([self.rows, record_to_row(record)[None, :]])

    def advance(self, t: int) -> None:
        """Sample node t (with retries when enabled); may finish generation."""
        if self.done:
            return
        ctx = self.model.make_context(self.rows, t, self.curve_emb)
        record, _ = self._draw(ctx, t)
        if not record.valid:
            self.done = True  # stop token; the prefix is already accepted
            return

        if self.validate_prefix and t >= 2:
            retries = 0
            ok = validate(build_graph(self.records + [record]), self.config.n_angles).ok
            while not ok and retries < self.config.k_retries:
                record, _ = self._draw(ctx, t)
                retries += 1
                if not record.valid:
                    self.done = True
                    return
                ok = validate(build_graph(self.records + [record]), self.config.n_angles).ok
            if not ok:
                self.warnings.append(t)

        self._append(record)
        if t == self.config.n_max - 1:
            self.done = True

    def run(self) -> None:
        for t in range(self.config.n_max):
            if self.done:
                break
            self.advance(t)
        self.done = True

    def outcome(self, graph_attempts: int = 1) -> SynthesisOutcome:
        graph = build_graph(self.records)
        report = validate(graph, self.config.n_angles)
        return SynthesisOutcome(graph=graph, valid=report.ok, report=report,
                                attempts=tuple(self.attempts), warnings=tuple(self.warnings),
                                graph_attempts=graph_attempts)


def _embed(model, curve) -> np.ndarray:
    if isinstance(curve, np.ndarray):
        curve = Curve(curve)
    return model.embed_curve(curve)


def generate_one_shot(curve, model, config: SynthesisConfig, seed: SeedLike) -> SynthesisOutcome:
    """Single pass: sample nodes sequentially, validate once at the end."""
    curve_emb = _embed(model, curve)
    gen = _Generation(model, curve_emb, config, make_rng(seed, 0), validate_prefix=False)
    gen.run()
    return gen.outcome()


def generate_graph_retry(curve, model, config: SynthesisConfig, seed: SeedLike) -> SynthesisOutcome:
    """Whole-graph regeneration: up to k_retries one-shot passes, each with a
    fresh attempt stream; returns the last attempt with the pass count."""
    curve_emb = _embed(model, curve)
    outcome = None
    for attempt in range(config.k_retries):
        gen = _Generation(model, curve_emb, config, make_rng(seed, attempt), validate_prefix=False)
        gen.run()
        outcome = gen.outcome(graph_attempts=attempt + 1)
        if outcome.valid:
            return outcome
    return outcome


def generate_node_retry(curve, model, config: SynthesisConfig, seed: SeedLike) -> SynthesisOutcome:
    """Node-level retry: validate each partial mechanism (for t > 2, counting
    nodes) and resample only the failing node, up to K retries per node."""
    curve_emb = _embed(model, curve)
    gen = _Generation(model, curve_emb, config, make_rng(seed, 0), validate_prefix=True)
    gen.run()
    return gen.outcome()


_STRATEGY_FN = {
    SynthesisStrategy.ONE_SHOT: generate_one_shot,
    SynthesisStrategy.GRAPH_RETRY: generate_graph_retry,
    SynthesisStrategy.NODE_RETRY: generate_node_retry,
}


def generate(curve, model, config: SynthesisConfig, seed: SeedLike) -> SynthesisOutcome:
    return _STRATEGY_FN[SynthesisStrategy(config.strategy)](curve, model, config, seed)


def item_seed(config_seed: int, index: int) -> tuple:
    """Derived stream identity for batch item `index`."""
    return (config_seed, DOMAIN_SYNTH, index)


def batch_generate(curves, model, config: SynthesisConfig) -> list[SynthesisOutcome]:
    """Generate for a batch of curves with per-item derived streams.

    Node-retry advances all items through node steps in lockstep; at each
    step only items whose freshly sampled node failed validation consume
    retry samples. Items never interact, so each outcome equals the
    single-item call with the same derived seed.
    """
    if len(curves) == 0:
        raise ValueError("curve batch must be non-empty")

    if SynthesisStrategy(config.strategy) != SynthesisStrategy.NODE_RETRY:
        return [generate(curve, model, config, item_seed(config.seed, i))
                for i, curve in enumerate(curves)]

    generations = []
    for i, curve in enumerate(curves):
        curve_emb = _embed(model, curve)
        rng = make_rng(item_seed(config.seed, i), 0)
        generations.append(_Generation(model, curve_emb, config, rng, validate_prefix=True))
    for t in range(config.n_max):
        for gen in generations:
            gen.advance(t)
    return [gen.outcome() for gen in generations]
