"""Experiment harness: success rates, Chamfer accuracy, and topology
diversity across synthesis strategies and independent runs.

Conditioning curves come from the held-out tail of the dataset (90/10 split
by record index). Every (strategy, run) cell synthesizes against the same
evaluation curves with per-item streams derived from the run seed, so cells
are fully paired across strategies, reproducible bit for bit, and
independent jobs that can run on parallel workers without changing any
reported number.

Population rule: success columns aggregate all outcomes; Chamfer columns
aggregate only outcomes that passed validation, and every cell reports the
`n` it aggregated. Cross-run dispersion is the sample standard deviation
over per-run means.
"""
from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .curves import Curve, chamfer_distance, normalize_curve
from .datagen import load_dataset
from .diffusion import load_model
from .errors import DegenerateCurve, LinksynError
from .kinematics import trace_coupler_curve
from .seeds import DOMAIN_EVAL, derive_int
from .synthesis import SynthesisConfig, SynthesisOutcome, SynthesisStrategy, batch_generate

REPORT_SCHEMA = "linksyn-report-v1"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    checkpoint_path: str
    strategies: tuple[str, ...] = ("one-shot", "graph-retry", "node-retry")
    runs: int = 3
    seed: int = 0
    run_seeds: tuple[int, ...] | None = None
    n_eval: int = 200
    k_retries: int = 25
    n_angles: int = 200
    n_max: int = 20
    eval_fraction: float = 0.1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.strategies:
            raise ValueError("strategies must be non-empty")
        for s in self.strategies:
            SynthesisStrategy(s)  # raises on unknown names
        if self.run_seeds is not None and len(self.run_seeds) != self.runs:
            raise ValueError("run_seeds length must equal runs")

    def resolved_run_seeds(self) -> tuple[int, ...]:
        if self.run_seeds is not None:
            return tuple(int(s) for s in self.run_seeds)
        return tuple(derive_int(self.seed, DOMAIN_EVAL, r) for r in range(self.runs))

    def to_dict(self) -> dict:
        return {
            "dataset_path": str(self.dataset_path),
            "checkpoint_path": str(self.checkpoint_path),
            "strategies": list(self.strategies),
            "runs": self.runs,
            "seed": self.seed,
            "run_seeds": list(self.resolved_run_seeds()),
            "n_eval": self.n_eval,
            "k_retries": self.k_retries,
            "n_angles": self.n_angles,
            "n_max": self.n_max,
            "eval_fraction": self.eval_fraction,
        }


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    cells: list[dict]
    summary: dict
    per_curve: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": self.kind,
            "config": self.config,
            "cells": self.cells,
            "summary": self.summary,
            "per_curve": self.per_curve,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def eval_records(config: ExperimentConfig):
    """Held-out records: the tail eval_fraction of the dataset by index."""
    records = load_dataset(config.dataset_path)
    split = int(np.floor(len(records) * (1.0 - config.eval_fraction)))
    pool = records[split:]
    if len(pool) < config.n_eval:
        raise LinksynError(
            f"need {config.n_eval} held-out curves but only {len(pool)} are available")
    return pool[:config.n_eval]


def _cell_task(payload) -> list[SynthesisOutcome]:
    model, curves, syn_config = payload
    return batch_generate(curves, model, syn_config)


def synthesize_matrix(config: ExperimentConfig, model=None, records=None,
                      workers: int = 1) -> dict[tuple[str, int], list[SynthesisOutcome]]:
    """Outcomes for every (strategy, run) cell against the shared eval curves."""
    if model is None:
        model, _, _ = load_model(config.checkpoint_path)
    if records is None:
        records = eval_records(config)
    curves = [r.curve for r in records]
    run_seeds = config.resolved_run_seeds()

    jobs = []
    keys = []
    for strategy in config.strategies:
        for run_idx, run_seed in enumerate(run_seeds):
            syn = SynthesisConfig(strategy=SynthesisStrategy(strategy),
                                  k_retries=config.k_retries, n_max=config.n_max,
                                  n_angles=config.n_angles, seed=run_seed)
            jobs.append((model, curves, syn))
            keys.append((strategy, run_idx))

    if workers > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            results = pool.map(_cell_task, jobs)
    else:
        results = [_cell_task(job) for job in jobs]
    return dict(zip(keys, results))


def _chamfer_for_outcome(outcome: SynthesisOutcome, target_curve: np.ndarray,
                         n_angles: int) -> float | None:
    """Chamfer between the normalized traced curve and the conditioning curve;
    None when the trace has no extent (cannot be normalized)."""
    traced = trace_coupler_curve(outcome.graph, n_angles)
    try:
        normalized, _, _ = normalize_curve(Curve(traced))
    except DegenerateCurve:
        return None
    return chamfer_distance(normalized.points, target_curve)


def _meta(config: ExperimentConfig, stamp: str | None) -> dict:
    return {
        "dataset": str(config.dataset_path),
        "checkpoint": str(config.checkpoint_path),
        "kernel_backend": _kernels.BACKEND,
        # generated_at stays null unless explicitly stamped: reports must be
        # byte-identical across reruns of the same invocation.
        "generated_at": stamp,
    }


def _std_over_runs(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def success_report(config: ExperimentConfig,
                   matrix: dict[tuple[str, int], list[SynthesisOutcome]],
                   stamp: str | None = None) -> ExperimentReport:
    run_seeds = config.resolved_run_seeds()
    cells = []
    summary: dict = {}
    for strategy in config.strategies:
        run_rates = []
        for run_idx, run_seed in enumerate(run_seeds):
            outcomes = matrix[(strategy, run_idx)]
            n_valid = sum(1 for o in outcomes if o.valid)
            rate = n_valid / len(outcomes)
            run_rates.append(rate)
            cells.append({
                "strategy": strategy,
                "run": run_idx,
                "run_seed": run_seed,
                "n_total": len(outcomes),
                "n_valid": n_valid,
                "success_rate": rate,
            })
        summary[strategy] = {
            "success_mean": float(np.mean(run_rates)),
            "success_std": _std_over_runs(run_rates),
        }
    return ExperimentReport("success", config.to_dict(), cells, summary,
                            meta=_meta(config, stamp))


def chamfer_report(config: ExperimentConfig,
                   matrix: dict[tuple[str, int], list[SynthesisOutcome]],
                   records=None, stamp: str | None = None) -> ExperimentReport:
    if records is None:
        records = eval_records(config)
    run_seeds = config.resolved_run_seeds()
    cells = []
    summary: dict = {}
    for strategy in config.strategies:
        run_means = []
        for run_idx, run_seed in enumerate(run_seeds):
            outcomes = matrix[(strategy, run_idx)]
            values = []
            skipped = 0
            for record, outcome in zip(records, outcomes):
                if not outcome.valid:
                    continue  # Chamfer aggregates valid outcomes only
                d = _chamfer_for_outcome(outcome, record.curve, config.n_angles)
                if d is None:
                    skipped += 1
                    continue
                values.append(d)
            mean = float(np.mean(values)) if values else None
            cells.append({
                "strategy": strategy,
                "run": run_idx,
                "run_seed": run_seed,
                "n_total": len(outcomes),
                "n": len(values),
                "degenerate_skipped": skipped,
                "chamfer_mean": mean,
                "chamfer_std": float(np.std(values)) if values else None,
            })
            if mean is not None:
                run_means.append(mean)
        summary[strategy] = {
            "chamfer_mean": float(np.mean(run_means)) if run_means else None,
            "chamfer_std": _std_over_runs(run_means),
        }
    return ExperimentReport("chamfer", config.to_dict(), cells, summary,
                            meta=_meta(config, stamp))


def diversity_report(config: ExperimentConfig,
                     matrix: dict[tuple[str, int], list[SynthesisOutcome]],
                     stamp: str | None = None) -> ExperimentReport:
    """Valid-node counts per conditioning curve across runs, plus a per-curve
    variation flag (None when runs == 1: variation is undefined)."""
    run_seeds = config.resolved_run_seeds()
    per_curve: dict = {}
    cells = []
    summary: dict = {}
    for strategy in config.strategies:
        counts = np.array([[o.n_nodes for o in matrix[(strategy, run_idx)]]
                           for run_idx in range(len(run_seeds))])  # (runs, n_eval)
        varies: list[bool | None]
        if config.runs < 2:
            varies = [None] * counts.shape[1]
        else:
            varies = [bool(len(set(counts[:, c])) > 1) for c in range(counts.shape[1])]
        per_curve[strategy] = {
            "node_counts": counts.T.tolist(),  # per curve: one count per run
            "varies": varies,
        }
        n_varying = None if config.runs < 2 else int(sum(bool(v) for v in varies))
        cells.append({
            "strategy": strategy,
            "runs": config.runs,
            "n_curves": counts.shape[1],
            "n_varying": n_varying,
        })
        summary[strategy] = {"n_varying": n_varying}
    return ExperimentReport("diversity", config.to_dict(), cells, summary,
                            per_curve=per_curve, meta=_meta(config, stamp))


def run_success_experiment(config: ExperimentConfig, model=None, records=None,
                           workers: int = 1) -> ExperimentReport:
    if records is None:
        records = eval_records(config)
    matrix = synthesize_matrix(config, model=model, records=records, workers=workers)
    return success_report(config, matrix)


def run_chamfer_experiment(config: ExperimentConfig, model=None, records=None,
                           workers: int = 1) -> ExperimentReport:
    if records is None:
        records = eval_records(config)
    matrix = synthesize_matrix(config, model=model, records=records, workers=workers)
    return chamfer_report(config, matrix, records=records)


def run_diversity_report(config: ExperimentConfig, model=None, records=None,
                         workers: int = 1) -> ExperimentReport:
    if records is None:
        records = eval_records(config)
    matrix = synthesize_matrix(config, model=model, records=records, workers=workers)
    return diversity_report(config, matrix)


def self_check(report: ExperimentReport) -> list[str]:
    """Internal consistency checks; any violation should fail the run."""
    problems = []
    n_eval = report.config["n_eval"]
    for cell in report.cells:
        if report.kind == "success":
            if cell["n_total"] > n_eval:
                problems.append(f"cell {cell['strategy']}/{cell['run']}: n_total > n_eval")
            expect = cell["n_valid"] / cell["n_total"]
            if abs(cell["success_rate"] - expect) > 1e-12:
                problems.append(f"cell {cell['strategy']}/{cell['run']}: success_rate mismatch")
        elif report.kind == "chamfer":
            if cell["n"] > cell["n_total"]:
                problems.append(f"cell {cell['strategy']}/{cell['run']}: n > n_total")
    return problems


# --- deterministic SVG bar charts ---

def _svg_bar_chart(title: str, labels: list[str], means: list[float],
                   stds: list[float | None], y_label: str) -> str:
    width, height = 480, 320
    margin_l, margin_b, margin_t = 60, 40, 40
    plot_w = width - margin_l - 20
    plot_h = height - margin_b - margin_t
    top = max([m + (s or 0.0) for m, s in zip(means, stds)] + [1e-9]) * 1.15

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{height - margin_b}" stroke="black"/>',
        f'<line x1="{margin_l}" y1="{height - margin_b}" x2="{width - 20}" y2="{height - margin_b}" stroke="black"/>',
        f'<text x="15" y="{margin_t + plot_h / 2:.1f}" font-size="11" transform="rotate(-90 15 {margin_t + plot_h / 2:.1f})" text-anchor="middle">{y_label}</text>',
    ]
    n = len(labels)
    slot = plot_w / max(n, 1)
    bar_w = slot * 0.6
    for i, (label, mean) in enumerate(zip(labels, means)):
        x = margin_l + slot * i + (slot - bar_w) / 2
        h = plot_h * mean / top
        y = height - margin_b - h
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="#4878a8"/>')
        std = stds[i]
        if std is not None:
            cx = x + bar_w / 2
            y1 = height - margin_b - plot_h * min(mean + std, top) / top
            y2 = height - margin_b - plot_h * max(mean - std, 0.0) / top
            parts.append(f'<line x1="{cx:.2f}" y1="{y1:.2f}" x2="{cx:.2f}" y2="{y2:.2f}" stroke="black"/>')
        parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{height - margin_b + 16}" text-anchor="middle" font-size="11">{label}</text>')
        parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" text-anchor="middle" font-size="10">{mean:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report_svg(report: ExperimentReport, path) -> None:
    """Bar chart of the per-strategy summary (success or Chamfer reports)."""
    labels = list(report.summary.keys())
    if report.kind == "success":
        means = [report.summary[s]["success_mean"] for s in labels]
        stds = [report.summary[s]["success_std"] for s in labels]
        svg = _svg_bar_chart("Generation success rate", labels, means, stds, "success rate")
    elif report.kind == "chamfer":
        means = [report.summary[s]["chamfer_mean"] or 0.0 for s in labels]
        stds = [report.summary[s]["chamfer_std"] for s in labels]
        svg = _svg_bar_chart("Chamfer distance (valid outcomes)", labels, means, stds, "chamfer distance")
    else:
        raise ValueError(f"no chart for report kind {report.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
