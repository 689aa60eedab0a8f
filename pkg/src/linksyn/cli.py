"""Command-line entry point for the whole pipeline.

One binary, six subcommands: simulate, validate, dataset-gen, train,
synthesize, evaluate. Every run echoes its fully resolved configuration as
a machine-parseable `config:` line, takes all randomness from --seed via
named sub-streams, and produces byte-identical outputs when repeated with
the same flags (including under --workers variation).

Exit codes: 0 success, 2 input error, 3 domain failure (branch defect,
invalid mechanism, failed internal check), 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .curves import curve_from_csv
from .datagen import DataGenConfig, generate_dataset, load_dataset
from .diffusion import (DenoiserModel, ModelConfig, TrainConfig, load_model,
                        prepare_training_data, save_model, train_model)
from .errors import BranchDefect, DegenerateBase, LinksynError, ParseError, InvariantViolation
from .evaluation import (ExperimentConfig, chamfer_report, diversity_report, eval_records,
                         self_check, success_report, synthesize_matrix, write_report_svg,
                         REPORT_SCHEMA)
from .graph import graph_to_json_dict, read_mechanism_file
from .kinematics import simulate, trace_coupler_curve, trajectory_to_csv, validate
from .synthesis import SynthesisConfig, SynthesisStrategy, generate, item_seed

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_USAGE = 64

STRATEGY_NAMES = [s.value for s in SynthesisStrategy]


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code this tool promises (64, not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _echo_config(values: dict) -> None:
    line = " ".join(f"{k}={values[k]}" for k in sorted(values))
    print(f"config: {line}")


def _usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def build_parser() -> _Parser:
    parser = _Parser(prog="linksyn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward-simulate a mechanism file")
    p.add_argument("mechanism", help="mechanism JSON file (first record is used)")
    p.add_argument("--angles", type=int, default=200)
    p.add_argument("--out", default=None, help="trajectory CSV output path")

    p = sub.add_parser("validate", help="topology + kinematics validation")
    p.add_argument("mechanism")
    p.add_argument("--angles", type=int, default=200)

    p = sub.add_parser("dataset-gen", help="generate a random mechanism dataset")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--min-nodes", type=int, default=4)
    p.add_argument("--max-nodes", type=int, default=8)
    p.add_argument("--extra-ground-prob", type=float, default=0.15)
    p.add_argument("--angles", type=int, default=200)
    p.add_argument("--max-node-attempts", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the node denoiser on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="key=value file with model/training overrides")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--out-checkpoint", required=True)

    p = sub.add_parser("synthesize", help="generate a mechanism for a target curve")
    p.add_argument("--curve", required=True, help="curve CSV (x,y rows)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default="node-retry")
    p.add_argument("--k", type=int, default=25, help="retry budget")
    p.add_argument("--angles", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="mechanism output; sidecar goes to <out>.attempts.json")

    p = sub.add_parser("evaluate", help="success/chamfer/diversity experiment matrix")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--strategies", default="one-shot,graph-retry,node-retry")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--n-eval", type=int, default=200)
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--angles", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-svg", default=None, help="directory for success/chamfer charts")
    p.add_argument("--out", required=True, help="combined JSON report path")
    return parser


# --- command bodies ---

def cmd_simulate(args) -> int:
    _echo_config({"command": "simulate", "mechanism": args.mechanism,
                  "angles": args.angles, "out": args.out, "backend": _kernels.BACKEND})
    mechanisms = read_mechanism_file(args.mechanism)
    graph, _, _ = mechanisms[0]
    try:
        trajectory = simulate(graph, args.angles)
    except (BranchDefect, DegenerateBase) as exc:
        print(f"simulation failed: {exc}")
        return EXIT_DOMAIN
    if args.out:
        Path(args.out).write_text(trajectory_to_csv(trajectory), encoding="utf-8")
    print(f"ok angles={trajectory.n_angles} nodes={graph.n_valid}")
    return EXIT_OK


def cmd_validate(args) -> int:
    _echo_config({"command": "validate", "mechanism": args.mechanism, "angles": args.angles})
    mechanisms = read_mechanism_file(args.mechanism)
    graph, _, _ = mechanisms[0]
    report = validate(graph, args.angles)
    kin = "n/a" if report.kinematics_ok is None else report.kinematics_ok
    print(f"topology_ok={report.topology_ok} kinematics_ok={kin}")
    if not report.ok:
        detail = report.reason or "invalid"
        where = "" if report.failing_node is None else f" node={report.failing_node}"
        angle = "" if report.failing_angle is None else f" theta={report.failing_angle:.6f}"
        print(f"invalid: {detail}{where}{angle}")
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_dataset_gen(args) -> int:
    if args.count < 1:
        return _usage("--count must be >= 1")
    if not (4 <= args.min_nodes <= args.max_nodes <= 20):
        return _usage("need 4 <= min-nodes <= max-nodes <= 20")
    if args.workers < 1:
        return _usage("--workers must be >= 1")
    config = DataGenConfig(count=args.count, min_nodes=args.min_nodes,
                           max_nodes=args.max_nodes, extra_ground_prob=args.extra_ground_prob,
                           n_angles=args.angles, max_node_attempts=args.max_node_attempts,
                           seed=args.seed)
    _echo_config({"command": "dataset-gen", "count": config.count,
                  "min_nodes": config.min_nodes, "max_nodes": config.max_nodes,
                  "extra_ground_prob": config.extra_ground_prob, "angles": config.n_angles,
                  "max_node_attempts": config.max_node_attempts, "seed": config.seed,
                  "workers": args.workers, "out": args.out})
    summary = generate_dataset(config, args.out, workers=args.workers)
    print(f"written={summary.written} exhausted={summary.exhausted} "
          f"node_attempts={summary.node_attempts}")
    return EXIT_OK


def _parse_kv_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


_MODEL_KEYS = {
    "n_max": int, "curve_dim": int, "summary_dim": int, "encoder_hidden": int,
    "hidden": int, "tstep_dim": int, "T": int, "beta_start": float, "beta_end": float,
    "w_pos": float, "w_val": float, "w_type": float, "w_adj": float, "huber_delta": float,
}
_TRAIN_KEYS = {"steps": int, "batch_size": int, "lr": float, "seed": int}


def cmd_train(args) -> int:
    if args.steps < 1:
        return _usage("--steps must be >= 1")
    overrides = _parse_kv_config(args.config) if args.config else {}
    model_kwargs = {}
    train_kwargs = {"steps": args.steps, "batch_size": args.batch_size,
                    "lr": args.lr, "seed": args.seed}
    for key, raw in overrides.items():
        if key in _MODEL_KEYS:
            model_kwargs[key] = _MODEL_KEYS[key](raw)
        elif key in _TRAIN_KEYS:
            train_kwargs[key] = _TRAIN_KEYS[key](raw)
        else:
            return _usage(f"unknown config key {key!r}")

    records = load_dataset(args.dataset)
    data = prepare_training_data(records)

    start_step = 0
    state = None
    if args.resume:
        model, state, meta = load_model(args.resume)
        start_step = int(meta.get("step", 0))
        train_kwargs["seed"] = int(meta.get("train_seed", train_kwargs["seed"]))
        if model_kwargs:
            return _usage("model config overrides cannot be combined with --resume")
    else:
        mcfg = ModelConfig(adj_pos_weight=data.adj_pos_weight, **model_kwargs)
        model = DenoiserModel.init_random(mcfg, seed=train_kwargs["seed"])

    tcfg = TrainConfig(**train_kwargs)
    echo = {"command": "train", "dataset": args.dataset, "resume": args.resume,
            "start_step": start_step, "out_checkpoint": args.out_checkpoint}
    echo.update({f"train.{k}": v for k, v in tcfg.to_dict().items()})
    echo.update({f"model.{k}": v for k, v in model.config.to_dict().items()})
    _echo_config(echo)

    state, losses = train_model(model, data, tcfg, start_step=start_step, state=state, log=print)
    save_model(args.out_checkpoint, model, state,
               {"step": start_step + tcfg.steps, "train_seed": tcfg.seed,
                "dataset": str(args.dataset), "final_loss": losses[-1]})
    print(f"trained steps={tcfg.steps} final_loss={losses[-1]:.6f}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    if args.k < 1:
        return _usage("--k must be >= 1")
    _echo_config({"command": "synthesize", "curve": args.curve, "checkpoint": args.checkpoint,
                  "strategy": args.strategy, "k": args.k, "angles": args.angles,
                  "seed": args.seed, "out": args.out})
    curve = curve_from_csv(Path(args.curve).read_text(encoding="utf-8"))
    model, _, _ = load_model(args.checkpoint)
    config = SynthesisConfig(strategy=SynthesisStrategy(args.strategy), k_retries=args.k,
                             n_max=model.config.n_max, n_angles=args.angles, seed=args.seed)
    outcome = generate(curve, model, config, item_seed(args.seed, 0))

    traced = None
    if outcome.valid:
        traced = trace_coupler_curve(outcome.graph, args.angles)
    record = graph_to_json_dict(outcome.graph, args.seed, traced)
    Path(args.out).write_text(json.dumps(record) + "\n", encoding="utf-8")
    sidecar = {
        "strategy": args.strategy,
        "valid": outcome.valid,
        "n_nodes": outcome.n_nodes,
        "attempts": list(outcome.attempts),
        "warnings": list(outcome.warnings),
        "graph_attempts": outcome.graph_attempts,
    }
    Path(str(args.out) + ".attempts.json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(f"valid={outcome.valid} nodes={outcome.n_nodes} warnings={list(outcome.warnings)}")
    return EXIT_OK if outcome.valid else EXIT_DOMAIN


def cmd_evaluate(args) -> int:
    if args.runs < 1:
        return _usage("--runs must be >= 1")
    if args.n_eval < 1:
        return _usage("--n-eval must be >= 1")
    if args.workers < 1:
        return _usage("--workers must be >= 1")
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    try:
        config = ExperimentConfig(dataset_path=args.dataset, checkpoint_path=args.checkpoint,
                                  strategies=strategies, runs=args.runs, seed=args.seed,
                                  n_eval=args.n_eval, k_retries=args.k, n_angles=args.angles)
    except ValueError as exc:
        return _usage(str(exc))
    _echo_config({"command": "evaluate", **{k: v for k, v in config.to_dict().items()},
                  "workers": args.workers, "emit_svg": args.emit_svg, "out": args.out})

    model, _, _ = load_model(args.checkpoint)
    records = eval_records(config)
    matrix = synthesize_matrix(config, model=model, records=records, workers=args.workers)
    reports = {
        "success": success_report(config, matrix),
        "chamfer": chamfer_report(config, matrix, records=records),
        "diversity": diversity_report(config, matrix),
    }

    problems = []
    for report in reports.values():
        problems.extend(self_check(report))

    combined = {
        "schema": REPORT_SCHEMA,
        "kind": "combined",
        "reports": {name: rep.to_dict() for name, rep in reports.items()},
        "problems": problems,
    }
    Path(args.out).write_text(json.dumps(combined, sort_keys=True, indent=2) + "\n",
                              encoding="utf-8")
    if args.emit_svg:
        svg_dir = Path(args.emit_svg)
        svg_dir.mkdir(parents=True, exist_ok=True)
        write_report_svg(reports["success"], svg_dir / "success.svg")
        write_report_svg(reports["chamfer"], svg_dir / "chamfer.svg")

    for strategy, stats in reports["success"].summary.items():
        std = stats["success_std"]
        std_text = "n/a" if std is None else f"{std:.4f}"
        print(f"success {strategy}: mean={stats['success_mean']:.4f} std={std_text}")
    if problems:
        for problem in problems:
            print(f"invariant violation: {problem}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "dataset-gen": cmd_dataset_gen,
    "train": cmd_train,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except LinksynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
