"""Command-line entry point: ``learnadapt {train,run,sweep-mu,sweep-k}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .harness import (
    ExperimentConfig,
    emit_csv,
    metrics_from_trace,
    run_comparison,
    setup,
    sweep_k,
    sweep_mu,
    write_table,
)


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.solvers is not None:
        changes["solvers"] = args.solvers
    if args.horizon is not None:
        if args.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        changes["online"] = replace(cfg.online, horizon=args.horizon)
    return replace(cfg, **changes) if changes else cfg


def cmd_train(cfg: ExperimentConfig) -> Path:
    exp = setup(cfg)
    online = exp.online_config()
    if online.n_off < 1:
        raise ValueError("training needs n_off >= 1")
    result = exp.train(online, exp.solver_rng())
    out = Path(cfg.out_dir)
    lam_rows = [{"node": n + 1, "lambda": float(v)} for n, v in enumerate(result.lam)]
    write_table(lam_rows, out / "train_lambda.csv")
    hist = result.trace.lam
    trace_rows = [
        {"k": int(k), **{f"lambda_{n + 1}": float(v) for n, v in enumerate(row)}}
        for k, row in zip(result.trace.t, hist)
    ]
    write_table(trace_rows, out / "train_trace.csv")
    return out


def cmd_run(cfg: ExperimentConfig) -> Path:
    traces = run_comparison(cfg)
    rows = [row for trace in traces.values() for row in metrics_from_trace(trace)]
    path = Path(cfg.out_dir) / "run.csv"
    emit_csv(rows, path, num_nodes=cfg.scenario.num_dc + cfg.scenario.num_mn)
    return path


def cmd_sweep_mu(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir) / "sweep_mu.csv"
    write_table(sweep_mu(cfg), path)
    return path


def cmd_sweep_k(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out_dir) / "sweep_k.csv"
    write_table(sweep_k(cfg), path)
    return path


COMMANDS = {"train": cmd_train, "run": cmd_run, "sweep-mu": cmd_sweep_mu, "sweep-k": cmd_sweep_k}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="learnadapt", description="Dual-domain resource allocation simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "offline SAGA on the training set; writes the multiplier and its trajectory",
        "run": "paired comparison of the selected online solvers",
        "sweep-mu": "cost and queue versus mu (cold start, K=2)",
        "sweep-k": "online SAGA cost and queue versus K",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML/JSON experiment file")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--solvers", help="comma-separated subset of sdg,sdg_plus,online_saga,offline_only")
        p.add_argument("--horizon", type=int, help="number of online slots T")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        path = COMMANDS[args.command](cfg)
    except (ValueError, KeyError, TypeError, OSError, RuntimeError, yaml.YAMLError) as exc:
        print(f"learnadapt: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
