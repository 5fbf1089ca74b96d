"""
diffgraph command-line entry point.

Commands
--------
    python app.py gen KIND [--n N] [--count C] [--seed S] [--blocks B] [--block-size M]
                           [--p-in P] [--p-out Q] [--radius R] [--out PATH] [--force]
    python app.py train CONFIG [key=value ...]
    python app.py eval CHECKPOINT DATASET [--task TASK] [--out CSV]
    python app.py verify [--suite NAME ...] [--mutate]
    python app.py compare CONFIG [key=value ...] [--ablation]

Errors raised by the toolkit are printed as a single `error: ...` line on
stderr; the exit code is 2 for usage / configuration errors and 1 otherwise.
"""

from __future__ import annotations

import argparse
import logging
import sys

from config import Config
from errors import DiffGraphError
from graphs.synthetic import GENERATORS
from model.model_config import TASKS
from services.dataset_service import cmd_gen
from services.evaluator import cmd_eval
from services.experiment import cmd_compare
from services.trainer import cmd_train
from services.verifier import SUITES, cmd_verify

logger = logging.getLogger("diffgraph")


# ── Command handlers ──────────────────────────────────────────────────────────

def handle_gen(args: argparse.Namespace) -> int:
    """gen KIND: write a synthetic dataset and print a one-line summary."""
    sizes = {
        "count": args.count,
        "blocks": args.blocks,
        "block_size": args.block_size,
        "p_in": args.p_in,
        "p_out": args.p_out,
        "radius": args.radius,
    }
    summary = cmd_gen(args.kind, seed=args.seed, out=args.out, force=args.force, n=args.n, **sizes)
    print(summary.line())
    return 0


def handle_train(args: argparse.Namespace) -> int:
    """train CONFIG [key=value ...]: train every seed, print the test metrics."""
    for seed_run in cmd_train(args.config, args.overrides):
        res = seed_run.result
        metrics = res.test.metrics if res.test is not None else {}
        shown = " ".join(f"{k}={v:.4f}" for k, v in sorted(metrics.items()))
        print(f"seed {seed_run.seed}: {res.steps} steps, best epoch {res.best_epoch} {shown} -> {seed_run.out_dir}")
    return 0


def handle_eval(args: argparse.Namespace) -> int:
    """eval CHECKPOINT DATASET: print loss and metrics, optionally append them to a CSV."""
    record = cmd_eval(args.checkpoint, args.dataset, task=args.task, out=args.out)
    shown = " ".join(f"{k}={v:.6f}" for k, v in sorted(record.metrics.items()))
    print(f"loss={record.loss:.6f} {shown}")
    return 0


def handle_verify(args: argparse.Namespace) -> int:
    """verify: run the property suites; nonzero exit when any suite fails."""
    report = cmd_verify(args.suite, mutate=args.mutate)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def handle_compare(args: argparse.Namespace) -> int:
    """compare CONFIG: baseline vs differential encoding (plus ablations) over run.seeds."""
    table = cmd_compare(args.config, args.overrides, ablation=args.ablation)
    for line in table.lines():
        print(line)
    print(f"table written to {table.path}")
    return 0


# ── Parser ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffgraph", description="Differential-encoding graph toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("kind", help=f"one of: {', '.join(GENERATORS)}")
    gen.add_argument("--n", type=int, default=None, help="graph size (nodes per graph or per block)")
    gen.add_argument("--count", type=int, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--blocks", type=int, default=None)
    gen.add_argument("--block-size", type=int, default=None)
    gen.add_argument("--p-in", type=float, default=None)
    gen.add_argument("--p-out", type=float, default=None)
    gen.add_argument("--radius", type=float, default=None)
    gen.add_argument("--out", default=None, help="output file (default: DIFFGRAPH_DATA_DIR/<kind>-<seed>.jsonl)")
    gen.add_argument("--force", action="store_true", help="overwrite an existing file")
    gen.set_defaults(handler=handle_gen)

    train = sub.add_parser("train", help="train from a run configuration")
    train.add_argument("config")
    train.add_argument("overrides", nargs="*", help="key=value overrides")
    train.set_defaults(handler=handle_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("checkpoint")
    ev.add_argument("dataset")
    ev.add_argument("--task", choices=TASKS, default=None)
    ev.add_argument("--out", default=None, help="metrics CSV to append to")
    ev.set_defaults(handler=handle_eval)

    ver = sub.add_parser("verify", help="run the property suites")
    ver.add_argument("--suite", action="append", choices=SUITES, default=None)
    ver.add_argument("--mutate", action="store_true", help=argparse.SUPPRESS)
    ver.set_defaults(handler=handle_verify)

    cmp_ = sub.add_parser("compare", help="baseline vs differential encoding over seeds")
    cmp_.add_argument("config")
    cmp_.add_argument("overrides", nargs="*", help="key=value overrides")
    cmp_.add_argument("--ablation", action="store_true", help="add local-only / global-only rows")
    cmp_.set_defaults(handler=handle_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DiffGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
