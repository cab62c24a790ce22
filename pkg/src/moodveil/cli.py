"""``moodveil {generate,run,sweep,audit,report}``.

Flags mirror config keys; a flag given on the command line overrides the
same key in ``--config``. Exit status is 0 on success, 1 when a stage fails
and 2 for usage or configuration errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import (METHOD_CHOICES, MODALITY_CHOICES, MODEL_CHOICES, SPLIT_CHOICES,
                     ConfigError, load_config)

COMMANDS = ("generate", "run", "sweep", "audit", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moodveil", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--out", help=f"output directory (default under ${pipeline.OUT_ENV})")
        p.add_argument("--force", action="store_true", help="write into a non-empty --out")
        if name == "report":
            continue
        p.add_argument("--seed", type=int, help="root seed for every random stream")
        p.add_argument("--jobs", type=int, help="worker threads for grid search")
        if name == "generate":
            p.add_argument("--describe", action="store_true", help="print a dataset summary")
            continue
        p.add_argument("--events", help="keystroke log (JSONL); synthetic data if omitted")
        p.add_argument("--labels", help="mood labels (CSV)")
        p.add_argument("--modality", choices=MODALITY_CHOICES)
        p.add_argument("--split", choices=SPLIT_CHOICES)
        p.add_argument("--drop-empty-days", action="store_const", const=True, default=None,
                       help="skip labelled days without any keystrokes")
        if name == "run":
            p.add_argument("--model", choices=MODEL_CHOICES)
        if name == "audit":
            p.add_argument("--method", choices=METHOD_CHOICES)
    return parser


def _overrides(args) -> dict:
    keys = ("seed", "jobs", "out", "events", "labels", "modality", "model", "split", "method",
            "drop_empty_days")
    return {k: getattr(args, k, None) for k in keys}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        if args.out is None:
            parser.error("report needs --out pointing at a run directory")
        try:
            print(pipeline.cmd_report(args.out))
        except pipeline.StageError as exc:
            print(f"moodveil: {exc}", file=sys.stderr)
            return 1
        return 0

    try:
        cfg = load_config(args.config, _overrides(args))
        out = pipeline.prepare_out(pipeline.resolve_out(cfg, args.command), args.force)
    except (ConfigError, FileExistsError) as exc:
        parser.print_usage(sys.stderr)
        print(f"moodveil {args.command}: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "generate":
            paths, summary = pipeline.cmd_generate(cfg, out, args.describe)
            print("\n".join(str(p) for p in paths))
            if summary is not None:
                print(summary.to_text())
        elif args.command == "run":
            result = pipeline.cmd_run(cfg, out)
            print(result.table)
            if not result.leakage_ok:
                print("moodveil run: provenance audit found fit/test overlap", file=sys.stderr)
        elif args.command == "sweep":
            for modality, run in pipeline.cmd_sweep(cfg, out).items():
                sel = run.sweep.selected
                print(f"{modality}: selected lambda={sel.lam:g} sigma={sel.sigma:g} "
                      f"f1={sel.t:.4f} probe={sel.s:.4f} R={sel.ratio:.4f}")
        elif args.command == "audit":
            print(pipeline.cmd_audit(cfg, out).to_text())
    except pipeline.StageError as exc:
        print(f"moodveil {args.command}: {exc}", file=sys.stderr)
        return 1
    print(f"outputs written to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
