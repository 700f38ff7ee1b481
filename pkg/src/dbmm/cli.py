"""Command-line entry point.

Subcommands::

    dbmm simulate      roll trials under the random policy, no learning
    dbmm train-eval    simulate / score / train loop
    dbmm enkf-baseline EnKF with the true continuous model
    dbmm report        rebuild the report files from records.jsonl

Exit codes: 0 success, 2 configuration error, 3 run aborted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

from .core import ConfigError
from .harness import (
    RunAborted,
    config_from_dict,
    export_report,
    load_config,
    load_records,
    run_enkf_baseline,
    run_evaluation,
    run_simulation,
)

EXIT_OK, EXIT_CONFIG, EXIT_ABORTED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbmm", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "train-eval", "enkf-baseline"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--benchmark", choices=["discrete", "continuous", "railway"])
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--evaluations", type=int, dest="n_evaluations")
        s.add_argument("--horizon", type=int)
        s.add_argument("--out")
    r = sub.add_parser("report")
    r.add_argument("--out", required=True, help="run directory containing records.jsonl")
    return p


def _build_config(args):
    overrides = {k: v for k, v in vars(args).items()
                 if k in ("benchmark", "seed", "trials", "n_evaluations", "horizon", "out") and v is not None}
    if args.config:
        return load_config(args.config, overrides)
    if args.command == "enkf-baseline":
        overrides.setdefault("benchmark", "continuous")
    return config_from_dict(overrides, "arguments")


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            files = export_report(load_records(args.out), args.out)
            print(json.dumps({k: str(v) for k, v in files.items()}, indent=2))
            return EXIT_OK
        cfg = _build_config(args)
        if args.command == "simulate":
            trials = run_simulation(cfg)
            print(f"simulated {len(trials)} trials of {cfg.horizon} steps")
        elif args.command == "train-eval":
            records = run_evaluation(cfg)
            for rec in records:
                shown = {k: round(v, 4) for k, v in rec.metrics.items()}
                print(rec.index, rec.phase, rec.status, shown)
        else:
            rec = run_enkf_baseline(cfg)
            print({k: round(v, 6) for k, v in rec.metrics.items()})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
