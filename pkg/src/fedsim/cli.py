"""Command-line entry point: ``fedsim run | compare | verify | partition-inspect``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage or configuration
error. Set ``FEDSIM_LOG`` to error, warn, info or debug for log output on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from fedsim.config import load_config
from fedsim.errors import ComparabilityError, ConfigurationError, DataFormatError, FedSimError, ScenarioError
from fedsim.orchestrator import build_federation, compare_runs, run_simulation
from fedsim.serialize import _now, format_comparison, read_run, write_comparison, write_run

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("fedsim")


def _configure_logging() -> None:
    level = os.environ.get("FEDSIM_LOG", "warn").lower()
    logging.basicConfig(
        level=_LOG_LEVELS.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if level not in _LOG_LEVELS:
        log.warning("FEDSIM_LOG=%r not recognised; using warn", level)


def _error(msg: str) -> None:
    print(f"fedsim: error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        _error(f"config file not found: {args.config}")
        return EXIT_USAGE
    except ConfigurationError as exc:
        _error(f"invalid config: {exc}")
        return EXIT_USAGE
    if args.workers < 1:
        _error("--workers must be >= 1")
        return EXIT_USAGE

    started = _now()
    log.info("running %s (seed %d, %d rounds)", cfg.tag, cfg.seed, cfg.rounds)
    try:
        result = run_simulation(cfg, workers=args.workers)
        files = write_run(args.out, result, started=started, timings=not args.no_timings)
    except (FedSimError, OSError) as exc:
        _error(str(exc))
        return EXIT_FAILURE
    last = result.rounds[-1]
    print(f"{cfg.tag} seed {cfg.seed}: final accuracy {last.accuracy:.4f} after {len(result.rounds)} rounds")
    for f in files:
        print(f"  wrote {f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if not args.reference:
        _error("--reference is required")
        return EXIT_USAGE
    dirs = list(dict.fromkeys([*args.reference, *args.runs]))
    try:
        runs = {d: read_run(d) for d in dirs}
    except (DataFormatError, ConfigurationError, KeyError) as exc:
        _error(f"cannot read run: {exc}")
        return EXIT_USAGE
    if len(runs) < 2:
        _error("need at least two run directories")
        return EXIT_USAGE
    ref_tags = {runs[d].tag for d in args.reference}
    if len(ref_tags) != 1:
        _error(f"reference runs carry several tags: {sorted(ref_tags)}")
        return EXIT_USAGE
    reference_tag = ref_tags.pop()
    try:
        rows = compare_runs(list(runs.values()), reference_tag)
    except ComparabilityError as exc:
        _error(f"incompatible runs: {exc}")
        return EXIT_USAGE
    try:
        files = write_comparison(args.out, rows, reference_tag)
    except OSError as exc:
        _error(str(exc))
        return EXIT_FAILURE
    print(format_comparison(rows))
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from fedsim.verify import run_checks

    results = run_checks(args.seed, corrupt_gradient=args.corrupt_gradient)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILURE
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_partition_inspect(args) -> int:
    try:
        cfg = load_config(args.config)
        fed = build_federation(cfg)
    except FileNotFoundError:
        _error(f"config file not found: {args.config}")
        return EXIT_USAGE
    except (ConfigurationError, ScenarioError) as exc:
        _error(f"invalid scenario: {exc}")
        return EXIT_USAGE
    except FedSimError as exc:
        _error(str(exc))
        return EXIT_FAILURE

    c = fed.train.num_classes
    head = ["client", "maverick"] + [f"class_{k}" for k in range(c)] + ["total"]
    rows = [
        [str(p.id), "yes" if p.is_maverick else "", *(str(int(x)) for x in p.counts), str(p.data_size)]
        for p in fed.profiles
    ]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    for r in [head] + rows:
        print("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    print(f"class totals: {' '.join(str(int(x)) for x in fed.train.class_counts())}")

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "partition.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["client_id", "is_maverick"] + [f"count_{k}" for k in range(c)] + ["total"])
            for p in fed.profiles:
                w.writerow([p.id, int(p.is_maverick), *(int(x) for x in p.counts), p.data_size])
    except OSError as exc:
        _error(str(exc))
        return EXIT_FAILURE
    print(f"wrote {out / 'partition.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description="Deterministic federated-learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation from a config file")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="intra-round threads (result is unchanged)")
    p.add_argument(
        "--no-timings", action="store_true",
        help="leave wall_time_ms empty so rounds.csv is byte-reproducible",
    )
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="tabulate R@99 and friends across run directories")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--reference", nargs="+", help="run directories of the reference strategy")
    p.add_argument("--out", default=".", help="where comparison.csv/json go (default: .)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the numerical self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("partition-inspect", help="print the client-by-class count matrix")
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--out", default=".", help="where partition.csv goes (default: .)")
    p.set_defaults(func=cmd_partition_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
