"""Command-line entry point.

    threadreach TASK.mtc [options]          verify one task
    threadreach bench CORPUS_DIR [options]  run a configuration matrix, emit CSV
    threadreach oracle TASK.mtc [options]   brute-force ground truth
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadreach import bench as bench_mod
from threadreach.arg import dump_json, export_arg_dot, run_task
from threadreach.cfa import cfa_to_dot
from threadreach.cpa import ExplorationConfig, PropertySpec, Verdict, WaitlistPolicy
from threadreach.oracle import OracleError, run_oracle
from threadreach.syntax import FrontendError

EXIT_CODES = {Verdict.SAFE: 0, Verdict.VIOLATION: 1, Verdict.DEADLOCK: 2, Verdict.UNKNOWN: 3}
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _add_analysis_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", choices=["none", "value", "interval"], default="value")
    p.add_argument("--por", action=argparse.BooleanOptionalAction, default=True,
                   help="partial-order reduction over thread-local edges")
    p.add_argument("--partitioning", action=argparse.BooleanOptionalAction, default=True,
                   help="partition the reached set by thread locations")
    p.add_argument("--waitlist", choices=[w.value for w in WaitlistPolicy], default="threads-dfs")
    p.add_argument("--max-clones", type=int, default=5, metavar="N")
    p.add_argument("--property", choices=[x.value for x in PropertySpec], default="error")
    p.add_argument("--timeout", type=float, default=None, metavar="SECONDS")
    p.add_argument("--widening-threshold", type=int, default=10, metavar="N")


def _config(args) -> ExplorationConfig:
    if args.max_clones < 1:
        raise SystemExit(_usage("--max-clones must be positive"))
    return ExplorationConfig(
        waitlist=WaitlistPolicy(args.waitlist),
        partitioning=args.partitioning,
        por=args.por,
        max_clones=args.max_clones,
        domain=args.domain,
        property=PropertySpec(args.property),
        timeout=args.timeout,
        widening_threshold=args.widening_threshold,
    )


def _usage(message: str) -> int:
    print(f"threadreach: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def run_main(argv) -> int:
    p = _Parser(prog="threadreach", description="Verify a multi-threaded .mtc program.")
    p.add_argument("task", type=Path)
    _add_analysis_options(p)
    p.add_argument("--dot", type=Path, metavar="PATH", help="write the reachability graph as DOT")
    p.add_argument("--cfa-dot", type=Path, metavar="PATH", help="write the CFAs as DOT")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--stats", type=Path, metavar="PATH", help="append a CSV stats row")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = _config(args)
    try:
        report, result, analysis = run_task(args.task, config)
    except OSError as exc:
        return _usage(str(exc))
    except FrontendError as exc:
        return _usage(f"{args.task}:{exc}")

    if args.dot:
        export_arg_dot(result.reached, args.dot)
    if args.cfa_dot:
        args.cfa_dot.write_text(cfa_to_dot(analysis.cfa))
    if args.stats:
        new = not args.stats.exists() or args.stats.stat().st_size == 0
        with args.stats.open("a") as out:
            if new:
                out.write("task,config,verdict,poppedStates,reachedStates,operatorComparisons,wallMillis\n")
            s = report.stats
            out.write(f"{args.task.name},{config.name()},{report.verdict.value},{s.popped},"
                      f"{s.reached},{s.comparisons},{s.wall_ms:.3f}\n")
    print(dump_json(report) if args.json else report.to_text())
    return EXIT_CODES[report.verdict]


def bench_main(argv) -> int:
    p = _Parser(prog="threadreach bench", description="Run a corpus under a configuration matrix.")
    p.add_argument("corpus", type=Path)
    p.add_argument("--domain", choices=["none", "value", "interval"], default="value")
    p.add_argument("--por", choices=["on", "off", "both"], default="both")
    p.add_argument("--partitioning", choices=["on", "off", "both"], default="both")
    p.add_argument("--waitlist", action="append", choices=[w.value for w in WaitlistPolicy],
                   help="repeatable; default: all four policies")
    p.add_argument("--property", choices=[x.value for x in PropertySpec], default="both")
    p.add_argument("--max-clones", type=int, default=5)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", type=Path, help="CSV path (default: stdout)")
    p.add_argument("--quantiles", type=Path, help="write sorted times of correct results")
    args = p.parse_args(argv)
    if not args.corpus.is_dir():
        return _usage(f"{args.corpus} is not a directory")

    def flag(v):
        return {"on": (True,), "off": (False,), "both": (True, False)}[v]

    configs = bench_mod.config_matrix(
        por=flag(args.por), partitioning=flag(args.partitioning),
        waitlists=[WaitlistPolicy(w) for w in args.waitlist] if args.waitlist else tuple(WaitlistPolicy),
        domain=args.domain, property=PropertySpec(args.property),
        max_clones=args.max_clones, timeout=args.timeout,
    )
    rows = bench_mod.bench(args.corpus, configs, jobs=args.jobs)
    if args.output:
        with args.output.open("w") as out:
            bench_mod.write_csv(rows, out)
    else:
        bench_mod.write_csv(rows, sys.stdout)
    if args.quantiles:
        with args.quantiles.open("w") as out:
            bench_mod.write_quantiles(rows, out)
    wrong = [r for r in rows if r["expected"] and r["verdict"] not in (r["expected"], "UNKNOWN")]
    return 1 if wrong else 0


def oracle_main(argv) -> int:
    p = _Parser(prog="threadreach oracle", description="Brute-force all interleavings.")
    p.add_argument("task", type=Path)
    p.add_argument("--step-bound", type=int, default=10_000)
    p.add_argument("--nondet", default="0,1", help="comma-separated values for nondet()")
    args = p.parse_args(argv)
    try:
        values = tuple(int(v) for v in args.nondet.split(","))
        result = run_oracle(args.task.read_text(), args.step_bound, values)
    except (OSError, ValueError, FrontendError) as exc:
        return _usage(str(exc))
    except OracleError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_CODES[Verdict.UNKNOWN]
    print(json.dumps({
        "verdict": result.verdict,
        "maxObservedValues": result.max_observed,
        "stateCount": result.state_count,
    }, indent=2))
    return EXIT_CODES[Verdict(result.verdict)]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "bench":
        return bench_main(argv[1:])
    if argv and argv[0] == "oracle":
        return oracle_main(argv[1:])
    return run_main(argv)


if __name__ == "__main__":
    sys.exit(main())
