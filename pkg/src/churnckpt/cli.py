"""Command-line front end.

Three subcommands::

    churnckpt run <config> --out <dir> [--seeds N] [--jobs N]
    churnckpt policy eval (--mu RATE | --mtbf SECONDS) --k K --v V --td TD
    churnckpt trace stats <file>

``run`` executes a scenario file and writes ``runs.csv``/``summary.csv``
(the output directory may also come from the ``CHURNCKPT_OUT`` environment
variable).  ``policy eval`` prints the optimal checkpoint rate for one
parameter set.  ``trace stats`` summarizes a session trace file.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace

from .churn import TraceFormatError, ingest_trace, trace_summary
from .config import ConfigError, load_scenarios
from .experiments import emit_results, run_batch
from .policy import PolicyParams, feasibility, optimal_lambda

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

OUT_ENV_VAR = "CHURNCKPT_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="churnckpt",
        description="Checkpoint-policy simulator for churning peer-to-peer networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config file")
    run.add_argument("config", help="scenario file (INI format)")
    run.add_argument("--out", default=None,
                     help=f"output directory (default: ${OUT_ENV_VAR} or '.')")
    run.add_argument("--seeds", type=int, default=None, metavar="N",
                     help="override the config with seeds 0..N-1")
    run.add_argument("--jobs", type=int, default=1, metavar="N",
                     help="worker processes (default 1)")

    policy = sub.add_parser("policy", help="policy-library helpers")
    policy_sub = policy.add_subparsers(dest="policy_command", required=True)
    ev = policy_sub.add_parser("eval", help="print the optimal checkpoint rate")
    group = ev.add_mutually_exclusive_group(required=True)
    group.add_argument("--mu", type=float, help="per-peer failure rate (1/s)")
    group.add_argument("--mtbf", type=float, help="per-peer mean time before failure (s)")
    ev.add_argument("--k", type=int, required=True, help="number of participants")
    ev.add_argument("--v", type=float, required=True, help="checkpoint overhead (s)")
    ev.add_argument("--td", type=float, required=True, help="image download overhead (s)")

    trace = sub.add_parser("trace", help="session-trace helpers")
    trace_sub = trace.add_subparsers(dest="trace_command", required=True)
    stats = trace_sub.add_parser("stats", help="summarize a session trace file")
    stats.add_argument("file", help="trace file (start_seconds,duration_seconds rows)")

    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    out_dir = args.out or os.environ.get(OUT_ENV_VAR) or "."
    try:
        scenarios = load_scenarios(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.seeds is not None:
        if args.seeds < 1:
            print("config error: --seeds must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        scenarios = [replace(s, seeds=tuple(range(args.seeds))) for s in scenarios]
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            records, summary = run_batch(scenarios, jobs=args.jobs)
        for warning in caught:
            print(f"warning: {warning.message}", file=sys.stderr)
        runs_path, summary_path = emit_results(records, summary, out_dir)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"{len(records)} runs -> {runs_path}")
    print(f"summary -> {summary_path}")
    width = max((len(row.scenario) for row in summary), default=8)
    print(f"{'scenario':<{width}}  {'policy':<12} {'mean wall (s)':>14} "
          f"{'rel. runtime':>12} {'n':>4}")
    for row in summary:
        mean = f"{row.mean_wall_time:.1f}" if row.mean_wall_time is not None else "-"
        rel = (f"{row.relative_runtime_pct:.1f}%"
               if row.relative_runtime_pct is not None else "-")
        print(f"{row.scenario:<{width}}  {row.policy:<12} {mean:>14} {rel:>12} {row.n:>4}")
    return EXIT_OK


def _cmd_policy_eval(args: argparse.Namespace) -> int:
    try:
        rate = args.mu if args.mu is not None else 1.0 / args.mtbf
        params = PolicyParams(failure_rate=rate, peers=args.k,
                              checkpoint_cost=args.v, restore_cost=args.td)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = optimal_lambda(params)
    print(f"lambda*      : {out.checkpoint_rate:.10g} /s")
    print(f"interval     : {out.interval:.10g} s")
    print(f"utilization  : {out.utilization:.10g}")
    print(f"feasibility  : {feasibility(params)}")
    if out.clamped:
        print("note         : rate clamped to the configured bounds")
    return EXIT_OK


def _cmd_trace_stats(args: argparse.Namespace) -> int:
    try:
        trace = ingest_trace(args.file)
    except TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_IO
    stats = trace_summary(trace)
    print(f"sessions     : {int(stats['sessions'])}")
    print(f"mean         : {stats['mean_s']:.10g} s")
    print(f"median       : {stats['median_s']:.10g} s")
    print(f"min          : {stats['min_s']:.10g} s")
    print(f"max          : {stats['max_s']:.10g} s")
    print(f"implied rate : {stats['implied_rate']:.10g} /s")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "policy":
        return _cmd_policy_eval(args)
    if args.command == "trace":
        return _cmd_trace_stats(args)
    raise AssertionError(f"unhandled command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
