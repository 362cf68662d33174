"""Command-line entry point.

Exit status: 0 on success, 1 when the run or an input file fails, 2 for
usage errors (unknown subcommand or flag, bad ``--policies``).
"""

from __future__ import annotations

import argparse
import sys

from . import report as rpt
from .engine import Simulation
from .errors import ConfigError, ConfigParseError, SimulationError, TraceFormatError
from .metrics import compare
from .scenario import POLICIES, load_scenario
from .workload import read_trace

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"usage error: {message}\n")


def build_parser():
    p = _Parser(prog="antcloud", description="Energy-aware ant-colony cloud simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("scenario")
    run.add_argument("--format", choices=rpt.FORMATS, default="text")
    run.add_argument("--out", help="write the report here instead of stdout")
    run.add_argument("--plot", metavar="SVG", help="also render active nodes and power to an SVG file")
    run.add_argument("--policy", choices=POLICIES, help="override the scenario's policy")
    run.add_argument("--seed", type=int, help="override the scenario's seed")

    cmp_ = sub.add_parser("compare", help="run several policies on the same seed")
    cmp_.add_argument("scenario")
    cmp_.add_argument("--policies", required=True, help="comma separated, at least two")
    cmp_.add_argument("--format", choices=rpt.FORMATS, default="text")
    cmp_.add_argument("--out")
    cmp_.add_argument("--seed", type=int)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")

    tc = sub.add_parser("trace-check", help="check a workload trace file")
    tc.add_argument("trace")
    return p


def _emit(text, out):
    if out:
        rpt.write_text(text, out)
    else:
        sys.stdout.write(text)


def _load(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _cmd_run(args):
    cfg = _load(args)
    if args.policy:
        cfg = cfg.with_(policy=args.policy)
    report = Simulation(cfg).run()
    _emit(rpt.emit_report(report, args.format), args.out)
    if args.plot:
        rpt.plot_report(report, args.plot)
    return EXIT_OK


def _cmd_compare(args, parser):
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    if len(names) < 2:
        parser.error("--policies needs at least two policy names")
    bad = [n for n in names if n not in POLICIES]
    if bad:
        parser.error(f"unknown policy {bad[0]!r}; choose from {', '.join(POLICIES)}")
    if len(set(names)) != len(names):
        parser.error("--policies lists a policy twice")
    cfg = _load(args)
    reports = {name: Simulation(cfg.with_(policy=name)).run() for name in names}
    first = reports[names[0]]
    summary = compare(first, reports[names[1]])
    text = rpt.emit_comparison(summary, reports, args.format)
    if len(names) > 2:
        for other in names[2:]:
            extra = compare(first, reports[other])
            text += "\n" + rpt.emit_comparison(extra, {names[0]: first, other: reports[other]}, args.format)
    _emit(text, args.out)
    return EXIT_OK


def _cmd_validate(args):
    cfg = load_scenario(args.scenario)
    cfg.build_trace()
    print(f"valid: {len(cfg.nodes)} nodes, {len(cfg.requests)} requests, policy {cfg.policy}")
    return EXIT_OK


def _cmd_trace_check(args):
    trace = read_trace(args.trace)
    rows = sum(len(p) for p in trace.profiles.values())
    print(f"valid: {len(trace.profiles)} apps, {rows} rows")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args, parser)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_trace_check(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (ConfigError, ConfigParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except TraceFormatError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"io error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
    except SimulationError as exc:
        print(f"simulation error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_RUNTIME


run_command = main

if __name__ == "__main__":
    sys.exit(main())
