"""Command line: ``qcompose {verify,compose,lemmas,fixed-point} --scenario FILE``.

Exit status is 0 when every executed check passes, 1 when some check fails
or a check raises, and 2 for usage, parse and schema errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import QComposeError, ScenarioError
from .scenario import load_scenario, shipped_path, shipped_scenarios
from .suite import VERBS, default_lemma_scenario, emit_report, render, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return v


def _nonneg_int(text: str) -> int:
    v = int(float(text)) if "e" in text.lower() else int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcompose", description="Measure security and composition bounds.")
    p.add_argument("verb", choices=sorted(VERBS), help="which checks of the scenario to run")
    p.add_argument("--scenario", help="scenario file, or the name of a shipped scenario")
    p.add_argument("--seed", type=_u64, help="override the scenario seed")
    p.add_argument("--tol", type=_positive_float, help="override the tolerance")
    p.add_argument("--budget", type=_nonneg_int, help="override the witness search budget")
    p.add_argument("--report", help="write the report here ('-' for stdout)")
    p.add_argument("--format", choices=("json", "text"),
                   help="report format (default: json for --report files, text on stdout)")
    p.add_argument("--jobs", type=int, default=1, help="checks run concurrently")
    p.add_argument("--timing", action="store_true", help="record wall-clock seconds per check")
    p.add_argument("--list", action="store_true", help="list shipped scenarios and exit")
    return p


def _resolve(arg: str) -> Path:
    path = Path(arg)
    if path.exists() or arg.endswith(".json") or "/" in arg:
        return path
    if arg in shipped_scenarios():
        return shipped_path(arg)
    return path


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if "--list" in argv:
        print("\n".join(shipped_scenarios()))
        return EXIT_PASS
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS
    if args.jobs < 1:
        print("qcompose: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.scenario is None:
            if args.verb != "lemmas":
                print(f"qcompose: {args.verb} needs --scenario", file=sys.stderr)
                return EXIT_USAGE
            sc = default_lemma_scenario(args.seed or 0, args.tol or 1e-7)
        else:
            sc = load_scenario(_resolve(args.scenario), args.seed, args.tol, args.budget)
        for w in sc.warnings:
            print(f"qcompose: warning: {w}", file=sys.stderr)
        if not sc.checks_of(*VERBS[args.verb]):
            print(f"qcompose: scenario {sc.name} has no {args.verb} checks", file=sys.stderr)
            return EXIT_USAGE
    except ScenarioError as e:
        print(f"qcompose: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        bundle = run_suite(sc, args.verb, jobs=args.jobs, timing=args.timing)
    except QComposeError as e:
        print(f"qcompose: error: {e}", file=sys.stderr)
        return EXIT_FAIL
    to_file = args.report not in (None, "-")
    fmt = args.format or ("json" if to_file else "text")
    if not to_file:
        sys.stdout.write(render(bundle, fmt))
    else:
        try:
            emit_report(bundle, args.report, fmt)
        except OSError as e:
            print(f"qcompose: cannot write report: {e}", file=sys.stderr)
            return EXIT_USAGE
        if fmt == "json":
            sys.stdout.write(render(bundle, "text"))
    return EXIT_PASS if bundle.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
