"""Command-line runner: ``colombeau run <scenario|path>`` and ``colombeau --list``.

Exit status: 0 when every verdict matches the scenario's expectation, 1 on a
mismatch, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import scenarios
from .asymptotics import ConfigurationError, PreconditionError, SweepError, reports_to_csv, reports_to_json
from .config import ConfigError
from .expr import ExpressionError
from .scenarios import GridOverride, run_checks

OUT_ENV = "COLOMBEAU_OUT"
DEFAULT_OUT = "colombeau-out"

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="colombeau", description="Run eps-asymptotic scenarios on generalized sections.")
    p.add_argument("--list", action="store_true", help="list the built-in scenarios and exit")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run a built-in scenario or a scenario file")
    run.add_argument("target", help="built-in scenario name or path to a scenario file")
    run.add_argument("--eps-min-pow", type=int, metavar="K", help="smallest eps is 2^-K")
    run.add_argument("--eps-max-pow", type=int, metavar="K", help="largest eps is 2^-K")
    run.add_argument("--grid", type=int, metavar="N", help="number of log-spaced eps values between the bounds")
    run.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--parallel", action="store_true", help="evaluate the eps values of each sweep in parallel")
    return p


def list_text() -> str:
    width = max(len(n) for n in scenarios.names())
    return "\n".join(f"{s.name:<{width}}  {s.summary}" for s in scenarios.BUILTINS.values())


def _load(target: str):
    if target in scenarios.BUILTINS:
        s = scenarios.BUILTINS[target]
        return s.name, s.summary, s.checks()
    if os.path.isfile(target):
        from .userconfig import load

        u = load(target)
        return u.name, u.summary, u.checks()
    raise ConfigError(f"no built-in scenario or file named {target!r} (see --list)")


def verdict_table(outcomes) -> str:
    rows = [("check", "test", "verdict", "expected", "slope", "match")]
    for o in outcomes:
        rep = o.report
        slope = "" if rep.slope != rep.slope else f"{rep.slope:.3f}"
        rows.append((o.check.name, rep.test.split("[", 1)[0], rep.verdict, o.expected, slope,
                     "ok" if o.matched else "MISMATCH"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def run(target: str, override: GridOverride, out_dir: str, parallel: bool = False, stream=None) -> int:
    stream = stream or sys.stdout
    name, summary, checks = _load(target)
    outcomes = run_checks(name, checks, override, parallel)
    reports = [o.report for o in outcomes]
    os.makedirs(out_dir, exist_ok=True)
    header = {
        "scenario": name,
        "summary": summary,
        "grid_override": {"k_min": override.k_min, "k_max": override.k_max, "count": override.count},
        "checks": [{"name": o.check.name, "expected": o.expected, "verdict": o.report.verdict,
                    "matched": o.matched} for o in outcomes],
    }
    with open(os.path.join(out_dir, f"{name}.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(reports_to_csv(reports))
    with open(os.path.join(out_dir, f"{name}.json"), "w", encoding="utf-8") as fh:
        fh.write(reports_to_json(reports, header))
    print(f"scenario {name}: {summary}", file=stream)
    print(verdict_table(outcomes), file=stream)
    bad = sum(not o.matched for o in outcomes)
    print(f"{len(outcomes) - bad}/{len(outcomes)} verdicts match; reports in {out_dir}", file=stream)
    return EXIT_OK if bad == 0 else EXIT_MISMATCH


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        print(list_text())
        return EXIT_OK
    if args.command != "run":
        parser.print_help()
        return EXIT_CONFIG
    override = GridOverride(args.eps_max_pow, args.eps_min_pow, args.grid)
    out_dir = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        return run(args.target, override, out_dir, args.parallel)
    except (ConfigError, ConfigurationError, PreconditionError, ExpressionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SweepError as exc:
        if isinstance(exc.cause, (ConfigurationError, PreconditionError)):
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
