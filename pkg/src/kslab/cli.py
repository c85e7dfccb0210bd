"""Command-line interface.

Subcommands::

    kslab run <scenario> [--set key=value ...] [--out DIR]
    kslab check-gamma <motility-json> [--range a,b] [--samples N] [--k K]
    kslab eig <grid-json> [--numeric]
    kslab sweep <scenario> --grid <json> [--workers N] [--out DIR]
    kslab report <manifest-dir> [--no-figures]
    kslab list

JSON arguments may be file paths or inline JSON text. Exit codes: 0 all
checks passed, 1 operational error, 2 a physics check failed, 3 an
invariant (mass, positivity) was violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .grid import Grid, analytic_mu1, numeric_mu1
from .motility import MotilitySpec, assumption_report

logger = logging.getLogger("kslab")


def _load_json(text: str):
    path = Path(text)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(text)


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    man = harness.run_scenario(args.scenario, args.set or [], args.out)
    for name, v in man.verdicts.items():
        status = "PASS" if v["passed"] else "FAIL"
        print(f"{status}  {name}")
    print(f"exit_event={man.data['exit_event']} t={man.data['final_time']:.6g} "
          f"steps={man.data['steps']}")
    print(f"manifest: {man.path}")
    return man.exit_code


def cmd_check_gamma(args) -> int:
    spec = MotilitySpec.from_dict(_load_json(args.motility))
    s_range = (1e-2, 1e6)
    if args.range:
        lo, hi = (float(x) for x in args.range.split(","))
        s_range = (lo, hi)
    report = assumption_report(spec, s_range, args.samples, args.k)
    _dump(report)
    return 0


def cmd_eig(args) -> int:
    grid = Grid.from_dict(_load_json(args.grid))
    exact = analytic_mu1(grid)
    out = {"grid": grid.to_dict(), "analytic": exact}
    if args.numeric or exact is None:
        out["numeric"] = numeric_mu1(grid)
    out["mu1"] = exact if exact is not None else out["numeric"]
    _dump(out)
    return 0


def cmd_sweep(args) -> int:
    rows, path = harness.sweep(args.scenario, _load_json(args.grid), args.out, args.workers)
    print(path.read_text(), end="")
    print(f"aggregate: {path}", file=sys.stderr)
    return harness.EXIT_ERROR if any(r["error"] for r in rows) else harness.EXIT_OK


def cmd_report(args) -> int:
    from .report import summarize

    rows, text = summarize(args.manifest_dir, figures=not args.no_figures)
    print(text, end="")
    return 0


def cmd_list(args) -> int:
    for name in harness.scenario_names():
        sc = harness.load_scenario(name)
        print(f"{name}\t{sc.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kslab", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and its checks")
    p.add_argument("scenario", help="shipped scenario name or path to a scenario JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted-path override, e.g. motility.params.k=0.75")
    p.add_argument("--out", help=f"output directory (default ${harness.OUTPUT_ENV} or ./runs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check-gamma", help="sampled checks of the motility assumptions")
    p.add_argument("motility", help='e.g. \'{"kind": "power_law", "params": {"k": 0.5}}\'')
    p.add_argument("--range", help="sample range a,b (default 1e-2,1e6)")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--k", type=float, help="exponent tested for the growth condition")
    p.set_defaults(func=cmd_check_gamma)

    p = sub.add_parser("eig", help="first nonzero Neumann eigenvalue of a grid")
    p.add_argument("grid", help='e.g. \'{"geometry": "interval", "extents": [3.14159], "cells": [64]}\'')
    p.add_argument("--numeric", action="store_true", help="also run inverse iteration")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    p.add_argument("scenario")
    p.add_argument("--grid", required=True,
                   help='e.g. \'{"motility.params.k": [0.25, 0.5]}\' or a list of override maps')
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summary table and figures for finished runs")
    p.add_argument("manifest_dir")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("list", help="list shipped scenarios")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return harness.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
