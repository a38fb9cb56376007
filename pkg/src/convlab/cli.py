"""Command line front end.

Three verbs:

* ``convlab analyze --config <file> [--out <path>] [--seed <int>]``
* ``convlab check-theorems [--model <name>]* [--seed <int>] [--out <path>]``
* ``convlab cutlocus --model <name> --point <coords> --out <path>``

Exit codes: 0 on completion (whatever the mathematical verdicts),
2 on configuration errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (BadParams, ConfigError, NoConvergence, NonFiniteState,
                     OracleMismatch, UnknownModel)
from .models import model_names
from .reports import (AnalysisConfig, cutlocus_csv, load_config,
                      run_analyze, run_check_theorems, run_cutlocus)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="convlab",
        description="Convexity and injectivity radii on built-in "
                    "Riemannian manifolds.")
    sub = parser.add_subparsers(dest="verb", required=True)

    pa = sub.add_parser("analyze",
                        help="per-point radii, conditions and reports")
    pa.add_argument("--config", required=True, help="JSON config file")
    pa.add_argument("--out", help="extra JSON (or .csv) output path")
    pa.add_argument("--seed", type=int, help="override the config seed")

    pc = sub.add_parser("check-theorems",
                        help="consistency suite over built-in models")
    pc.add_argument("--model", action="append", default=[],
                    help="model name (repeatable; default: all)")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", help="write the suite report to a file")

    pl = sub.add_parser("cutlocus",
                        help="per-direction cut parameters around a point")
    pl.add_argument("--model", required=True,
                    help=f"one of {model_names()}")
    pl.add_argument("--point", required=True,
                    help="comma-separated chart coordinates")
    pl.add_argument("--out", required=True,
                    help="output path (.json or .csv)")
    pl.add_argument("--params", help="model params as inline JSON")
    pl.add_argument("--bound", type=float, default=10.0)
    pl.add_argument("--seed", type=int, default=0)
    return parser


def _emit(doc, path):
    if path.endswith(".csv"):
        text = cutlocus_csv(doc)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _cmd_analyze(args):
    config = load_config(args.config)
    if args.seed is not None:
        raw = dict(config.raw)
        raw["seed"] = args.seed
        config = AnalysisConfig.from_dict(raw)
    if args.out:
        fmt = "csv" if args.out.endswith(".csv") else "json"
        config.outputs.append({"path": args.out, "format": fmt})
    doc = run_analyze(config)
    summary = doc["summary"]
    print(f"analyzed {summary['n_points']} point(s) on "
          f"{config.model}: lattice_ok={summary['lattice_ok']} "
          f"berger_satisfied={summary['berger_satisfied']}")
    for c, statuses in summary["conditions"].items():
        print(f"condition {c}: {', '.join(statuses)}")
    if not config.outputs:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        print()
    return EXIT_OK


def _cmd_check_theorems(args):
    doc = run_check_theorems(args.model or None, seed=args.seed)
    for row in doc["suite"]:
        state = "pass" if row["passed"] else "FAIL"
        print(f"[{state}] {row['model']}: {row['criterion']}")
    s = doc["summary"]
    print(f"{s['passed']}/{s['n_checks']} checks passed")
    if args.out:
        _emit(doc, args.out)
    return EXIT_OK


def _cmd_cutlocus(args):
    try:
        point = [float(v) for v in args.point.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --point {args.point!r}: {exc}") from exc
    params = None
    if args.params:
        try:
            params = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad --params: {exc}") from exc
    doc = run_cutlocus(args.model, point, params=params, bound=args.bound,
                       seed=args.seed)
    _emit(doc, args.out)
    s = doc["summary"]
    i_est = s["injectivity_estimate"]
    print(f"cut locus scan written to {args.out}; injectivity estimate "
          f"{i_est if not s['exceeds_bound'] else f'>= {args.bound:g}'}")
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "analyze":
            return _cmd_analyze(args)
        if args.verb == "check-theorems":
            return _cmd_check_theorems(args)
        return _cmd_cutlocus(args)
    except (ConfigError, UnknownModel, BadParams) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergence, OracleMismatch, NonFiniteState) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
