"""Command-line entry point: ``ksme run | bench | validate-moments``.

Exit codes: 0 success, 2 configuration error, 3 too many numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, NumericalError
from .harness import TRACKERS, load_config, parse_config, run_complexity_bench, run_scenario, validate_moments

log = logging.getLogger("kernel_sme")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _trackers(text: str):
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [t for t in names if t not in TRACKERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown tracker(s) {bad}; choose from {', '.join(TRACKERS)}")
    return names


def _counts(text: str):
    try:
        return [int(c) for c in text.split(",") if c.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _config(args, **overrides):
    if args.scenario:
        return load_config(args.scenario, **overrides)
    return parse_config("", **overrides)


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config = _config(args, seed=args.seed, trackers=args.trackers, runs=args.runs, horizon=args.horizon)
    report = run_scenario(config, workers=args.workers)
    _emit(report.to_csv() if args.format == "csv" else report.to_json() + "\n", args.out)
    for tracker, failures in report.failures.items():
        for run, message in failures:
            log.warning("%s failed in run %d: %s", tracker, run, message)
    if report.failed():
        log.error("%.1f%% of runs failed for at least one tracker", 100 * report.failure_fraction())
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _config(args, seed=args.seed)
    result = run_complexity_bench(config, args.counts, repeats=args.repeats)
    if args.format == "csv":
        text = result.to_csv()
    else:
        text = json.dumps({"rows": [list(r) for r in result.rows], "slope": result.slope}, indent=2) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    rows = list(
        validate_moments(args.cases, args.samples, seed=args.seed or 0, correlated_prior=args.correlated_prior)
    )
    if args.format == "csv":
        keys = list(rows[0])
        text = ",".join(keys) + "\n" + "".join(",".join(f"{r[k]:.4g}" if isinstance(r[k], float) else str(r[k]) for k in keys) + "\n" for r in rows)
    else:
        text = json.dumps(rows, indent=2) + "\n"
    _emit(text, args.out)
    worst = max(max(v for k, v in r.items() if k.startswith("max_z")) for r in rows)
    log.info("largest |closed form - MC| / SE: %.2f", worst)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksme", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_format="csv"):
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides run.seed)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=default_format)

    run = sub.add_parser("run", help="run a scenario file and report mean OSPA per step")
    run.add_argument("scenario", nargs="?", help="scenario file (default: built-in 8-target scenario)")
    common(run)
    run.add_argument("--trackers", type=_trackers, default=None)
    run.add_argument("--runs", type=int, default=None)
    run.add_argument("--horizon", type=int, default=None)
    run.add_argument("--workers", type=int, default=None, help="worker processes (capped by KSME_THREADS)")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="time the measurement update against the number of targets")
    bench.add_argument("scenario", nargs="?")
    common(bench)
    bench.add_argument("--counts", type=_counts, default=[5, 10, 20, 40])
    bench.add_argument("--repeats", type=int, default=9)
    bench.set_defaults(func=cmd_bench)

    val = sub.add_parser("validate-moments", help="closed-form vs Monte Carlo moments on random configurations")
    common(val)
    val.add_argument("--cases", type=int, default=20)
    val.add_argument("--samples", type=int, default=1_000_000)
    val.add_argument("--correlated-prior", action="store_true", help="full priors, exact cross-target covariance")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s %s", exc, exc.diagnostics)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
