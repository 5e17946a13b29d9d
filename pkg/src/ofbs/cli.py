"""Command-line front end: a thin client of the run pipelines.

Exit codes:
    0   success (verify: every metric passed)
    1   verify ran but at least one metric failed
    2   configuration or validation problem (missing file, bad key, spectrum
        gate, I/O)
    3   numerical failure (quadrature non-convergence, indefinite covariance)

Every command is deterministic given (config, seed): re-runs write identical
files.  Wall-clock timestamps go only to the `run.log` sidecar.
"""

import argparse
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from .config import config_hash, load_config
from .errors import ConfigError, DomainError, NumericError
from .runs import covariance_csv, run_cov, run_simulate, run_verify, write_verify_outputs

EXIT_OK = 0
EXIT_METRIC = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ofbs",
        description="Simulate the martingale-difference approximation of the "
        "operator fractional Brownian sheet and verify its convergence diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("simulate", "simulate the grid ensemble and write binary + CSV outputs"),
        ("verify", "run the convergence metric battery and write a report"),
        ("cov", "write the limit-field covariance blocks as CSV"),
    )
    for name, help_text in specs:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="flat key-value config file")
        cmd.add_argument("--out", required=True, help="output directory (created if missing)")
        cmd.add_argument("--jobs", type=int, default=1, help="worker threads for replicate chunks")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _log(out, command, started, rc):
    # the one file allowed to differ between identical runs
    with open(out / "run.log", "a") as fh:
        stamp = datetime.now(timezone.utc).isoformat()
        fh.write(f"{stamp} {command} exit={rc} elapsed={time.perf_counter() - started:.3f}s\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            result = run_simulate(cfg, out_dir=out, jobs=args.jobs)
            if not args.quiet:
                print(f"config {result.config_hash}")
                for name in result.files:
                    print(f"wrote {name}")
            rc = EXIT_OK
        elif args.command == "cov":
            tensor = run_cov(cfg)
            path = out / "covariance.csv"
            with open(path, "w") as fh:
                fh.write(covariance_csv(tensor))
            if not args.quiet:
                print(f"config {config_hash(cfg)}")
                print(f"wrote {path}")
            rc = EXIT_OK
        else:
            report = run_verify(cfg, jobs=args.jobs)
            files = write_verify_outputs(report, cfg, out)
            if not args.quiet:
                for name in files:
                    print(f"wrote {name}")
                print(f"verify: {'PASS' if report.passed else 'FAIL'}")
            if not report.passed:
                for row in report.failures():
                    n = "" if row.n is None else f" n={row.n}"
                    print(
                        f"FAIL {row.metric}{n}: value {row.value:.6g} > tolerance {row.tolerance:.6g}",
                        file=sys.stderr,
                    )
            rc = EXIT_OK if report.passed else EXIT_METRIC
    except (ConfigError, DomainError) as exc:
        print(f"ofbs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"ofbs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"ofbs: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _log(out, args.command, started, rc)
    return rc


if __name__ == "__main__":
    sys.exit(main())
