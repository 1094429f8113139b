"""Command-line front end.

Exit codes: 0 on success, 1 when a validation tolerance fails, 2 on usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from ._version import __version__
from .config import ExperimentConfig, load_config
from .experiments import (
    monte_carlo_validate,
    run_fig1,
    run_fig2,
    run_fig3,
    run_keyrate,
    run_optimize,
    run_simulate,
)

_RUNNERS = {
    "fig1": run_fig1,
    "fig2": run_fig2,
    "fig3": run_fig3,
    "simulate": run_simulate,
    "keyrate": run_keyrate,
    "optimize": run_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvqkd",
        description="Estimator studies and finite-size key rates for "
                    "coherent-state CV-QKD over a Gaussian loss channel.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("fig1", "estimator standard deviations versus distance"),
        ("fig2", "optimized key rate versus distance for several block sizes"),
        ("fig3", "optimal protocol parameters versus distance"),
        ("validate", "Monte Carlo validation of the estimator variances"),
        ("simulate", "sample one session and write it to CSV"),
        ("keyrate", "key rates at the configured parameters"),
        ("optimize", "optimize (V_A, m/N) at one distance"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--convention", choices=["paper", "gaussian"],
                       help="confidence-quantile convention")
    return parser


def _effective_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.convention is not None:
        cfg.convention = args.convention
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
    except (OSError, ValueError) as exc:
        print(f"cvqkd: config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or cfg.out_dir

    if args.command == "validate":
        rows, ok = monte_carlo_validate(cfg, out_dir)
        n_fail = sum(1 for r in rows if r[-1] != "pass")
        print(f"validate: {len(rows) - n_fail}/{len(rows)} checks passed; "
              f"report in {out_dir}/validate_report.csv")
        return 0 if ok else 1

    path = _RUNNERS[args.command](cfg, out_dir)
    print(f"{args.command}: wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
