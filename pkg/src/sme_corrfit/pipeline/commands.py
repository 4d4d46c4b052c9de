"""
Command-line entry point.

Usage:
    sme-corrfit simulate        --config configs/example2_qubit.json
    sme-corrfit correlate       --config ... [--batch batch_a.pt ...]
    sme-corrfit fit             --config ... [--batch batch_a.pt ...]
    sme-corrfit symmetry-check  --config ... [--strict]
    sme-corrfit gain            --config configs/vacuum.json [--batch ...]
    sme-corrfit pipeline        --config ...

Exit codes: 0 success, 2 invalid configuration, 3 fit did not converge (or a
symmetry claim failed under --strict), 1 any other error.
"""
import argparse
import json
import sys
from typing import List, Optional

from pydantic import ValidationError

from sme_corrfit.exceptions import CorrFitError, FitConvergenceError
from sme_corrfit.pipeline.config import apply_overrides, load_scenario
from sme_corrfit.pipeline.run_pipeline import (
    banner,
    correlate_scenario,
    fit_scenario,
    gain_scenario,
    load_batches,
    run_full_pipeline,
    simulate_scenario,
    symmetry_scenario,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FIT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sme-corrfit",
        description="Exact correlation functions and parameter estimation for continuously measured quantum systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, batches: bool = False) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Scenario JSON document")
        p.add_argument("--output-dir", default=None, help="Override output.directory")
        p.add_argument("--seed", type=int, default=None, help="Override simulation.seed")
        p.add_argument("--n-exp", type=int, default=None, help="Override simulation.n_exp")
        p.add_argument("--jobs", type=int, default=1, help="Parallel workers (joblib n_jobs)")
        if batches:
            p.add_argument("--batch", nargs="+", default=None,
                           help="Batch files, one per variant in config order (default: simulate outputs)")
        return p

    add("simulate", "Simulate trajectory batches")
    add("correlate", "Exact (and empirical) correlation table", batches=True)
    add("fit", "Fit free parameters with subsampled error bars", batches=True)
    strict = add("symmetry-check", "Check the parity argument for vanishing odd orders")
    strict.add_argument("--strict", action="store_true", help="Exit with code 3 if odd orders do not vanish")
    add("gain", "Calibrate the acquisition gain from a vacuum batch", batches=True)
    add("pipeline", "simulate -> correlate -> fit")
    return parser


def _run(args) -> int:
    cfg = apply_overrides(load_scenario(args.config), args.seed, args.n_exp, args.output_dir)

    if args.command == "pipeline":
        run_full_pipeline(cfg, n_jobs=args.jobs)
        return EXIT_OK

    banner(f"{args.command}: {cfg.name}")
    if args.command == "simulate":
        simulate_scenario(cfg, n_jobs=args.jobs)
    elif args.command == "correlate":
        batches = load_batches(cfg, args.batch) if args.batch else None
        correlate_scenario(cfg, batches)
    elif args.command == "fit":
        fit_scenario(cfg, load_batches(cfg, args.batch), n_jobs=args.jobs)
    elif args.command == "symmetry-check":
        reports = symmetry_scenario(cfg)
        if args.strict and not all(r["odd_orders_vanish"] for r in reports.values()):
            print("ERROR: odd-order correlations are not guaranteed to vanish")
            return EXIT_FIT
    elif args.command == "gain":
        gain_scenario(cfg, load_batches(cfg, args.batch))
    print("=" * 60)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"ERROR: invalid configuration {args.config}:\n{exc}")
        return EXIT_CONFIG
    except (json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"ERROR: cannot read configuration: {exc}")
        return EXIT_CONFIG
    except FitConvergenceError as exc:
        print(f"ERROR: {exc}")
        return EXIT_FIT
    except (CorrFitError, ValueError) as exc:
        print(f"ERROR: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
