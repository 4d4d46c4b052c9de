"""
Scenario steps: simulate, correlate, fit, symmetry check, gain calibration.

Each step reads a validated ScenarioConfig, prints its progress and writes its
artefacts into cfg.output.directory:

    batch_<variant>.pt      simulated trajectory batches
    correlations.csv        exact (and empirical) correlation values
    fit_report.json         fit result, subsampled std, diagnostics
    fit_table.csv           estimate +- std per free parameter
    plot_data.csv           bin time, empirical value, SEM, fitted curve
    sweep_data.csv          correlations while one parameter is varied
    symmetry_report.json    parity conditions and odd-order values
    gain.json               gain calibrated from a vacuum batch

Usage:
    python -m sme_corrfit.pipeline.run_pipeline <scenario.json>
"""
import dataclasses
import json
import os
import sys
from typing import Dict, Sequence

import pandas as pd

from sme_corrfit.correlations.correlators import BINNED_EXPM, predict
from sme_corrfit.correlations.symmetry import symmetry_check
from sme_corrfit.estimation.empirical import empirical_correlation, estimate_gain
from sme_corrfit.estimation.fitting import (
    least_squares_fit,
    parameter_sweep,
    subsample_errors,
    validate_sharp_approx,
)
from sme_corrfit.pipeline.config import ScenarioConfig, load_scenario
from sme_corrfit.pipeline.scenarios import (
    build_family,
    build_models,
    build_problem,
    resolve_requests,
    sim_config,
)
from sme_corrfit.simulation.batch_io import load_batch, save_batch
from sme_corrfit.simulation.smesim import TrajectoryBatch, simulate_batch, simulate_record


def banner(title: str):
    print("=" * 60)
    print(title)
    print("=" * 60)


def _write_json(data: dict, path: str):
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
    print(f"  Written: {path}")


def _output_dir(cfg: ScenarioConfig) -> str:
    os.makedirs(cfg.output.directory, exist_ok=True)
    return cfg.output.directory


def batch_path(cfg: ScenarioConfig, variant: str) -> str:
    return os.path.join(cfg.output.directory, f"batch_{variant}.pt")


def _label(points, names: Sequence[str]) -> str:
    return " ".join(f"{names[mu]}_{k}" for mu, k in points)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------

def simulate_scenario(cfg: ScenarioConfig, n_jobs: int = 1) -> Dict[str, str]:
    """Simulate one batch per variant; variant i uses seed + i."""
    _output_dir(cfg)
    family = build_family(cfg)
    models = build_models(cfg, family)
    base = sim_config(cfg)
    paths = {}
    for i, (name, model) in enumerate(models.items()):
        sim = dataclasses.replace(base, seed=base.seed + i)
        print(f"\nVariant '{name}': n_exp={sim.n_exp}, dt = Delta_t/{sim.substeps_per_bin}, seed={sim.seed}")
        if cfg.simulation.n_windows > 1:
            batch = simulate_record(model, sim, cfg.simulation.n_windows, n_jobs=n_jobs, verbose=True)
        else:
            batch = simulate_batch(model, sim, n_jobs=n_jobs, verbose=True)
        paths[name] = save_batch(batch, batch_path(cfg, name), verbose=True)
    return paths


def load_batches(cfg: ScenarioConfig, paths: Sequence[str] = None) -> Dict[str, TrajectoryBatch]:
    """Batches matched to variants in order; defaults to the simulate outputs."""
    models = build_models(cfg)
    names = [v.name for v in cfg.variants]
    if paths:
        if len(paths) != len(names):
            raise ValueError(f"expected {len(names)} batch file(s) (one per variant), got {len(paths)}")
    else:
        paths = [batch_path(cfg, n) for n in names]
    return {n: load_batch(p, models[n]) for n, p in zip(names, paths)}


def correlate_scenario(cfg: ScenarioConfig, batches: Dict[str, TrajectoryBatch] = None) -> pd.DataFrame:
    """Exact correlations per variant; empirical value and SEM when batches are given."""
    out_dir = _output_dir(cfg)
    family = build_family(cfg)
    models = build_models(cfg, family)
    requests = resolve_requests(cfg, family)
    frames = []
    for name, model in models.items():
        print(f"  Variant '{name}': {len(requests)} correlation value(s)")
        frame = pd.DataFrame({
            "variant": name,
            "request": [_label(r, family.detector_names) for r in requests],
            "order": [len(r) for r in requests],
            "last_bin": [r[-1][1] for r in requests],
            "time": [r[-1][1] * cfg.acquisition.bin_width for r in requests],
            "exact": predict(model, requests, BINNED_EXPM),
        })
        if cfg.fit.mode != BINNED_EXPM:
            frame[cfg.fit.mode] = predict(model, requests, cfg.fit.mode)
        if batches is not None:
            est = empirical_correlation(batches[name], requests)
            frame["empirical"] = [e.value for e in est]
            frame["sem"] = [e.sem for e in est]
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    path = os.path.join(out_dir, "correlations.csv")
    table.to_csv(path, index=False)
    print(f"  Written: {path}")
    return table


def fit_scenario(cfg: ScenarioConfig, batches: Dict[str, TrajectoryBatch], n_jobs: int = 1) -> dict:
    """
    Fit the free parameters to the empirical correlations of every variant.

    Raises:
        FitConvergenceError: the main fit or the subsampling did not converge
    """
    out_dir = _output_dir(cfg)
    family = build_family(cfg)
    requests = resolve_requests(cfg, family)
    estimates = {name: empirical_correlation(b, requests) for name, b in batches.items()}
    problem = build_problem(cfg, estimates, family)
    print(f"  {problem.n_points} data point(s), free parameters: {', '.join(problem.free)}")

    report = {"scenario": cfg.name, "family": cfg.family, "mode": cfg.fit.mode}
    if cfg.fit.mode != BINNED_EXPM:
        models = build_models(cfg, family)
        report["sharp_approx_validation"] = {
            name: validate_sharp_approx(models[name], requests, estimates[name]) for name in models
        }
        for name, check in report["sharp_approx_validation"].items():
            print(f"  Sharp approximation on '{name}': max rel. diff {check['max_rel_diff']:.2e}")

    result = least_squares_fit(problem, cfg.guesses(), n_jobs=n_jobs, max_nfev=cfg.fit.max_nfev, verbose=True)
    sub = subsample_errors(problem, batches, cfg.guess(), cfg.fit.n_subset, n_jobs=n_jobs, verbose=True)
    result.std = sub.std

    truth = cfg.theta_true()
    table = result.table(family, truth)
    table.to_csv(os.path.join(out_dir, "fit_table.csv"), index=False)
    print("\n" + table.to_string(index=False))

    report["fit"] = result.as_dict()
    report["truth"] = truth
    report["excluded_subsets"] = sub.excluded
    _write_json(report, os.path.join(out_dir, "fit_report.json"))

    fitted = problem.predict({k: result.theta[k] for k in problem.free})
    rows, i = [], 0
    for c in problem.configurations:
        for e in c.estimates:
            rows.append({
                "variant": c.name,
                "request": _label(e.points, family.detector_names),
                "order": e.order,
                "last_bin": e.points[-1][1],
                "time": e.points[-1][1] * cfg.acquisition.bin_width,
                "empirical": e.value,
                "sem": e.sem,
                "fitted": fitted[i],
            })
            i += 1
    path = os.path.join(out_dir, "plot_data.csv")
    pd.DataFrame(rows).to_csv(path, index=False)
    print(f"  Written: {path}")

    if cfg.sweep is not None:
        frames = [
            parameter_sweep(family, truth, requests, p, cfg.sweep.fractions, cfg.fit.mode)
            for p in cfg.sweep.parameters
        ]
        path = os.path.join(out_dir, "sweep_data.csv")
        pd.concat(frames, ignore_index=True).to_csv(path, index=False)
        print(f"  Written: {path}")
    return report


def symmetry_scenario(cfg: ScenarioConfig) -> dict:
    out_dir = _output_dir(cfg)
    reports = {}
    for name, model in build_models(cfg).items():
        rep = symmetry_check(model, orders=cfg.symmetry.orders, n_probe=cfg.symmetry.n_probe)
        status = "odd orders vanish" if rep.odd_orders_vanish else f"violated: {rep.violated or 'values'}"
        print(f"  Variant '{name}': {status}")
        reports[name] = rep.as_dict()
    _write_json(reports, os.path.join(out_dir, "symmetry_report.json"))
    return reports


def gain_scenario(cfg: ScenarioConfig, batches: Dict[str, TrajectoryBatch]) -> dict:
    out_dir = _output_dir(cfg)
    result = {}
    for name, batch in batches.items():
        for mu, (det, kind) in enumerate(zip(batch.detector_names, batch.detector_kinds)):
            if kind != "diffusive":
                continue
            gain, std = estimate_gain(batch, detector=mu)
            print(f"  Variant '{name}', detector {det}: G = {gain:.5f} +- {std:.5f}")
            result[f"{name}/{det}"] = {"gain": gain, "std": std, "n_exp": batch.n_exp}
    _write_json(result, os.path.join(out_dir, "gain.json"))
    return result


def run_full_pipeline(cfg: ScenarioConfig, n_jobs: int = 1) -> dict:
    """
    Steps:
    1. Simulate one batch per variant
    2. Exact and empirical correlation table
    3. Fit with subsampled error bars
    """
    banner(f"Scenario pipeline: {cfg.name}")

    print("\n[Step 1/3] Simulating trajectories...")
    simulate_scenario(cfg, n_jobs=n_jobs)

    print("\n[Step 2/3] Computing correlation functions...")
    batches = load_batches(cfg)
    correlate_scenario(cfg, batches)

    print("\n[Step 3/3] Fitting parameters...")
    report = fit_scenario(cfg, batches, n_jobs=n_jobs)

    print("\n" + "=" * 60)
    print(f"Pipeline complete! Results in: {cfg.output.directory}")
    print("=" * 60)
    return report


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("usage: python -m sme_corrfit.pipeline.run_pipeline <scenario.json>")
        sys.exit(2)
    run_full_pipeline(load_scenario(sys.argv[1]))
