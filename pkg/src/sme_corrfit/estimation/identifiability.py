"""
Practical identifiability of a fit problem.

Two probes around a known parameter point theta_true:

    exact   fit the noise-free exact values from guesses perturbed by
            +-perturbation (alternating signs); report the relative recovery error
    noisy   fit n_noisy copies of the exact values with multiplicative Gaussian
            noise (sigma_i = level |C_i|), starting at theta_true; report the
            relative dispersion of the estimates

A parameter is flagged when max(recovery error, dispersion) exceeds
10 x noise level.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping

import numpy as np

from sme_corrfit.estimation.fitting import FitProblem, FitResult, least_squares_fit
from sme_corrfit.exceptions import CorrFitError

FLAG_FACTOR = 10.0


@dataclass
class IdentifiabilityReport:
    noise_level: float
    recovery_error: Dict[str, float] = field(default_factory=dict)
    dispersion: Dict[str, float] = field(default_factory=dict)
    flagged: List[str] = field(default_factory=list)
    exact_fit: FitResult = None
    n_noisy_ok: int = 0

    @property
    def identifiable(self) -> bool:
        return not self.flagged

    def as_dict(self) -> dict:
        return {
            "noise_level": self.noise_level,
            "recovery_error": self.recovery_error,
            "dispersion": self.dispersion,
            "flagged": self.flagged,
            "n_noisy_ok": self.n_noisy_ok,
            "singular_jacobian": bool(self.exact_fit.singular_jacobian) if self.exact_fit else None,
        }


def _perturbed_guess(problem: FitProblem, theta_true: Mapping[str, float], perturbation: float) -> Dict[str, float]:
    guess = {}
    for i, name in enumerate(problem.free):
        spec = problem.family.spec(name)
        sign = 1.0 if i % 2 == 0 else -1.0
        value = theta_true[name]
        candidate = value * (1.0 + sign * perturbation) if value != 0.0 else sign * perturbation * spec.scale
        if not spec.lower < candidate < spec.upper:
            bound = spec.upper if candidate >= spec.upper else spec.lower
            candidate = 0.5 * (value + bound)
        guess[name] = candidate
    return guess


def _relative(problem: FitProblem, name: str, estimate: float, truth: float) -> float:
    ref = abs(truth) if truth != 0.0 else problem.family.spec(name).scale
    return abs(estimate - truth) / ref


def identifiability_probe(
    problem: FitProblem,
    theta_true: Mapping[str, float],
    noise_level: float,
    n_noisy: int = 5,
    perturbation: float = 0.2,
    seed: int = 0,
    verbose: bool = False,
) -> IdentifiabilityReport:
    """
    Run the exact and noisy probes on the requests of `problem`.

    Args:
        theta_true: values of (at least) the free parameters
        noise_level: relative noise of the noisy probe (required, no default)
    """
    if noise_level <= 0:
        raise ValueError("noise_level must be positive")
    truth = problem.full_theta({k: theta_true[k] for k in problem.free})
    exact = problem.predict(truth)
    report = IdentifiabilityReport(noise_level=noise_level)

    exact_problem = problem.with_values(exact)
    guess = _perturbed_guess(problem, truth, perturbation)
    fit = least_squares_fit(exact_problem, guess, raise_on_failure=False)
    report.exact_fit = fit
    for name in problem.free:
        report.recovery_error[name] = _relative(problem, name, fit.theta[name], truth[name])

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    estimates = []
    for _ in range(n_noisy):
        noisy = exact * (1.0 + noise_level * rng.standard_normal(exact.size))
        start = {k: truth[k] for k in problem.free}
        try:
            r = least_squares_fit(problem.with_values(noisy), start, raise_on_failure=False)
        except CorrFitError:
            continue
        estimates.append([r.theta[name] for name in problem.free])
    report.n_noisy_ok = len(estimates)

    if len(estimates) >= 2:
        values = np.array(estimates)
        for i, name in enumerate(problem.free):
            ref = abs(truth[name]) if truth[name] != 0.0 else problem.family.spec(name).scale
            report.dispersion[name] = float(values[:, i].std(ddof=1) / ref)
    else:
        report.dispersion = {name: float("nan") for name in problem.free}

    threshold = FLAG_FACTOR * noise_level
    for name in problem.free:
        worst = max(report.recovery_error[name], np.nan_to_num(report.dispersion[name], nan=np.inf))
        if worst > threshold:
            report.flagged.append(name)
    if verbose:
        print(f"  Identifiability: flagged {report.flagged or 'none'} "
              f"(threshold {threshold:.2e}, {report.n_noisy_ok}/{n_noisy} noisy fits)")
    return report
