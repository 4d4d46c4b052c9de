"""
Least-squares estimation of model parameters from correlation estimates.

A FitProblem collects one or more acquisition configurations of the same
family. Every configuration carries its own estimates and may rescale or pin
parameters (e.g. a second run with the two-photon drive 2% stronger), while
the free parameters are shared. Residuals are data - prediction, unweighted
unless `weighted` is set (then divided by the SEM).

The optimiser is Levenberg-Marquardt on transformed coordinates
u = transform(value / scale), so positive rates and efficiencies stay inside
their domains without explicit bounds.
"""
import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import least_squares

from sme_corrfit.correlations.correlators import BINNED_EXPM, SHARP_APPROX, predict
from sme_corrfit.estimation.empirical import CorrelationEstimate, estimates_from_batches, partition_batch
from sme_corrfit.exceptions import CorrFitError, FitConvergenceError, InvalidRequestError
from sme_corrfit.quantum.model import ConcreteModel, ModelFamily, instantiate
from sme_corrfit.simulation.smesim import TrajectoryBatch

FTOL = 1e-10
DIFF_STEP = 1e-6
# column-normalised singular value ratio below which the Jacobian counts as singular
JAC_RCOND = 1e-4


@dataclass(frozen=True)
class ConfigurationData:
    """
    Estimates measured in one acquisition configuration.

    Args:
        scales: multipliers applied to shared parameters in this configuration
        overrides: parameter values pinned in this configuration
    """
    name: str
    estimates: Tuple[CorrelationEstimate, ...]
    scales: Dict[str, float] = field(default_factory=dict)
    overrides: Dict[str, float] = field(default_factory=dict)

    @property
    def requests(self) -> List[Tuple[Tuple[int, int], ...]]:
        return [e.points for e in self.estimates]

    def theta(self, shared: Mapping[str, float]) -> Dict[str, float]:
        theta = dict(shared)
        for name, factor in self.scales.items():
            theta[name] = theta[name] * factor
        theta.update(self.overrides)
        return theta


@dataclass(frozen=True)
class FitProblem:
    family: ModelFamily
    free: Tuple[str, ...]
    known: Dict[str, float]
    configurations: Tuple[ConfigurationData, ...]
    mode: str = BINNED_EXPM
    weighted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        object.__setattr__(self, "configurations", tuple(self.configurations))
        names = set(self.family.parameter_names)
        unknown = (set(self.free) | set(self.known)) - names
        if unknown:
            raise KeyError(f"unknown parameters for '{self.family.name}': {sorted(unknown)}")
        overlap = set(self.free) & set(self.known)
        if overlap:
            raise ValueError(f"parameters both free and known: {sorted(overlap)}")
        if not self.free:
            raise ValueError("at least one free parameter is required")
        if not self.configurations or not any(c.estimates for c in self.configurations):
            raise InvalidRequestError("a fit needs at least one correlation estimate")

    @property
    def n_points(self) -> int:
        return sum(len(c.estimates) for c in self.configurations)

    @property
    def data(self) -> np.ndarray:
        return np.array([e.value for c in self.configurations for e in c.estimates])

    @property
    def sem(self) -> np.ndarray:
        return np.array([e.sem for c in self.configurations for e in c.estimates])

    def full_theta(self, free_values: Mapping[str, float]) -> Dict[str, float]:
        theta = dict(self.family.defaults)
        theta.update(self.known)
        theta.update(free_values)
        return theta

    def to_internal(self, free_values: Mapping[str, float]) -> np.ndarray:
        u = []
        for name in self.free:
            spec = self.family.spec(name)
            spec.check(free_values[name])
            u.append(spec.to_internal(free_values[name]))
        return np.array(u)

    def from_internal(self, u: Sequence[float]) -> Dict[str, float]:
        return {name: self.family.spec(name).from_internal(x) for name, x in zip(self.free, u)}

    def models(self, theta: Mapping[str, float]) -> List[ConcreteModel]:
        return [instantiate(self.family, c.theta(theta)) for c in self.configurations]

    def predict(self, theta: Mapping[str, float]) -> np.ndarray:
        """Exact values for every estimate, configuration by configuration."""
        theta = self.full_theta(theta)
        out = []
        for config, model in zip(self.configurations, self.models(theta)):
            out.append(predict(model, config.requests, self.mode))
        return np.concatenate(out)

    def residuals(self, theta: Mapping[str, float]) -> np.ndarray:
        r = self.data - self.predict(theta)
        if self.weighted:
            sem = self.sem
            if np.any(~np.isfinite(sem)) or np.any(sem <= 0):
                raise InvalidRequestError("weighted fits need positive finite SEMs")
            r = r / sem
        return r

    def with_estimates(self, estimates: Sequence[Sequence[CorrelationEstimate]]) -> "FitProblem":
        """Same problem with new estimates, one list per configuration."""
        configs = tuple(
            dataclasses.replace(c, estimates=tuple(e)) for c, e in zip(self.configurations, estimates)
        )
        return dataclasses.replace(self, configurations=configs)

    def with_values(self, values: Sequence[float], sem: Sequence[float] = None) -> "FitProblem":
        """Same requests with the estimate values replaced (flat, in configuration order)."""
        values = np.asarray(values, dtype=float)
        sem = np.zeros_like(values) if sem is None else np.asarray(sem, dtype=float)
        out, i = [], 0
        for c in self.configurations:
            out.append([
                dataclasses.replace(e, value=float(values[i + j]), sem=float(sem[i + j]))
                for j, e in enumerate(c.estimates)
            ])
            i += len(c.estimates)
        return self.with_estimates(out)


@dataclass
class FitResult:
    theta: Dict[str, float]
    free: Tuple[str, ...]
    residuals: np.ndarray
    cost: float
    chi2_reduced: float
    converged: bool
    iterations: int
    singular_jacobian: bool
    message: str = ""
    std: Dict[str, float] = field(default_factory=dict)
    guess: Dict[str, float] = field(default_factory=dict)

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "free": list(self.free),
            "std": self.std,
            "guess": self.guess,
            "cost": self.cost,
            "residual_norm": self.residual_norm,
            "chi2_reduced": self.chi2_reduced,
            "converged": self.converged,
            "iterations": self.iterations,
            "singular_jacobian": self.singular_jacobian,
            "message": self.message,
            "residuals": [float(r) for r in self.residuals],
        }

    def table(self, family: ModelFamily, truth: Mapping[str, float] = None) -> pd.DataFrame:
        """Estimates and std of the free parameters in table units (value / unit scale)."""
        rows = []
        for name in self.free:
            spec = family.spec(name)
            row = {
                "parameter": name,
                "unit": spec.unit,
                "guess": self.guess.get(name, np.nan) / spec.scale,
                "estimate": self.theta[name] / spec.scale,
                "std": self.std.get(name, np.nan) / spec.scale,
            }
            if truth is not None and name in truth:
                row["true"] = truth[name] / spec.scale
                row["relative_error"] = abs(self.theta[name] - truth[name]) / max(abs(truth[name]), 1e-300)
            rows.append(row)
        return pd.DataFrame(rows)


def _fit_once(problem: FitProblem, guess: Mapping[str, float], max_nfev: Optional[int]) -> FitResult:
    u0 = problem.to_internal(guess)
    p = len(problem.free)
    n = problem.n_points
    if n < p:
        raise InvalidRequestError(f"{n} data points cannot determine {p} parameters")

    def fun(u):
        return problem.residuals(problem.from_internal(u))

    res = least_squares(
        fun,
        u0,
        method="lm",
        x_scale="jac",
        ftol=FTOL,
        xtol=FTOL,
        gtol=FTOL,
        diff_step=DIFF_STEP,
        max_nfev=max_nfev or 200 * (p + 1),
    )
    free_values = problem.from_internal(res.x)
    dof = max(n - p, 1)
    return FitResult(
        theta=problem.full_theta(free_values),
        free=problem.free,
        residuals=np.asarray(res.fun),
        cost=float(res.cost),
        chi2_reduced=float(np.sum(res.fun ** 2) / dof),
        converged=res.status > 0,
        iterations=int(res.nfev),
        singular_jacobian=_rank_deficient(np.asarray(res.jac)),
        message=str(res.message),
        guess={k: float(guess[k]) for k in problem.free},
    )


def _rank_deficient(jac: np.ndarray) -> bool:
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0.0):
        return True
    s = np.linalg.svd(jac / norms, compute_uv=False)
    return bool(s[-1] < JAC_RCOND * s[0])


def _try_fit(problem: FitProblem, guess: Mapping[str, float], max_nfev: Optional[int]):
    try:
        return _fit_once(problem, guess, max_nfev)
    except CorrFitError as exc:
        return exc


def least_squares_fit(
    problem: FitProblem,
    guess,
    n_jobs: int = 1,
    max_nfev: Optional[int] = None,
    raise_on_failure: bool = True,
    verbose: bool = False,
) -> FitResult:
    """
    Fit the free parameters of problem.

    Args:
        guess: mapping of free-parameter values, or a list of such mappings
            for a multi-start fit (lowest cost among converged runs wins)
        raise_on_failure: raise FitConvergenceError when no run converges,
            otherwise return the best run with converged=False

    Raises:
        BoundViolationError: a guess lies outside the parameter bounds
        FitConvergenceError: no run converged within max_nfev evaluations
    """
    guesses = [guess] if isinstance(guess, Mapping) else list(guess)
    for g in guesses:
        missing = [name for name in problem.free if name not in g]
        if missing:
            raise KeyError(f"guess is missing free parameters {missing}")
        problem.to_internal(g)

    if len(guesses) == 1:
        runs = [_fit_once(problem, guesses[0], max_nfev)]
    else:
        runs = Parallel(n_jobs=n_jobs)(delayed(_try_fit)(problem, g, max_nfev) for g in guesses)
    results = [r for r in runs if isinstance(r, FitResult)]
    if not results:
        raise FitConvergenceError(f"all {len(guesses)} starts failed: {runs[0]}")

    converged = [r for r in results if r.converged]
    best = min(converged or results, key=lambda r: r.cost)
    if verbose:
        print(f"  Fit: {len(converged)}/{len(guesses)} start(s) converged, "
              f"cost={best.cost:.4e}, nfev={best.iterations}")
        if best.singular_jacobian:
            print("  WARNING: Jacobian at the optimum is rank deficient")
    if not best.converged and raise_on_failure:
        raise FitConvergenceError(f"fit did not converge: {best.message}")
    return best


@dataclass
class SubsampleResult:
    std: Dict[str, float]
    fits: List[FitResult]
    excluded: List[int]


def subsample_errors(
    problem: FitProblem,
    batches: Mapping[str, TrajectoryBatch],
    guess: Mapping[str, float],
    n_subset: int = 10,
    n_jobs: int = 1,
    verbose: bool = False,
) -> SubsampleResult:
    """
    Standard deviation of the full-data estimates by subsampling.

    Each configuration's batch is split into n_subset contiguous groups; the
    problem is refit on every group and std_p = std(ddof=1) / sqrt(n_subset).
    Failed subset fits are excluded and reported.

    Raises:
        FitConvergenceError: fewer than half of the subset fits succeeded
    """
    parts = {c.name: partition_batch(batches[c.name], n_subset) for c in problem.configurations}
    requests = {c.name: c.requests for c in problem.configurations}
    subset_problems = []
    for i in range(n_subset):
        est = estimates_from_batches({name: p[i] for name, p in parts.items()}, requests)
        subset_problems.append(problem.with_estimates([est[c.name] for c in problem.configurations]))

    runs = Parallel(n_jobs=n_jobs)(delayed(_try_subset)(sp_, guess) for sp_ in subset_problems)

    fits, excluded = [], []
    for i, r in enumerate(runs):
        if isinstance(r, FitResult) and r.converged:
            fits.append(r)
        else:
            excluded.append(i)
    if verbose:
        print(f"  Subsampling: {len(fits)}/{n_subset} subset fits succeeded")
        if excluded:
            print(f"  Excluded subsets: {excluded}")
    if len(fits) < max(2, (n_subset + 1) // 2):
        raise FitConvergenceError(f"only {len(fits)} of {n_subset} subset fits succeeded")

    std = {}
    for name in problem.free:
        values = np.array([f.theta[name] for f in fits])
        std[name] = float(values.std(ddof=1) / np.sqrt(n_subset))
    return SubsampleResult(std=std, fits=fits, excluded=excluded)


def _try_subset(problem: FitProblem, guess: Mapping[str, float]):
    try:
        return least_squares_fit(problem, guess, raise_on_failure=False)
    except CorrFitError as exc:
        return exc


def parameter_sweep(
    family: ModelFamily,
    theta: Mapping[str, float],
    requests: Sequence[Sequence[Tuple[int, int]]],
    parameter: str,
    fractions: Sequence[float],
    mode: str = BINNED_EXPM,
) -> pd.DataFrame:
    """
    Exact correlations while `parameter` is scaled by (1 + fraction) and all
    other parameters are held constant.
    """
    base = family.as_dict(theta)
    spec = family.spec(parameter)
    rows = []
    for fraction in fractions:
        varied = dict(base)
        varied[parameter] = base[parameter] * (1.0 + fraction)
        model = instantiate(family, varied)
        values = predict(model, requests, mode)
        for req, value in zip(requests, values):
            rows.append({
                "parameter": parameter,
                "fraction": float(fraction),
                "parameter_value": varied[parameter] / spec.scale,
                "request": " ".join(f"{mu}:{k}" for mu, k in req),
                "last_bin": int(req[-1][1]),
                "value": float(value),
            })
    return pd.DataFrame(rows)


def validate_sharp_approx(
    model: ConcreteModel,
    requests: Sequence[Sequence[Tuple[int, int]]],
    estimates: Sequence[CorrelationEstimate] = None,
) -> dict:
    """
    Compare the centre-point approximation with the exact binned values.

    The approximation is acceptable when its largest deviation is below the
    median statistical error of the supplied estimates.
    """
    exact = predict(model, requests, BINNED_EXPM)
    approx = predict(model, requests, SHARP_APPROX)
    diff = np.abs(approx - exact)
    scale = np.maximum(np.abs(exact), 1e-300)
    report = {
        "n_requests": len(requests),
        "max_abs_diff": float(diff.max()),
        "max_rel_diff": float((diff / scale).max()),
    }
    if estimates:
        sems = np.array([e.sem for e in estimates], dtype=float)
        median_sem = float(np.nanmedian(sems))
        report["median_sem"] = median_sem
        report["acceptable"] = bool(report["max_abs_diff"] < median_sem)
    return report
