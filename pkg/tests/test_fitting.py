"""
Tests for least-squares parameter estimation, subsampling errors, sweeps and
the centre-point validation.
"""
import numpy as np
import pytest

from sme_corrfit.correlations.correlators import predict
from sme_corrfit.estimation import fitting
from sme_corrfit.estimation.empirical import CorrelationEstimate
from sme_corrfit.estimation.fitting import (
    ConfigurationData,
    FitProblem,
    least_squares_fit,
    parameter_sweep,
    subsample_errors,
    validate_sharp_approx,
)
from sme_corrfit.exceptions import BoundViolationError, FitConvergenceError, InvalidRequestError
from sme_corrfit.quantum.families import HZ, KHZ, get_family
from sme_corrfit.quantum.model import instantiate
from sme_corrfit.simulation.smesim import TrajectoryBatch

LOSSY_THETA = {"omega": 50 * KHZ, "kappa": 100 * KHZ, "eta": 0.5, "alpha0": 1.5}


def _lossy_family(n_bins=30):
    return get_family("lossy_oscillator", bin_width=1e-6, n_bins=n_bins, n_trunc=16)


def _problem(family, requests, free, known, name="a", **kwargs):
    """Problem with placeholder estimates; fill the values with with_values."""
    estimates = tuple(CorrelationEstimate(tuple(r), 0.0, 0.0, 1) for r in requests)
    return FitProblem(
        family=family,
        free=tuple(free),
        known=dict(known),
        configurations=(ConfigurationData(name, estimates),),
        **kwargs,
    )


def _exact(problem, truth):
    return problem.with_values(problem.predict(truth))


def _lossy_problem(free=("omega", "kappa"), n_bins=30):
    family = _lossy_family(n_bins)
    known = {k: v for k, v in LOSSY_THETA.items() if k not in free}
    problem = _problem(family, [[(0, k)] for k in range(n_bins)], free, known)
    return _exact(problem, {k: LOSSY_THETA[k] for k in free})


def test_exact_fit_driven_qubit(example2_theta):
    """Test 1: noise-free one-point data of the driven qubit pins all five parameters"""
    family = get_family("qubit_photodetection")
    problem = _problem(family, [[(0, k)] for k in range(21)], family.parameter_names, {})
    problem = _exact(problem, example2_theta)
    guess = {"Delta": 4 * KHZ, "Omega": 4 * KHZ, "gamma": 1 * KHZ, "theta": 500 * HZ, "eta": 0.7}
    result = least_squares_fit(problem, guess)
    assert result.converged
    for name, truth in example2_theta.items():
        assert abs(result.theta[name]) == pytest.approx(abs(truth), rel=1e-6)
    assert result.guess["eta"] == 0.7
    assert result.residual_norm < 1e-8 * np.linalg.norm(problem.data)


def test_fit_never_worse_than_truth():
    """Test 2: starting from the truth on noisy data, the fit lowers the residual"""
    problem = _lossy_problem()
    rng = np.random.default_rng(1)
    noisy = problem.with_values(problem.data * (1.0 + 0.01 * rng.standard_normal(problem.n_points)))
    truth = {"omega": LOSSY_THETA["omega"], "kappa": LOSSY_THETA["kappa"]}
    result = least_squares_fit(noisy, truth)
    assert result.residual_norm <= np.linalg.norm(noisy.residuals(truth)) + 1e-12
    assert result.chi2_reduced == pytest.approx(result.residual_norm ** 2 / (30 - 2))


def test_guess_checks():
    """Test 3: out-of-bounds and incomplete guesses are rejected before fitting"""
    problem = _lossy_problem(free=("kappa", "eta"))
    with pytest.raises(BoundViolationError):
        least_squares_fit(problem, {"kappa": 100 * KHZ, "eta": 1.2})
    with pytest.raises(KeyError):
        least_squares_fit(problem, {"kappa": 100 * KHZ})


def test_evaluation_budget():
    """Test 4: an exhausted budget raises, or returns an unconverged result on request"""
    problem = _lossy_problem()
    guess = {"omega": 40 * KHZ, "kappa": 120 * KHZ}
    with pytest.raises(FitConvergenceError):
        least_squares_fit(problem, guess, max_nfev=1)
    result = least_squares_fit(problem, guess, max_nfev=1, raise_on_failure=False)
    assert not result.converged


def test_multi_start():
    """Test 5: the lowest-cost converged run wins"""
    problem = _lossy_problem()
    guesses = [
        {"omega": 10 * KHZ, "kappa": 400 * KHZ},
        {"omega": 45 * KHZ, "kappa": 110 * KHZ},
    ]
    result = least_squares_fit(problem, guesses)
    assert result.theta["omega"] == pytest.approx(LOSSY_THETA["omega"], rel=1e-6)
    assert result.theta["kappa"] == pytest.approx(LOSSY_THETA["kappa"], rel=1e-6)
    with pytest.raises(KeyError):
        least_squares_fit(problem, [guesses[0], {"omega": 45 * KHZ}])


def test_degenerate_parameters_give_singular_jacobian():
    """Test 6: eta and alpha0 only enter the one-point mean as sqrt(eta) alpha0"""
    problem = _lossy_problem(free=("omega", "kappa", "eta", "alpha0"))
    guess = {"omega": 45 * KHZ, "kappa": 110 * KHZ, "eta": 0.4, "alpha0": 1.6}
    result = least_squares_fit(problem, guess, raise_on_failure=False)
    assert result.singular_jacobian


def test_identifiable_parameters():
    """Test 7: omega and kappa alone are recovered with a regular Jacobian"""
    problem = _lossy_problem()
    result = least_squares_fit(problem, {"omega": 40 * KHZ, "kappa": 120 * KHZ})
    assert not result.singular_jacobian
    assert result.theta["omega"] == pytest.approx(LOSSY_THETA["omega"], rel=1e-6)
    assert result.theta["kappa"] == pytest.approx(LOSSY_THETA["kappa"], rel=1e-6)
    # known parameters are carried into theta
    assert result.theta["alpha0"] == 1.5

    table = result.table(problem.family, truth=LOSSY_THETA)
    assert list(table["parameter"]) == ["omega", "kappa"]
    assert table.loc[0, "estimate"] == pytest.approx(50.0, rel=1e-6)
    assert table.loc[1, "guess"] == pytest.approx(120.0)
    assert table["relative_error"].max() < 1e-6
    assert set(result.as_dict()) >= {"theta", "std", "converged", "singular_jacobian", "residuals"}


def test_problem_validation():
    """Test 8: parameter names, overlaps, free set and data size are checked"""
    family = _lossy_family(4)
    requests = [[(0, k)] for k in range(4)]
    with pytest.raises(KeyError):
        _problem(family, requests, ["omega", "chi"], {})
    with pytest.raises(ValueError):
        _problem(family, requests, ["omega"], {"omega": 1.0})
    with pytest.raises(ValueError):
        _problem(family, requests, [], {})
    with pytest.raises(InvalidRequestError):
        _problem(family, [], ["omega"], {})

    short = _problem(family, requests[:1], ["omega", "kappa"], {"eta": 0.5, "alpha0": 1.0})
    with pytest.raises(InvalidRequestError):
        least_squares_fit(short, {"omega": KHZ, "kappa": KHZ})


def test_weighted_residuals():
    """Test 9: weighted residuals are divided by the SEM, which must be positive"""
    problem = _lossy_problem(n_bins=6)
    truth = {"omega": LOSSY_THETA["omega"], "kappa": LOSSY_THETA["kappa"]}
    sem = np.full(6, 0.01)
    shifted = problem.with_values(problem.data + 0.02, sem)
    weighted = FitProblem(
        family=shifted.family,
        free=shifted.free,
        known=shifted.known,
        configurations=shifted.configurations,
        weighted=True,
    )
    np.testing.assert_allclose(weighted.residuals(truth), 2.0, rtol=1e-8)
    with pytest.raises(InvalidRequestError):
        FitProblem(problem.family, problem.free, problem.known, problem.configurations, weighted=True).residuals(truth)


def test_configuration_scales_and_overrides():
    """Test 10: a configuration rescales or pins shared parameters"""
    config = ConfigurationData("b", (), scales={"alpha2": 1.02}, overrides={"eta": 0.2})
    theta = config.theta({"alpha2": 7.0, "eta": 0.1, "kappa2": 1.0})
    assert theta == pytest.approx({"alpha2": 7.14, "eta": 0.2, "kappa2": 1.0})


def _tiled_batches(problem, n_exp):
    """Every trajectory carries the exact values, so every subset gives the same estimates."""
    n_bins = problem.family.settings.n_bins
    row = np.zeros(n_bins)
    for est in problem.configurations[0].estimates:
        row[est.points[0][1]] = est.value
    values = np.tile(row[None, None, :], (n_exp, 1, 1))
    batch = TrajectoryBatch(values, ("X",), ("diffusive",), 1e-6, 0, 10, 1000, "0" * 16)
    return {"a": batch}


def test_subsample_identical_subsets():
    """Test 11: identical subsets give (numerically) zero spread"""
    problem = _lossy_problem(n_bins=12)
    guess = {"omega": 45 * KHZ, "kappa": 110 * KHZ}
    out = subsample_errors(problem, _tiled_batches(problem, 40), guess, n_subset=4)
    assert len(out.fits) == 4 and out.excluded == []
    for name in problem.free:
        assert out.std[name] <= 1e-6 * LOSSY_THETA[name]


def test_subsample_failures(monkeypatch):
    """Test 12: failed subsets are excluded; too many failures raise"""
    problem = _lossy_problem(n_bins=12)
    guess = {"omega": 45 * KHZ, "kappa": 110 * KHZ}
    batches = _tiled_batches(problem, 40)
    original = fitting._try_subset
    calls = []

    def one_fails(sub_problem, sub_guess):
        calls.append(1)
        if len(calls) == 2:
            return FitConvergenceError("forced")
        return original(sub_problem, sub_guess)

    monkeypatch.setattr(fitting, "_try_subset", one_fails)
    out = subsample_errors(problem, batches, guess, n_subset=4)
    assert out.excluded == [1]
    assert len(out.fits) == 3

    monkeypatch.setattr(fitting, "_try_subset", lambda p, g: FitConvergenceError("forced"))
    with pytest.raises(FitConvergenceError):
        subsample_errors(problem, batches, guess, n_subset=4)


def test_parameter_sweep():
    """Test 13: one row per (fraction, request) with the varied parameter in table units"""
    family = _lossy_family(4)
    requests = [[(0, k)] for k in range(4)]
    frame = parameter_sweep(family, LOSSY_THETA, requests, "kappa", [-0.1, 0.1])
    assert len(frame) == 8
    assert set(frame["parameter_value"].round(6)) == {90.0, 110.0}
    varied = instantiate(family, dict(LOSSY_THETA, kappa=1.1 * LOSSY_THETA["kappa"]))
    expected = predict(varied, requests)
    np.testing.assert_allclose(frame[frame["fraction"] == 0.1]["value"].to_numpy(), expected, rtol=1e-12)
    assert list(frame["last_bin"][:4]) == [0, 1, 2, 3]


def test_validate_sharp_approx():
    """Test 14: the centre-point check compares its deviation with the median SEM"""
    family = _lossy_family(8)
    model = instantiate(family, LOSSY_THETA)
    requests = [[(0, 0), (0, k)] for k in range(1, 8)]
    report = validate_sharp_approx(model, requests)
    assert report["n_requests"] == 7
    assert report["max_abs_diff"] > 0.0
    assert "acceptable" not in report

    loose = [CorrelationEstimate(tuple(r), 0.0, 1e6, 100) for r in requests]
    assert validate_sharp_approx(model, requests, loose)["acceptable"]
    tight = [CorrelationEstimate(tuple(r), 0.0, 1e-12, 100) for r in requests]
    assert not validate_sharp_approx(model, requests, tight)["acceptable"]
