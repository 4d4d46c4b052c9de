"""
Generating-functional consistency: derivatives of Z(j) from the tilted
evolution reproduce the filtered correlation functions.
"""
import numpy as np
import pytest

from sme_corrfit.correlations.correlators import FILTERED_ODE, CorrelationRequest, filtered_correlation
from sme_corrfit.correlations.filters import FilterSpec, bin_filter
from sme_corrfit.correlations.tilted import tilted_evolution
from sme_corrfit.exceptions import InvalidRequestError
from sme_corrfit.quantum.lindblad import OdeSolverConfig
from sme_corrfit.quantum.model import DIFFUSIVE, JUMP, ConcreteModel, DetectorSpec
from sme_corrfit.quantum.operators import fock_dm, make_qubit_ops

TIGHT = OdeSolverConfig(rtol=1e-12, atol=1e-14)


def _Z(m, sources, T=None):
    return tilted_evolution(m, sources, T=T, cfg=TIGHT)[1]


def _richardson(difference, h):
    """Remove the O(h^2) error of a central difference."""
    return (4.0 * difference(0.5 * h) - difference(h)) / 3.0


def _first_difference(m, mu, f, h):
    def central(step):
        return (_Z(m, [(mu, f, step)]) - _Z(m, [(mu, f, -step)])) / (2 * step)
    return _richardson(central, h)


def _mixed_difference(m, p1, p2, h):
    (mu1, f1), (mu2, f2) = p1, p2

    def central(step):
        total = 0.0
        for s1 in (1, -1):
            for s2 in (1, -1):
                total += s1 * s2 * _Z(m, [(mu1, f1, s1 * step), (mu2, f2, s2 * step)])
        return total / (4 * step * step)
    return _richardson(central, h)


def _filtered(m, points):
    return filtered_correlation(m, CorrelationRequest(tuple(points), FILTERED_ODE), cfg=TIGHT)


def _mixed_model():
    """Driven qubit with photodetection of its decay and homodyne detection of dephasing."""
    sx, sz, sm = make_qubit_ops()
    L1 = np.sqrt(1.0) * sm
    L2 = np.sqrt(0.3) * sz
    dets = (
        DetectorSpec("counts", JUMP, L1, 0.8, 0.5, 6, dark_rate=0.2),
        DetectorSpec("phase", DIFFUSIVE, L2, 0.6, 0.5, 6, gain=1.0),
    )
    return ConcreteModel(H=0.9 * sx + 0.2 * sz, jumps=(L1, L2), detectors=dets, rho0=fock_dm(2, 1))


def test_zero_source_preserves_trace(decay_qubit, lossy):
    """Test 1: with j = 0 the generating functional is one"""
    assert _Z(decay_qubit(omega=1.0), [], T=2.0) == pytest.approx(1.0, abs=1e-10)
    assert _Z(lossy(), [], T=1.5) == pytest.approx(1.0, abs=1e-10)
    rho, Z = tilted_evolution(decay_qubit(), [], T=0.0)
    assert Z == pytest.approx(1.0)
    np.testing.assert_allclose(rho, fock_dm(2, 1))


def test_first_derivative_jump(decay_qubit):
    """Test 2: dZ/dalpha at zero is the one-point function (photodetection)"""
    m = decay_qubit(gamma=1.0, omega=1.0, eta=0.8, theta=0.2)
    f = bin_filter(m.detectors[0], 1)
    fd = _first_difference(m, 0, f, 1e-2)
    assert fd == pytest.approx(_filtered(m, [(0, f)]), rel=1e-5)


def test_first_derivative_diffusive(lossy):
    """Test 3: dZ/dalpha at zero is the one-point function (homodyne, smooth filter)"""
    m = lossy(omega=2.0, kappa=1.0, eta=0.5, alpha0=1.0, n_trunc=12)
    f = FilterSpec.custom_grid([0.0, 0.3, 0.6], [0.0, 1.0, 0.0])
    fd = _first_difference(m, 0, f, 1e-2)
    assert fd == pytest.approx(_filtered(m, [(0, f)]), rel=1e-5)


def test_mixed_derivative_jump(decay_qubit):
    """Test 4: mixed second difference equals the two-point function on disjoint bins"""
    m = decay_qubit(gamma=1.0, omega=1.0, eta=0.8, theta=0.2)
    f0, f2 = bin_filter(m.detectors[0], 0), bin_filter(m.detectors[0], 2)
    fd = _mixed_difference(m, (0, f0), (0, f2), 2e-2)
    assert fd == pytest.approx(_filtered(m, [(0, f0), (0, f2)]), rel=1e-5)


def test_mixed_derivative_coincident_diffusive(lossy):
    """Test 5: coincident homodyne bins, including the white-noise term"""
    m = lossy(omega=2.0, kappa=1.0, eta=0.5, alpha0=1.0, gain=1.0, bin_width=0.5, n_trunc=12)
    f = bin_filter(m.detectors[0], 1)
    fd = _mixed_difference(m, (0, f), (0, f), 2e-2)
    exact = _filtered(m, [(0, f), (0, f)])
    assert fd == pytest.approx(exact, rel=1e-5)
    # the white-noise term dominates a coincident bin
    assert exact > 1.0 / 0.5


def test_mixed_derivative_across_detector_kinds():
    """Test 6: a photodetector and a homodyne detector on different channels"""
    m = _mixed_model()
    counts = bin_filter(m.detectors[0], 0)
    for k in (0, 2):
        phase = bin_filter(m.detectors[1], k)
        fd = _mixed_difference(m, (0, counts), (1, phase), 2e-2)
        assert fd == pytest.approx(_filtered(m, [(0, counts), (1, phase)]), rel=1e-5, abs=1e-7)


def test_source_validation(decay_qubit):
    """Test 7: supports past T and unknown detectors are rejected"""
    m = decay_qubit()
    f = bin_filter(m.detectors[0], 3)
    with pytest.raises(ValueError):
        tilted_evolution(m, [(0, f, 0.1)], T=1.0)
    with pytest.raises(InvalidRequestError):
        tilted_evolution(m, [(2, f, 0.1)])
