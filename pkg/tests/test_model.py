"""
Tests for ConcreteModel, the Liouvillian / correlation superoperators and the
built-in model families.
"""
import dataclasses

import numpy as np
import pytest

from sme_corrfit.exceptions import BoundViolationError, InvalidDimensionError
from sme_corrfit.quantum.families import KHZ, get_family
from sme_corrfit.quantum.model import (
    DIFFUSIVE,
    JUMP,
    ConcreteModel,
    DetectorSpec,
    correlation_superop_apply,
    instantiate,
    liouvillian_apply,
    model_fingerprint,
)
from sme_corrfit.quantum.operators import dag, fock_dm, make_fock_ops, make_qubit_ops


def _random_model(rng, n=3, n_jumps=2):
    def rand_op():
        return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))

    H = rand_op()
    H = 0.5 * (H + dag(H))
    jumps = tuple(rand_op() for _ in range(n_jumps))
    dets = (
        DetectorSpec("J", JUMP, jumps[0], 0.7, 0.1, 4, dark_rate=0.3),
        DetectorSpec("D", DIFFUSIVE, jumps[1], 0.4, 0.1, 4, gain=2.0),
    )
    return ConcreteModel(H=H, jumps=jumps, detectors=dets, rho0=np.eye(n) / n)


def _random_state(rng, n=3):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = X @ dag(X)
    return rho / np.trace(rho)


def test_vacuum_is_dark(vacuum):
    """Test 1: the vacuum of a lossy cavity is a fixed point"""
    m = vacuum()
    np.testing.assert_allclose(liouvillian_apply(m, fock_dm(3, 0)), 0.0, atol=1e-15)
    np.testing.assert_allclose(correlation_superop_apply(m.detectors[0], fock_dm(3, 0)), 0.0, atol=1e-15)


def test_pure_decay(decay_qubit):
    """Test 2: L(|1><1|) = gamma (|0><0| - |1><1|) for pure decay"""
    m = decay_qubit(gamma=2.5)
    out = liouvillian_apply(m, fock_dm(2, 1))
    np.testing.assert_allclose(out, 2.5 * (fock_dm(2, 0) - fock_dm(2, 1)), atol=1e-15)


def test_liouvillian_properties():
    """Test 3: trace zero, Hermiticity preserved, linear, superoperator = operator form"""
    rng = np.random.default_rng(11)
    m = _random_model(rng)
    r1, r2 = _random_state(rng), _random_state(rng)
    out = liouvillian_apply(m, r1)
    assert abs(np.trace(out)) < 1e-10
    np.testing.assert_allclose(out, dag(out), atol=1e-12)
    np.testing.assert_allclose(
        liouvillian_apply(m, 0.3 * r1 + 0.7 * r2),
        0.3 * liouvillian_apply(m, r1) + 0.7 * liouvillian_apply(m, r2),
        atol=1e-12,
    )
    vec = m.liouvillian_superop @ r1.ravel()
    np.testing.assert_allclose(vec.reshape(3, 3), out, atol=1e-12)
    # stacked states are mapped one by one
    stack = liouvillian_apply(m, np.stack([r1, r2]))
    np.testing.assert_allclose(stack[1], liouvillian_apply(m, r2), atol=1e-12)


def test_correlation_superoperators():
    """Test 4: C = theta rho + eta L rho L^dag (jump), sqrt(eta)(L rho + rho L^dag) (diffusive)"""
    rng = np.random.default_rng(12)
    m = _random_model(rng)
    rho = _random_state(rng)
    jump, diff = m.detectors
    np.testing.assert_allclose(
        correlation_superop_apply(jump, rho),
        0.3 * rho + 0.7 * jump.L @ rho @ dag(jump.L),
        atol=1e-12,
    )
    np.testing.assert_allclose(
        correlation_superop_apply(diff, rho),
        np.sqrt(0.4) * (diff.L @ rho + rho @ dag(diff.L)),
        atol=1e-12,
    )
    for mu, d in enumerate(m.detectors):
        vec = m.correlation_superop(mu) @ rho.ravel()
        out = correlation_superop_apply(d, rho)
        np.testing.assert_allclose(vec.reshape(3, 3), out, atol=1e-12)
        np.testing.assert_allclose(out, dag(out), atol=1e-12)
    with pytest.raises(InvalidDimensionError):
        correlation_superop_apply(jump, np.eye(2))


def test_jump_signal_rate(decay_qubit):
    """Test 5: Tr C(rho) is the click rate theta + eta gamma p_excited"""
    m = decay_qubit(gamma=1.0, eta=0.5, theta=0.2)
    tr = np.trace(correlation_superop_apply(m.detectors[0], fock_dm(2, 1)))
    assert tr.real == pytest.approx(0.2 + 0.5)


def test_detector_validation():
    """Test 6: detector settings and the monitored operator are checked"""
    sx, _, sm = make_qubit_ops()
    with pytest.raises(ValueError):
        DetectorSpec("d", JUMP, sm, 1.2, 0.1, 4)
    with pytest.raises(ValueError):
        DetectorSpec("d", DIFFUSIVE, sm, 0.5, 0.1, 4, dark_rate=1.0)
    with pytest.raises(ValueError):
        DetectorSpec("d", "heterodyne", sm, 0.5, 0.1, 4)
    with pytest.raises(ValueError):
        DetectorSpec("d", DIFFUSIVE, sm, 0.5, 0.1, 4, gain=0.0)
    det = DetectorSpec("d", JUMP, sx, 0.5, 0.1, 4)
    with pytest.raises(ValueError):
        ConcreteModel(H=np.zeros((2, 2)), jumps=(sm,), detectors=(det,), rho0=fock_dm(2, 0))
    with pytest.raises(InvalidDimensionError):
        ConcreteModel(H=np.zeros((2, 2)), jumps=(np.eye(3),))


def test_bin_scale():
    """Test 7: diffusive bins have height G/dt, jump bins count clicks"""
    _, _, sm = make_qubit_ops()
    assert DetectorSpec("d", DIFFUSIVE, sm, 1.0, 0.25, 4, gain=2.0).bin_scale == pytest.approx(8.0)
    assert DetectorSpec("j", JUMP, sm, 1.0, 0.25, 4).bin_scale == 1.0


def test_fingerprint_is_deterministic(example2_theta):
    """Test 8: same theta gives the same fingerprint, a different theta does not"""
    family = get_family("qubit_photodetection")
    m1 = instantiate(family, example2_theta)
    m2 = instantiate(family, dict(example2_theta))
    assert model_fingerprint(m1) == model_fingerprint(m2)
    assert len(model_fingerprint(m1)) == 16
    changed = dict(example2_theta, eta=0.6)
    assert model_fingerprint(instantiate(family, changed)) != model_fingerprint(m1)
    wider = dataclasses.replace(m1, detectors=(dataclasses.replace(m1.detectors[0], n_bins=40),))
    assert model_fingerprint(wider) != model_fingerprint(m1)


def test_instantiate_example2(example2_theta):
    """Test 9: driven qubit family builds H = Delta sz + Omega sx and starts excited"""
    family = get_family("qubit_photodetection")
    m = instantiate(family, example2_theta)
    sx, sz, _ = make_qubit_ops()
    np.testing.assert_allclose(m.H, 5 * KHZ * sz + 3 * KHZ * sx)
    np.testing.assert_allclose(m.rho0, fock_dm(2, 1))
    d = m.detectors[0]
    assert d.kind == JUMP and d.efficiency == 0.5
    assert d.bin_width == pytest.approx(1.0 / (10 * KHZ))
    assert d.n_bins == 21
    # vector input in declaration order
    vec = [example2_theta[n] for n in family.parameter_names]
    np.testing.assert_allclose(instantiate(family, vec).H, m.H)


def test_instantiate_example3_steady_state(example3_theta):
    """Test 10: 'steady' is resolved on instantiation and is a fixed point"""
    family = get_family("two_photon_homodyne", n_trunc=8)
    m = instantiate(family, example3_theta)
    assert m.dim == 8
    assert isinstance(m.rho0, np.ndarray)
    residual = np.abs(m.liouvillian_superop @ m.rho0.ravel()).sum()
    assert residual <= 1e-9 * m.liouvillian_norm
    assert len(m.jumps) == 3 and len(m.detectors) == 1


def test_example1_steady_state_residual(example1_theta):
    """Test 11: example-1 Liouvillian vanishes on its own steady state"""
    m = instantiate(get_family("anharmonic_heterodyne"), example1_theta)
    out = liouvillian_apply(m, m.rho0)
    assert np.abs(out).max() <= 1e-8 * m.liouvillian_norm
    assert [d.name for d in m.detectors] == ["X", "P"]


def test_bounds_are_enforced(example2_theta):
    """Test 12: eta = 1.5 names the offending parameter"""
    family = get_family("qubit_photodetection")
    with pytest.raises(BoundViolationError) as info:
        instantiate(family, dict(example2_theta, eta=1.5))
    assert info.value.parameter == "eta"
    with pytest.raises(BoundViolationError):
        instantiate(family, dict(example2_theta, gamma=-1.0))


def test_family_lookup():
    """Test 13: unknown names, missing and unknown parameters"""
    with pytest.raises(KeyError):
        get_family("rydberg_chain")
    family = get_family("two_photon_homodyne")
    assert family.as_dict({"kappa1": 1.0, "kappa2": 1.0, "alpha2": 1.0, "eta": 0.5})["kerr"] == 0.0
    with pytest.raises(KeyError):
        family.as_dict({"kappa1": 1.0})
    with pytest.raises(KeyError):
        family.as_dict({"kappa1": 1.0, "kappa2": 1.0, "alpha2": 1.0, "eta": 0.5, "chi": 1.0})
    with pytest.raises(KeyError):
        family.detector_index("P")
    assert get_family("lossy_oscillator", n_bins=5).settings.n_bins == 5


def test_parameter_transforms():
    """Test 14: internal coordinates round-trip through log and logit"""
    family = get_family("qubit_photodetection")
    for name, value in (("gamma", 2 * KHZ), ("eta", 0.3), ("Delta", -4 * KHZ)):
        spec = family.spec(name)
        assert spec.from_internal(spec.to_internal(value)) == pytest.approx(value, rel=1e-12)
    assert family.spec("gamma").to_internal(KHZ) == pytest.approx(0.0)
    assert family.spec("eta").to_internal(0.5) == pytest.approx(0.0)


def test_fock_truncation_setting():
    """Test 15: n_trunc flows from the family settings to the operators"""
    family = get_family("lossy_oscillator", n_trunc=6, bin_width=1e-6, n_bins=10)
    m = instantiate(family, {"omega": KHZ, "kappa": KHZ, "eta": 0.5, "alpha0": 0.5})
    a, _ = make_fock_ops(6)
    np.testing.assert_allclose(m.jumps[0], np.sqrt(KHZ) * a)
    assert m.detectors[0].gain == 1.0
