"""
Shared fixtures for the sme_corrfit test suite.

Small models are built here so every test file works on the same systems:
a decaying (optionally driven) qubit watched by a photodetector, the
vacuum of a lossy cavity under homodyne detection and a damped oscillator
started in a coherent state. Full-size Monte-Carlo runs are marked
`slow` and only run with --runslow.
"""
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sme_corrfit.quantum.families import HZ, KHZ  # noqa: E402
from sme_corrfit.quantum.model import DIFFUSIVE, JUMP, ConcreteModel, DetectorSpec  # noqa: E402
from sme_corrfit.quantum.operators import (  # noqa: E402
    coherent_dm,
    fock_dm,
    make_fock_ops,
    make_qubit_ops,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-size Monte-Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size Monte-Carlo run (enable with --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ---------------------------------------------------------------------------
# model builders
# ---------------------------------------------------------------------------

def make_decay_qubit(gamma=1.0, eta=1.0, theta=0.0, omega=0.0, delta=0.0,
                     bin_width=0.5, n_bins=8, rho0=None):
    """H = delta sz + omega sx, L = sqrt(gamma) s-, photodetector, starts excited."""
    sx, sz, sm = make_qubit_ops()
    L = np.sqrt(gamma) * sm
    det = DetectorSpec("photodetector", JUMP, L, eta, bin_width, n_bins, dark_rate=theta)
    return ConcreteModel(
        H=delta * sz + omega * sx,
        jumps=(L,),
        detectors=(det,),
        rho0=fock_dm(2, 1) if rho0 is None else rho0,
    )


def make_vacuum(gain=1.0, eta=1.0, kappa=1.0, bin_width=0.5, n_bins=6, n_trunc=3, twin=False):
    """Empty cavity, L = sqrt(kappa) a, homodyne detector(s) X (and X2 on the same channel)."""
    a, _ = make_fock_ops(n_trunc)
    L = np.sqrt(kappa) * a
    dets = [DetectorSpec("X", DIFFUSIVE, L, eta, bin_width, n_bins, gain=gain)]
    if twin:
        dets.append(DetectorSpec("X2", DIFFUSIVE, L, eta, bin_width, n_bins, gain=gain))
    return ConcreteModel(H=np.zeros((n_trunc, n_trunc)), jumps=(L,), detectors=tuple(dets), rho0=fock_dm(n_trunc, 0))


def make_lossy(omega=2.0, kappa=1.0, eta=0.5, alpha0=1.0, gain=1.0,
               bin_width=0.25, n_bins=12, n_trunc=14, twin=False):
    """H = omega a^dag a, L = sqrt(kappa) a, homodyne on L, coherent initial state."""
    a, number = make_fock_ops(n_trunc)
    L = np.sqrt(kappa) * a
    dets = [DetectorSpec("X", DIFFUSIVE, L, eta, bin_width, n_bins, gain=gain)]
    if twin:
        dets.append(DetectorSpec("X2", DIFFUSIVE, L, eta, bin_width, n_bins, gain=gain))
    return ConcreteModel(H=omega * number, jumps=(L,), detectors=tuple(dets), rho0=coherent_dm(n_trunc, alpha0))


@pytest.fixture
def decay_qubit():
    return make_decay_qubit


@pytest.fixture
def vacuum():
    return make_vacuum


@pytest.fixture
def lossy():
    return make_lossy


# ---------------------------------------------------------------------------
# parameter tables of the worked examples (SI, rad/s)
# ---------------------------------------------------------------------------

@pytest.fixture
def example1_theta():
    return {"K": 100 * KHZ, "eps_x": 300 * KHZ, "eps_y": 400 * KHZ, "kappa": 100 * KHZ, "eta": 0.8}


@pytest.fixture
def example2_theta():
    return {"Delta": 5 * KHZ, "Omega": 3 * KHZ, "gamma": 2 * KHZ, "theta": 300 * HZ, "eta": 0.5}


@pytest.fixture
def example3_theta():
    return {"kappa1": 100 * KHZ, "kappa2": 1 * KHZ, "alpha2": 7.0, "eta": 0.1}


@pytest.fixture
def config_path():
    def path(name: str) -> str:
        return os.path.join(CONFIG_DIR, name)
    return path
