"""
Built-in model families.

    anharmonic_heterodyne   Kerr oscillator under coherent drive, heterodyne readout
    qubit_photodetection    driven qubit, photodetection of its decay
    two_photon_homodyne     two-photon dissipative oscillator, homodyne readout
    lossy_oscillator        damped harmonic oscillator from a coherent state

Frequencies and rates are angular (rad/s). Builders are module-level pure
functions so families can be shipped to worker processes.
"""
from typing import Dict, Mapping

import numpy as np

from sme_corrfit.quantum.model import (
    DIFFUSIVE,
    JUMP,
    STEADY,
    ConcreteModel,
    DetectorSpec,
    FamilySettings,
    ModelFamily,
    ParameterSpec,
)
from sme_corrfit.quantum.operators import (
    coherent_dm,
    dag,
    fock_dm,
    make_fock_ops,
    make_qubit_ops,
)

TWO_PI = 2.0 * np.pi
KHZ = TWO_PI * 1e3
HZ = TWO_PI
INF = float("inf")


def _rate(name: str, scale: float = KHZ, unit: str = "kHz", description: str = "") -> ParameterSpec:
    return ParameterSpec(name, 0.0, INF, "log", scale, unit, description)


def _real(name: str, scale: float = KHZ, unit: str = "kHz", description: str = "") -> ParameterSpec:
    return ParameterSpec(name, -INF, INF, "raw", scale, unit, description)


def _efficiency(name: str = "eta") -> ParameterSpec:
    return ParameterSpec(name, 0.0, 1.0, "logit", 1.0, "1", "detection efficiency")


def _diffusive(name: str, L: np.ndarray, eta: float, settings: FamilySettings) -> DetectorSpec:
    return DetectorSpec(
        name=name,
        kind=DIFFUSIVE,
        L=L,
        efficiency=eta,
        bin_width=settings.bin_width,
        n_bins=settings.n_bins,
        gain=settings.gain,
    )


# ---- anharmonic oscillator, heterodyne -------------------------------------

def build_anharmonic_heterodyne(theta: Mapping[str, float], settings: FamilySettings) -> ConcreteModel:
    a, _ = make_fock_ops(settings.n_trunc or 16)
    ad = dag(a)
    eps = theta["eps_x"] + 1j * theta["eps_y"]
    H = -0.5 * theta["K"] * (ad @ ad @ a @ a) + np.conj(eps) * a + eps * ad
    # heterodyne = two quadrature detectors sharing the loss channel
    LX = np.sqrt(theta["kappa"] / 2.0) * a
    LP = np.sqrt(theta["kappa"] / 2.0) * (-1j * a)
    detectors = (
        _diffusive("X", LX, theta["eta"], settings),
        _diffusive("P", LP, theta["eta"], settings),
    )
    return ConcreteModel(H=H, jumps=(LX, LP), detectors=detectors, rho0=STEADY)


def anharmonic_heterodyne(settings: FamilySettings = None) -> ModelFamily:
    settings = settings or FamilySettings(bin_width=1.0 / (6.0 * 100 * KHZ), n_bins=21, n_trunc=16)
    return ModelFamily(
        name="anharmonic_heterodyne",
        parameters=(
            _rate("K", description="Kerr nonlinearity"),
            _real("eps_x", description="drive, real part"),
            _real("eps_y", description="drive, imaginary part"),
            _rate("kappa", description="single-photon loss rate"),
            _efficiency(),
        ),
        builder=build_anharmonic_heterodyne,
        settings=settings,
        detector_names=("X", "P"),
    )


# ---- driven qubit, photodetection ------------------------------------------

def build_qubit_photodetection(theta: Mapping[str, float], settings: FamilySettings) -> ConcreteModel:
    sx, sz, sm = make_qubit_ops()
    H = theta["Delta"] * sz + theta["Omega"] * sx
    L = np.sqrt(theta["gamma"]) * sm
    detector = DetectorSpec(
        name="photodetector",
        kind=JUMP,
        L=L,
        efficiency=theta["eta"],
        dark_rate=theta["theta"],
        bin_width=settings.bin_width,
        n_bins=settings.n_bins,
    )
    return ConcreteModel(H=H, jumps=(L,), detectors=(detector,), rho0=fock_dm(2, 1))


def qubit_photodetection(settings: FamilySettings = None) -> ModelFamily:
    settings = settings or FamilySettings(bin_width=1.0 / (2.0 * 5 * KHZ), n_bins=21)
    return ModelFamily(
        name="qubit_photodetection",
        parameters=(
            _real("Delta", description="detuning"),
            _real("Omega", description="Rabi drive"),
            _rate("gamma", description="decay rate"),
            _rate("theta", scale=HZ, unit="Hz", description="dark-count rate"),
            _efficiency(),
        ),
        builder=build_qubit_photodetection,
        settings=settings,
        detector_names=("photodetector",),
    )


# ---- two-photon dissipative oscillator, homodyne ---------------------------

def build_two_photon_homodyne(theta: Mapping[str, float], settings: FamilySettings) -> ConcreteModel:
    n = settings.n_trunc or 32
    a, _ = make_fock_ops(n)
    ad = dag(a)
    H = -0.5 * theta["kerr"] * (ad @ ad @ a @ a)
    L1X = np.sqrt(theta["kappa1"] / 2.0) * a
    L1P = np.sqrt(theta["kappa1"] / 2.0) * (-1j * a)
    L2 = np.sqrt(theta["kappa2"]) * (a @ a - theta["alpha2"] ** 2 * np.eye(n))
    detector = _diffusive("X", L1X, theta["eta"], settings)
    return ConcreteModel(H=H, jumps=(L1X, L1P, L2), detectors=(detector,), rho0=STEADY)


def two_photon_homodyne(settings: FamilySettings = None) -> ModelFamily:
    settings = settings or FamilySettings(bin_width=1.0 / (2.0 * 100 * KHZ), n_bins=31, n_trunc=32)
    return ModelFamily(
        name="two_photon_homodyne",
        parameters=(
            _rate("kappa1", description="single-photon loss rate"),
            _rate("kappa2", description="two-photon dissipation rate"),
            _real("alpha2", scale=1.0, unit="1", description="two-photon drive amplitude"),
            _efficiency(),
            _real("kerr", description="self-Kerr"),
        ),
        builder=build_two_photon_homodyne,
        settings=settings,
        detector_names=("X",),
        defaults={"kerr": 0.0},
    )


# ---- lossy harmonic oscillator ---------------------------------------------

def build_lossy_oscillator(theta: Mapping[str, float], settings: FamilySettings) -> ConcreteModel:
    n = settings.n_trunc or 16
    a, number = make_fock_ops(n)
    H = theta["omega"] * number
    L = np.sqrt(theta["kappa"]) * a
    detector = _diffusive("X", L, theta["eta"], settings)
    return ConcreteModel(H=H, jumps=(L,), detectors=(detector,), rho0=coherent_dm(n, theta["alpha0"]))


def lossy_oscillator(settings: FamilySettings = None) -> ModelFamily:
    settings = settings or FamilySettings(bin_width=1.0 / (10.0 * 100 * KHZ), n_bins=30, n_trunc=16)
    return ModelFamily(
        name="lossy_oscillator",
        parameters=(
            _real("omega", description="oscillator frequency"),
            _rate("kappa", description="loss rate"),
            _efficiency(),
            _real("alpha0", scale=1.0, unit="1", description="initial coherent amplitude"),
        ),
        builder=build_lossy_oscillator,
        settings=settings,
        detector_names=("X",),
    )


FAMILIES = {
    "anharmonic_heterodyne": anharmonic_heterodyne,
    "qubit_photodetection": qubit_photodetection,
    "two_photon_homodyne": two_photon_homodyne,
    "lossy_oscillator": lossy_oscillator,
}


def get_family(name: str, **settings) -> ModelFamily:
    """
    Look up a built-in family, optionally overriding its acquisition settings.

    Args:
        name: One of FAMILIES
        **settings: FamilySettings fields (bin_width, n_bins, gain, n_trunc)
    """
    if name not in FAMILIES:
        raise KeyError(f"unknown model family '{name}'; available: {sorted(FAMILIES)}")
    family = FAMILIES[name]()
    changes: Dict[str, object] = {k: v for k, v in settings.items() if v is not None}
    return family.with_settings(**changes) if changes else family
