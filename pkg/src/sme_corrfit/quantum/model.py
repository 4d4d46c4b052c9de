"""
Parameterised system description.

A ModelFamily maps a parameter dictionary theta to a ConcreteModel holding the
Hamiltonian, the jump operators, the detectors monitoring some of them and the
initial state. ConcreteModel also provides the Liouvillian and the correlation
superoperators, both in operator form (acting on (..., n, n) arrays) and as
sparse matrices acting on row-major vectorised operators.
"""
import dataclasses
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from sme_corrfit.exceptions import BoundViolationError, InvalidDimensionError
from sme_corrfit.quantum.operators import as_operator, check_density_matrix, dag

JUMP = "jump"
DIFFUSIVE = "diffusive"
STEADY = "steady"

TRANSFORMS = ("log", "logit", "raw")


@dataclass(frozen=True, eq=False)
class DetectorSpec:
    """
    One detector monitoring one jump operator.

    Args:
        name: Label used in configs and output tables
        kind: "jump" (photodetection) or "diffusive" (homodyne quadrature)
        L: Monitored jump operator (sqrt(rate) units)
        efficiency: eta in [0, 1]
        dark_rate: Dark-count rate theta >= 0 (jump only), in s^-1
        gain: Acquisition-chain gain G > 0 (diffusive only)
        bin_width: Delta t in seconds
        n_bins: Number of recorded bins
    """
    name: str
    kind: str
    L: np.ndarray
    efficiency: float
    bin_width: float
    n_bins: int
    dark_rate: float = 0.0
    gain: float = 1.0

    def __post_init__(self):
        if self.kind not in (JUMP, DIFFUSIVE):
            raise ValueError(f"detector kind must be 'jump' or 'diffusive', got {self.kind!r}")
        object.__setattr__(self, "L", as_operator(self.L))
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"detector '{self.name}': efficiency {self.efficiency} not in [0, 1]")
        if self.dark_rate < 0.0:
            raise ValueError(f"detector '{self.name}': negative dark rate {self.dark_rate}")
        if self.kind == DIFFUSIVE and self.dark_rate != 0.0:
            raise ValueError(f"detector '{self.name}': dark counts only apply to jump detectors")
        if self.gain <= 0.0:
            raise ValueError(f"detector '{self.name}': gain must be positive")
        if self.bin_width <= 0.0 or self.n_bins < 1:
            raise ValueError(f"detector '{self.name}': invalid binning")

    @property
    def is_jump(self) -> bool:
        return self.kind == JUMP

    @property
    def bin_scale(self) -> float:
        """Height of the rectangular bin filter: G/dt (diffusive) or 1 (jump)."""
        return self.gain / self.bin_width if self.kind == DIFFUSIVE else 1.0


@dataclass(frozen=True, eq=False)
class ConcreteModel:
    """H (rad/s), jump operators, detectors and initial state of one system."""
    H: np.ndarray
    jumps: Tuple[np.ndarray, ...]
    detectors: Tuple[DetectorSpec, ...] = ()
    rho0: Union[np.ndarray, str] = STEADY

    def __post_init__(self):
        H = as_operator(self.H)
        dim = H.shape[0]
        jumps = tuple(as_operator(L, dim) for L in self.jumps)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "detectors", tuple(self.detectors))
        for d in self.detectors:
            if d.L.shape != (dim, dim):
                raise InvalidDimensionError(f"detector '{d.name}' has wrong dimension")
            if not any(np.array_equal(d.L, L) for L in jumps):
                raise ValueError(f"detector '{d.name}' monitors an operator missing from jumps")
        if not isinstance(self.rho0, str):
            object.__setattr__(self, "rho0", check_density_matrix(self.rho0))
        elif self.rho0 != STEADY:
            raise ValueError(f"rho0 marker must be '{STEADY}', got {self.rho0!r}")

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def _loss(self) -> np.ndarray:
        total = np.zeros_like(self.H)
        for L in self.jumps:
            total = total + dag(L) @ L
        return total

    @cached_property
    def liouvillian_superop(self) -> sp.csr_matrix:
        """Sparse n^2 x n^2 matrix of the Liouvillian on row-major vec(rho)."""
        ident = sp.identity(self.dim, dtype=complex, format="csr")
        H = sp.csr_matrix(self.H)
        loss = sp.csr_matrix(self._loss)
        out = -1j * (sp.kron(H, ident) - sp.kron(ident, H.T))
        out = out - 0.5 * (sp.kron(loss, ident) + sp.kron(ident, loss.T))
        for L in self.jumps:
            Ls = sp.csr_matrix(L)
            out = out + sp.kron(Ls, Ls.conj())
        return sp.csr_matrix(out)

    @cached_property
    def liouvillian_norm(self) -> float:
        """1-norm of the Liouvillian superoperator."""
        return float(abs(self.liouvillian_superop).sum(axis=0).max())

    @cached_property
    def _correlation_superops(self) -> Tuple[sp.csr_matrix, ...]:
        return tuple(_correlation_matrix(d) for d in self.detectors)

    def correlation_superop(self, mu: int) -> sp.csr_matrix:
        """Sparse matrix of the correlation superoperator of detector mu."""
        return self._correlation_superops[mu]

    def correlation_norm(self, mu: int) -> float:
        return float(abs(self.correlation_superop(mu)).sum(axis=0).max())


def _correlation_matrix(d: DetectorSpec) -> sp.csr_matrix:
    n = d.L.shape[0]
    ident = sp.identity(n, dtype=complex, format="csr")
    Ls = sp.csr_matrix(d.L)
    if d.kind == JUMP:
        out = d.dark_rate * sp.kron(ident, ident) + d.efficiency * sp.kron(Ls, Ls.conj())
    else:
        out = np.sqrt(d.efficiency) * (sp.kron(Ls, ident) + sp.kron(ident, Ls.conj()))
    return sp.csr_matrix(out)


def _check_shape(m: ConcreteModel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (m.dim, m.dim):
        raise InvalidDimensionError(f"state shape {rho.shape} does not match dimension {m.dim}")
    return rho


def liouvillian_apply(m: ConcreteModel, rho: np.ndarray) -> np.ndarray:
    """
    Apply -i[H, rho] + sum_k D[L_k](rho) to one operator or a stack (..., n, n).
    """
    rho = _check_shape(m, rho)
    out = -1j * (m.H @ rho - rho @ m.H)
    out -= 0.5 * (m._loss @ rho + rho @ m._loss)
    for L in m.jumps:
        out += L @ rho @ dag(L)
    return out


def correlation_superop_apply(d: DetectorSpec, rho: np.ndarray) -> np.ndarray:
    """C(rho) = theta rho + eta L rho L^dag (jump) or sqrt(eta)(L rho + rho L^dag) (diffusive)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != d.L.shape:
        raise InvalidDimensionError(f"state shape {rho.shape} does not match detector operator")
    if d.kind == JUMP:
        return d.dark_rate * rho + d.efficiency * (d.L @ rho @ dag(d.L))
    return np.sqrt(d.efficiency) * (d.L @ rho + rho @ dag(d.L))


def model_fingerprint(m: ConcreteModel) -> str:
    """Short SHA-256 digest of H, jump operators and detector settings."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(m.H).tobytes())
    for L in m.jumps:
        digest.update(np.ascontiguousarray(L).tobytes())
    for d in m.detectors:
        digest.update(
            f"{d.name}|{d.kind}|{d.efficiency!r}|{d.dark_rate!r}|{d.gain!r}|"
            f"{d.bin_width!r}|{d.n_bins}".encode()
        )
        digest.update(np.ascontiguousarray(d.L).tobytes())
    return digest.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterSpec:
    """
    Declared parameter of a model family.

    `scale` is the unit the fitter divides by before transforming, so that
    fitted coordinates are of order one (e.g. 2*pi*1e3 for kHz quantities).
    """
    name: str
    lower: float
    upper: float
    transform: str = "raw"
    scale: float = 1.0
    unit: str = "1"
    description: str = ""

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.lower > self.upper:
            raise ValueError(f"parameter '{self.name}' has empty bounds")

    def check(self, value: float):
        if not (self.lower <= value <= self.upper):
            raise BoundViolationError(self.name, value, (self.lower, self.upper))

    def to_internal(self, value: float) -> float:
        x = value / self.scale
        if self.transform == "log":
            return float(np.log(x))
        if self.transform == "logit":
            return float(np.log(x / (1.0 - x)))
        return float(x)

    def from_internal(self, u: float) -> float:
        if self.transform == "log":
            x = np.exp(u)
        elif self.transform == "logit":
            x = 1.0 / (1.0 + np.exp(-u))
        else:
            x = u
        return float(x * self.scale)


@dataclass(frozen=True)
class FamilySettings:
    """Acquisition settings shared by every member of a family."""
    bin_width: float
    n_bins: int
    gain: float = 1.0
    n_trunc: Optional[int] = None


Theta = Union[Mapping[str, float], Sequence[float]]


@dataclass(frozen=True)
class ModelFamily:
    name: str
    parameters: Tuple[ParameterSpec, ...]
    builder: Callable[[Mapping[str, float], FamilySettings], ConcreteModel]
    settings: FamilySettings
    detector_names: Tuple[str, ...] = ()
    defaults: Dict[str, float] = field(default_factory=dict)

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.parameters)

    def spec(self, name: str) -> ParameterSpec:
        for p in self.parameters:
            if p.name == name:
                return p
        raise KeyError(f"family '{self.name}' has no parameter '{name}'")

    def detector_index(self, name: str) -> int:
        try:
            return self.detector_names.index(name)
        except ValueError:
            raise KeyError(f"family '{self.name}' has no detector '{name}'") from None

    def with_settings(self, **changes) -> "ModelFamily":
        return dataclasses.replace(self, settings=dataclasses.replace(self.settings, **changes))

    def as_dict(self, theta: Theta) -> Dict[str, float]:
        """Complete theta with family defaults, accepting a mapping or a vector."""
        if isinstance(theta, Mapping):
            values = dict(self.defaults)
            values.update({k: float(v) for k, v in theta.items()})
        else:
            theta = list(theta)
            if len(theta) != len(self.parameters):
                raise ValueError(
                    f"family '{self.name}' expects {len(self.parameters)} values, got {len(theta)}"
                )
            values = {p.name: float(v) for p, v in zip(self.parameters, theta)}
        unknown = set(values) - set(self.parameter_names)
        if unknown:
            raise KeyError(f"unknown parameters for '{self.name}': {sorted(unknown)}")
        missing = [n for n in self.parameter_names if n not in values]
        if missing:
            raise KeyError(f"missing parameters for '{self.name}': {missing}")
        return values


def instantiate(f: ModelFamily, theta: Theta) -> ConcreteModel:
    """
    Build the concrete model of family f at theta.

    The "steady" initial-state marker is resolved here, so the returned model
    always carries an explicit density matrix.

    Raises:
        BoundViolationError: naming the first parameter outside its bounds
    """
    from sme_corrfit.quantum.lindblad import steady_state

    values = f.as_dict(theta)
    for p in f.parameters:
        p.check(values[p.name])
    model = f.builder(values, f.settings)
    if isinstance(model.rho0, str):
        model = dataclasses.replace(model, rho0=steady_state(model))
    return model
