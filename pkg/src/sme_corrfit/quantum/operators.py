"""
Dense operator algebra on truncated Hilbert spaces.

Operators are plain complex numpy arrays of shape (n, n). Density matrices are
operators that additionally pass check_density_matrix.

Qubit basis ordering is (|0>, |1>) with |1> the excited state, so the excited
projector |1><1| is the (1, 1) entry. sigma_z = |1><1| - |0><0| = diag(-1, +1),
giving the excited state eigenvalue +1.
"""
from typing import Tuple

import numpy as np

from sme_corrfit.exceptions import InvalidDimensionError

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


def as_operator(op, dim: int = None) -> np.ndarray:
    """Return op as a square complex array, optionally checking its dimension."""
    arr = np.asarray(op, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidDimensionError(f"operator must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidDimensionError(f"expected dimension {dim}, got {arr.shape[0]}")
    return arr


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def make_fock_ops(n_trunc: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Build the truncated annihilation and number operators.

    Args:
        n_trunc: Number of Fock levels kept (at least 2)

    Returns:
        (a, a^dagger a) with a[k-1, k] = sqrt(k)
    """
    if int(n_trunc) != n_trunc or n_trunc < 2:
        raise InvalidDimensionError(f"n_trunc must be an integer >= 2, got {n_trunc}")
    n_trunc = int(n_trunc)
    a = np.diag(np.sqrt(np.arange(1, n_trunc)), k=1).astype(complex)
    number = dag(a) @ a
    return a, number


def make_qubit_ops() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (sigma_x, sigma_z, sigma_minus) in the (|0>, |1>) basis."""
    sigma_x = np.array([[0, 1], [1, 0]], dtype=complex)
    sigma_z = np.array([[-1, 0], [0, 1]], dtype=complex)
    sigma_minus = np.array([[0, 1], [0, 0]], dtype=complex)
    return sigma_x, sigma_z, sigma_minus


def fock_dm(n_trunc: int, k: int) -> np.ndarray:
    """Projector |k><k| on an n_trunc-level space."""
    if not 0 <= k < n_trunc:
        raise InvalidDimensionError(f"level {k} outside 0..{n_trunc - 1}")
    rho = np.zeros((n_trunc, n_trunc), dtype=complex)
    rho[k, k] = 1.0
    return rho


def coherent_dm(n_trunc: int, alpha: complex) -> np.ndarray:
    """
    Coherent state |alpha><alpha| on the truncated space.

    The Fock amplitudes are renormalised after truncation so the trace is one.
    """
    if n_trunc < 2:
        raise InvalidDimensionError(f"n_trunc must be >= 2, got {n_trunc}")
    n = np.arange(n_trunc)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    amps = np.zeros(n_trunc, dtype=complex)
    if alpha == 0:
        amps[0] = 1.0
    else:
        amps = np.exp(n * np.log(complex(alpha)) - 0.5 * log_fact)
    amps /= np.linalg.norm(amps)
    return np.outer(amps, amps.conj())


def parity_operator(n_trunc: int) -> np.ndarray:
    """exp(i pi a^dagger a), i.e. diag((-1)^n)."""
    return np.diag((-1.0) ** np.arange(n_trunc)).astype(complex)


def expect(obs: np.ndarray, rho: np.ndarray) -> complex:
    """Tr[obs rho]."""
    obs = as_operator(obs)
    rho = as_operator(rho, obs.shape[0])
    # Tr[AB] without forming the product
    return complex(np.einsum("ij,ji->", obs, rho))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of rho - sigma."""
    diff = as_operator(rho) - as_operator(sigma, np.shape(rho)[0])
    diff = 0.5 * (diff + dag(diff))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def check_density_matrix(
    rho: np.ndarray,
    herm_tol: float = HERMITIAN_TOL,
    trace_tol: float = TRACE_TOL,
    pos_tol: float = POSITIVITY_TOL,
) -> np.ndarray:
    """
    Validate a density matrix and return it as a complex array.

    Raises:
        InvalidDimensionError: if rho is not Hermitian, not unit trace, or has
            an eigenvalue below -pos_tol.
    """
    rho = as_operator(rho)
    if np.max(np.abs(rho - dag(rho))) > herm_tol:
        raise InvalidDimensionError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise InvalidDimensionError(f"density matrix trace is {tr.real:.3e}, expected 1")
    lam_min = np.linalg.eigvalsh(0.5 * (rho + dag(rho)))[0]
    if lam_min < -pos_tol:
        raise InvalidDimensionError(f"density matrix has eigenvalue {lam_min:.3e}")
    return rho
