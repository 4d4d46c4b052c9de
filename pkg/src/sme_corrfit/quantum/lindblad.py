"""
Deterministic evolution under a time-independent Liouvillian.

- integrate: adaptive Dormand-Prince 5(4) (scipy RK45 driven step by step so
  max_steps is enforced) or fixed-step RK4, for any linear right-hand side
- evolve_me: Lindblad master-equation trajectories of the density matrix
- steady_state: null vector of the vectorised Liouvillian
- expm_action: e^{dt G} x without forming e^{dt G}
"""
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import RK45
from scipy.sparse.linalg import LinearOperator, expm_multiply

from sme_corrfit.exceptions import (
    DegenerateSteadyStateError,
    NonConvergenceError,
    SolverError,
    StepLimitError,
)
from sme_corrfit.quantum.operators import dag

if TYPE_CHECKING:
    from sme_corrfit.quantum.model import ConcreteModel

ADAPTIVE_RK = "adaptive_rk"
FIXED_RK4 = "fixed_rk4"

DENSE_STEADY_MAX_DIM = 64


@dataclass(frozen=True)
class OdeSolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 100_000
    method: str = ADAPTIVE_RK
    fixed_step: Optional[float] = None

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.method not in (ADAPTIVE_RK, FIXED_RK4):
            raise ValueError(f"unknown ODE method {self.method!r}")
        if self.method == FIXED_RK4 and (self.fixed_step is None or self.fixed_step <= 0):
            raise ValueError("fixed_rk4 needs a positive fixed_step")


def _check_grid(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return t


def _rk4_step(rhs: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    times: Sequence[float],
    cfg: OdeSolverConfig = OdeSolverConfig(),
) -> np.ndarray:
    """
    Integrate dy/dt = rhs(t, y) from (t0, y0) and sample at `times`.

    Args:
        rhs: Right-hand side acting on flat complex vectors
        y0: Initial flat vector
        t0: Initial time (<= times[0])
        times: Strictly increasing output times
        cfg: Solver settings

    Returns:
        Array of shape (len(times), y0.size)

    Raises:
        StepLimitError: more than cfg.max_steps steps were needed
        SolverError: the adaptive stepper failed
    """
    grid = _check_grid(times)
    if grid[0] < t0:
        raise ValueError("output times must not precede the initial time")
    y = np.array(y0, dtype=complex).ravel()
    out = np.empty((grid.size, y.size), dtype=complex)

    if cfg.method == FIXED_RK4:
        t, steps = t0, 0
        for i, t_out in enumerate(grid):
            span = t_out - t
            n_sub = int(np.ceil(span / cfg.fixed_step - 1e-12)) if span > 0 else 0
            steps += n_sub
            if steps > cfg.max_steps:
                raise StepLimitError(f"fixed RK4 needs more than {cfg.max_steps} steps")
            for _ in range(n_sub):
                y = _rk4_step(rhs, t, y, span / n_sub)
                t += span / n_sub
            t = t_out
            out[i] = y
        return out

    # leading outputs at t0 need no stepping
    i = 0
    while i < grid.size and grid[i] == t0:
        out[i] = y
        i += 1
    if i == grid.size:
        return out

    solver = RK45(rhs, t0, y, grid[-1], rtol=cfg.rtol, atol=cfg.atol)
    steps = 0
    while i < grid.size:
        message = solver.step()
        steps += 1
        if solver.status == "failed":
            raise SolverError(f"adaptive integration failed: {message}")
        if steps > cfg.max_steps:
            raise StepLimitError(f"adaptive integration exceeded {cfg.max_steps} steps")
        dense = None
        while i < grid.size and grid[i] <= solver.t:
            if grid[i] == solver.t:
                out[i] = solver.y
            else:
                if dense is None:
                    dense = solver.dense_output()
                out[i] = dense(grid[i])
            i += 1
    return out


def evolve_me(
    m: "ConcreteModel",
    rho0: np.ndarray,
    times: Sequence[float],
    cfg: OdeSolverConfig = OdeSolverConfig(),
) -> List[np.ndarray]:
    """
    Solve the master equation from rho0 at t=0 and return rho(t_i).

    The trace is not renormalised; drift beyond 1e-8 raises NonConvergenceError.
    """
    grid = _check_grid(times)
    if grid[0] < 0:
        raise ValueError("times must be non-negative")
    n = m.dim
    superop = m.liouvillian_superop

    def rhs(t, y):
        return superop @ y

    flat = integrate(rhs, np.asarray(rho0, dtype=complex).ravel(), 0.0, grid, cfg)
    states = [row.reshape(n, n) for row in flat]
    for t, rho in zip(grid, states):
        drift = abs(np.trace(rho) - np.trace(rho0))
        if drift > 1e-8:
            raise NonConvergenceError(f"trace drift {drift:.2e} at t={t:.3e}")
    return states


def _trace_row(n: int) -> np.ndarray:
    row = np.zeros(n * n, dtype=complex)
    row[:: n + 1] = 1.0
    return row


def _finish_state(x: np.ndarray, n: int) -> np.ndarray:
    rho = x.reshape(n, n)
    rho = 0.5 * (rho + dag(rho))
    return rho / np.trace(rho).real


def _null_dim(superop: sp.spmatrix, rel_tol: float = 1e-12) -> int:
    s = scipy.linalg.svdvals(superop.toarray())
    if s[0] == 0:
        return s.size
    return int(np.sum(s <= rel_tol * s[0]))


def steady_state(m: "ConcreteModel", tol: float = 1e-9) -> np.ndarray:
    """
    Unique fixed point of the Liouvillian.

    Dense solve of L vec(rho) = 0 with the (0,0) equation replaced by the
    trace condition for n <= 64; long-time evolution otherwise.

    Raises:
        DegenerateSteadyStateError: the null space is not one-dimensional
        NonConvergenceError: the residual stays above tol * ||L||
    """
    n = m.dim
    superop = m.liouvillian_superop
    scale = max(m.liouvillian_norm, 1e-300)

    if n <= DENSE_STEADY_MAX_DIM:
        A = superop.toarray()
        A[0, :] = scale * _trace_row(n)
        b = np.zeros(n * n, dtype=complex)
        b[0] = scale
        # a second null vector leaves the bordered system singular
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                x = scipy.linalg.solve(A, b)
        except (scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise DegenerateSteadyStateError(_null_dim(superop), str(exc)) from exc
        rho = _finish_state(x, n)
    else:
        x = (np.eye(n, dtype=complex) / n).ravel()
        horizon = 1.0 / scale
        for _ in range(60):
            x = expm_action(superop, x, horizon)
            x = _finish_state(x, n).ravel()
            if np.abs(superop @ x).sum() <= tol * scale:
                break
            horizon *= 2.0
        rho = x.reshape(n, n)

    residual = float(np.abs(superop @ rho.ravel()).sum())
    if residual > tol * scale:
        raise NonConvergenceError(
            f"steady-state residual {residual:.2e} above {tol:.0e} x ||L|| = {tol * scale:.2e}"
        )
    return rho


def _krylov_action(
    op: LinearOperator,
    x: np.ndarray,
    dt: float,
    krylov_dim: int = 30,
    tol: float = 1e-12,
    max_substeps: int = 10_000,
) -> np.ndarray:
    """Arnoldi projection of e^{dt op} x with sub-stepping on a posteriori error."""
    n = x.size
    m = min(krylov_dim, n)
    v = np.array(x, dtype=complex)
    t_done, substeps = 0.0, 0
    tau = dt
    while dt - t_done > 1e-14 * dt:
        beta = np.linalg.norm(v)
        if beta == 0.0:
            return v
        V = np.zeros((n, m + 1), dtype=complex)
        Hm = np.zeros((m + 1, m), dtype=complex)
        V[:, 0] = v / beta
        k = m
        happy = False
        for j in range(m):
            w = op.matvec(V[:, j]).astype(complex)
            for i in range(j + 1):
                Hm[i, j] = np.vdot(V[:, i], w)
                w = w - Hm[i, j] * V[:, i]
            Hm[j + 1, j] = np.linalg.norm(w)
            if Hm[j + 1, j].real <= 1e-13 * np.abs(Hm[: j + 1, j]).max() + 1e-300:
                k, happy = j + 1, True
                break
            V[:, j + 1] = w / Hm[j + 1, j]
        tau = min(tau, dt - t_done)
        while True:
            E = scipy.linalg.expm(tau * Hm[:k, :k])
            err = 0.0 if happy else beta * abs(Hm[k, k - 1]) * abs(E[k - 1, 0])
            if err <= tol * beta:
                break
            tau *= 0.5
            substeps += 1
            if substeps > max_substeps:
                raise NonConvergenceError("Krylov exponential did not converge")
        v = beta * (V[:, :k] @ E[:, 0])
        t_done += tau
        tau *= 2.0
    return v


def expm_action(generator, x: np.ndarray, dt: float) -> np.ndarray:
    """
    Return e^{dt G} x.

    Dense and sparse generators go through scipy's truncated-Taylor action
    algorithm; matrix-free LinearOperators through an Arnoldi projection.
    x may be a vector or a matrix of stacked column vectors.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    x = np.asarray(x, dtype=complex)
    if dt == 0:
        return x.copy()
    if isinstance(generator, LinearOperator):
        if x.ndim == 1:
            return _krylov_action(generator, x, dt)
        return np.column_stack([_krylov_action(generator, col, dt) for col in x.T])
    G = generator if sp.issparse(generator) else np.asarray(generator)
    return expm_multiply(dt * G, x)
