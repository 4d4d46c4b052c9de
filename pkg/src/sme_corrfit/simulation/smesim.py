"""
Synthetic measurement records from stochastic master equation trajectories.

Every substep of width dt applies a first-order CPTP update to a stack of
trajectories at once:

    M        = I - (iH + 1/2 sum_k L_k^dag L_k + 1/2 sum_jump theta) dt
                 + sum_diffusive sqrt(eta) L dY
    no click: rho' ~ M rho M^dag + sum_k (1 - eta_k) L_k rho L_k^dag dt
    click:    rho' ~ theta rho~ + eta L rho~ L^dag,   rho~ = D rho D^dag

with dY = sqrt(eta) Tr[(L + L^dag) rho] dt + dW and click probability
(theta + eta Tr[L rho L^dag]) dt. D = I + sum_diffusive sqrt(eta) L dY is the
diffusive part of M, so a click in a mixed model still carries the homodyne
update of its substep (D = I without diffusive detectors). eta_k is the
efficiency of the detector watching channel k (0 for unmonitored channels).

Binned signals: jump detectors count clicks per bin, diffusive detectors
record I_k = G/Delta_t * sum of dY over the bin.
"""
import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from sme_corrfit.exceptions import InvalidRequestError, StepSizeError
from sme_corrfit.quantum.lindblad import steady_state
from sme_corrfit.quantum.model import ConcreteModel, model_fingerprint
from sme_corrfit.quantum.operators import dag

CPTP_FIRST_ORDER = "cptp_first_order"
MAX_CLICK_PROBABILITY = 0.1
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class SimConfig:
    """
    Args:
        substeps_per_bin: Delta_t / dt
        n_exp: number of trajectories
        seed: root of every random stream
        chunk_size: trajectories simulated together; part of the random
            stream layout, so results do not depend on the number of workers
    """
    substeps_per_bin: int
    n_exp: int
    seed: int = 0
    chunk_size: int = 1000
    scheme: str = CPTP_FIRST_ORDER

    def __post_init__(self):
        if self.substeps_per_bin < 1:
            raise ValueError("substeps_per_bin must be >= 1")
        if self.n_exp < 1:
            raise ValueError("n_exp must be >= 1")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.scheme != CPTP_FIRST_ORDER:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def dt_fine(self, bin_width: float) -> float:
        return bin_width / self.substeps_per_bin


@dataclass
class TrajectoryBatch:
    """values[j, mu, k]: signal of detector mu in bin k of trajectory j."""
    values: np.ndarray
    detector_names: Tuple[str, ...]
    detector_kinds: Tuple[str, ...]
    bin_width: float
    seed: int
    substeps_per_bin: int
    chunk_size: int
    model_fingerprint: str
    final_states: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[1] != len(self.detector_names):
            raise ValueError(f"values must be (n_exp, {len(self.detector_names)}, n_bins), got {self.values.shape}")

    @property
    def n_exp(self) -> int:
        return self.values.shape[0]

    @property
    def n_detectors(self) -> int:
        return self.values.shape[1]

    @property
    def n_bins(self) -> int:
        return self.values.shape[2]

    def select(self, index) -> "TrajectoryBatch":
        """Batch restricted to the trajectories in index (slice or integer array)."""
        states = None if self.final_states is None else self.final_states[index]
        return dataclasses.replace(self, values=self.values[index], final_states=states)


# ---------------------------------------------------------------------------
# one substep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _StepOperators:
    K: np.ndarray                      # iH + 1/2 sum L^dag L + 1/2 sum theta
    jumps: np.ndarray                  # (n_L, n, n)
    unobserved: np.ndarray             # (n_L,) weight of L rho L^dag dt in the no-click map
    diffusive: Tuple[int, ...]
    jump_detectors: Tuple[int, ...]
    L: np.ndarray                      # (n_det, n, n)
    sqrt_eta: np.ndarray
    eta: np.ndarray
    theta: np.ndarray


@lru_cache(maxsize=16)
def _step_operators(m: ConcreteModel) -> _StepOperators:
    n = m.dim
    unobserved = np.ones(len(m.jumps))
    for d in m.detectors:
        for k, L in enumerate(m.jumps):
            if np.array_equal(d.L, L):
                unobserved[k] -= d.efficiency
    theta = np.array([d.dark_rate for d in m.detectors])
    loss = sum((dag(L) @ L for L in m.jumps), np.zeros((n, n), dtype=complex))
    K = 1j * m.H + 0.5 * loss + 0.5 * theta.sum() * np.eye(n)
    eta = np.array([d.efficiency for d in m.detectors])
    return _StepOperators(
        K=K,
        jumps=np.array(m.jumps).reshape(-1, n, n),
        unobserved=np.clip(unobserved, 0.0, 1.0),
        diffusive=tuple(mu for mu, d in enumerate(m.detectors) if not d.is_jump),
        jump_detectors=tuple(mu for mu, d in enumerate(m.detectors) if d.is_jump),
        L=np.array([d.L for d in m.detectors]).reshape(-1, n, n),
        sqrt_eta=np.sqrt(eta),
        eta=eta,
        theta=theta,
    )


def _normalise(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + dag(rho))
    tr = np.einsum("bii->b", rho).real
    return rho / tr[:, None, None]


def cptp_step(
    m: ConcreteModel,
    rho: np.ndarray,
    dt: float,
    dW: np.ndarray,
    u: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One substep for a stack of states rho (B, n, n).

    Args:
        dW: (B, n_diffusive) Wiener increments with variance dt
        u: (B,) uniforms in [0, 1) deciding the (at most one) click

    Returns:
        (rho', dY (B, n_diffusive), dN (B, n_jump))

    Raises:
        StepSizeError: the total click probability exceeds 0.1 in a substep
    """
    ops = _step_operators(m)
    B, n = rho.shape[0], m.dim
    M = np.broadcast_to(np.eye(n) - ops.K * dt, (B, n, n)).copy()
    D = np.broadcast_to(np.eye(n, dtype=complex), (B, n, n)).copy()

    dY = np.zeros((B, len(ops.diffusive)))
    for i, mu in enumerate(ops.diffusive):
        L = ops.L[mu]
        mean = ops.sqrt_eta[mu] * np.einsum("ij,bji->b", L + dag(L), rho).real * dt
        dY[:, i] = mean + dW[:, i]
        M += ops.sqrt_eta[mu] * dY[:, i, None, None] * L
        D += ops.sqrt_eta[mu] * dY[:, i, None, None] * L

    out = M @ rho @ dag(M)
    for k, L in enumerate(ops.jumps):
        if ops.unobserved[k] > 0.0:
            out += ops.unobserved[k] * dt * (L @ rho @ dag(L))

    dN = np.zeros((B, len(ops.jump_detectors)))
    if ops.jump_detectors:
        p = np.empty((B, len(ops.jump_detectors)))
        for i, mu in enumerate(ops.jump_detectors):
            L = ops.L[mu]
            p[:, i] = (ops.theta[mu] + ops.eta[mu] * np.einsum("ij,bji->b", dag(L) @ L, rho).real) * dt
        total = p.sum(axis=1)
        if np.any(total > MAX_CLICK_PROBABILITY):
            raise StepSizeError(
                f"click probability {total.max():.3f} per substep exceeds {MAX_CLICK_PROBABILITY}; reduce dt"
            )
        edges = np.cumsum(p, axis=1)
        clicked = u[:, None] < edges
        # first edge above u picks the detector
        which = np.where(clicked.any(axis=1), clicked.argmax(axis=1), -1)
        for i, mu in enumerate(ops.jump_detectors):
            hit = which == i
            if not np.any(hit):
                continue
            L = ops.L[mu]
            r = rho[hit]
            if ops.diffusive:
                r = D[hit] @ r @ dag(D[hit])
            out[hit] = ops.theta[mu] * r + ops.eta[mu] * (L @ r @ dag(L))
            dN[hit, i] = 1.0
    return _normalise(out), dY, dN


def _as_stack(rho: np.ndarray) -> Tuple[np.ndarray, bool]:
    rho = np.asarray(rho, dtype=complex)
    return (rho[None], True) if rho.ndim == 2 else (rho, False)


def step_diffusive(rho: np.ndarray, m: ConcreteModel, dt: float, dW: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Diffusive-only substep; returns (rho', dY per detector)."""
    if any(d.is_jump for d in m.detectors):
        raise InvalidRequestError("step_diffusive needs a model without jump detectors")
    stack, single = _as_stack(rho)
    dW = np.asarray(dW, dtype=float).reshape(stack.shape[0], -1)
    out, dY, _ = cptp_step(m, stack, dt, dW, np.ones(stack.shape[0]))
    return (out[0], dY[0]) if single else (out, dY)


def step_jump(rho: np.ndarray, m: ConcreteModel, dt: float, u) -> Tuple[np.ndarray, np.ndarray]:
    """Jump-only substep; returns (rho', dN per detector)."""
    if any(not d.is_jump for d in m.detectors):
        raise InvalidRequestError("step_jump needs a model without diffusive detectors")
    stack, single = _as_stack(rho)
    u = np.asarray(u, dtype=float).reshape(stack.shape[0])
    out, _, dN = cptp_step(m, stack, dt, np.zeros((stack.shape[0], 0)), u)
    return (out[0], dN[0]) if single else (out, dN)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def bin_rng(seed: int, chunk: int, k: int) -> np.random.Generator:
    """Counter-based stream for chunk `chunk`, bin k."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk, k))))


def _check_positive(rho: np.ndarray, k: int):
    lam = np.linalg.eigvalsh(rho)[:, 0]
    if lam.min() < -POSITIVITY_TOL:
        raise StepSizeError(f"state lost positivity (lambda_min={lam.min():.2e}) in bin {k}; reduce dt")


def _initial(m: ConcreteModel) -> np.ndarray:
    return steady_state(m) if isinstance(m.rho0, str) else m.rho0


def _simulate_chunk(m: ConcreteModel, cfg: SimConfig, chunk: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    ops = _step_operators(m)
    n_det = len(m.detectors)
    n_bins = max(d.n_bins for d in m.detectors)
    bin_width = m.detectors[0].bin_width
    dt = cfg.dt_fine(bin_width)
    n_diff = len(ops.diffusive)

    rho = np.broadcast_to(_initial(m), (size, m.dim, m.dim)).astype(complex)
    values = np.zeros((size, n_det, n_bins))
    for k in range(n_bins):
        rng = bin_rng(cfg.seed, chunk, k)
        dW = rng.normal(0.0, np.sqrt(dt), size=(cfg.substeps_per_bin, size, n_diff))
        u = rng.random(size=(cfg.substeps_per_bin, size))
        for s in range(cfg.substeps_per_bin):
            rho, dY, dN = cptp_step(m, rho, dt, dW[s], u[s])
            for i, mu in enumerate(ops.diffusive):
                values[:, mu, k] += dY[:, i]
            for i, mu in enumerate(ops.jump_detectors):
                values[:, mu, k] += dN[:, i]
        _check_positive(rho, k)
    for mu, d in enumerate(m.detectors):
        if not d.is_jump:
            values[:, mu, :] *= d.gain / d.bin_width
    return values, rho


def simulate_batch(
    m: ConcreteModel,
    cfg: SimConfig,
    n_jobs: int = 1,
    verbose: bool = False,
    keep_states: bool = False,
) -> TrajectoryBatch:
    """
    Simulate cfg.n_exp independent trajectories and record the binned signals.

    Trajectories are split into chunks of cfg.chunk_size; each (chunk, bin)
    pair draws from its own counter-based stream, so the batch is identical
    for every n_jobs.

    Args:
        keep_states: also return the final conditional states

    Raises:
        StepSizeError: click probability above 0.1 per substep or loss of positivity
    """
    if not m.detectors:
        raise InvalidRequestError("model has no detectors to simulate")
    widths = {d.bin_width for d in m.detectors}
    if len(widths) != 1 or len({d.n_bins for d in m.detectors}) != 1:
        raise InvalidRequestError("all detectors must share bin width and number of bins")

    sizes: List[int] = []
    remaining = cfg.n_exp
    while remaining > 0:
        sizes.append(min(cfg.chunk_size, remaining))
        remaining -= sizes[-1]
    if verbose:
        print(f"Simulating {cfg.n_exp} trajectories in {len(sizes)} chunk(s), "
              f"{cfg.substeps_per_bin} substeps per bin...")

    results = Parallel(n_jobs=n_jobs)(
        delayed(_simulate_chunk)(m, cfg, c, size) for c, size in enumerate(sizes)
    )
    if verbose:
        print(f"  Completed {len(results)} chunk(s)")

    values = np.concatenate([r[0] for r in results], axis=0)
    states = np.concatenate([r[1] for r in results], axis=0) if keep_states else None
    return TrajectoryBatch(
        values=values,
        detector_names=tuple(d.name for d in m.detectors),
        detector_kinds=tuple(d.kind for d in m.detectors),
        bin_width=m.detectors[0].bin_width,
        seed=cfg.seed,
        substeps_per_bin=cfg.substeps_per_bin,
        chunk_size=cfg.chunk_size,
        model_fingerprint=model_fingerprint(m),
        final_states=states,
    )


def split_record(values: np.ndarray, n_bins: int) -> np.ndarray:
    """(n_rec, n_det, n_windows * n_bins) -> (n_rec * n_windows, n_det, n_bins), record-major."""
    values = np.asarray(values)
    n_rec, n_det, total = values.shape
    if total % n_bins:
        raise ValueError(f"record length {total} is not a multiple of {n_bins}")
    n_windows = total // n_bins
    windows = values.reshape(n_rec, n_det, n_windows, n_bins)
    return windows.transpose(0, 2, 1, 3).reshape(n_rec * n_windows, n_det, n_bins)


def simulate_record(
    m: ConcreteModel,
    cfg: SimConfig,
    n_windows: int,
    n_jobs: int = 1,
    verbose: bool = False,
) -> TrajectoryBatch:
    """
    Simulate cfg.n_exp long stationary records and cut each into n_windows
    consecutive windows of the detectors' n_bins bins.

    Raises:
        InvalidRequestError: n_windows < 1 or the initial state is not stationary
    """
    if n_windows < 1:
        raise InvalidRequestError("n_windows must be >= 1")
    rho0 = _initial(m)
    residual = np.abs(m.liouvillian_superop @ rho0.ravel()).sum()
    if residual > 1e-8 * m.liouvillian_norm:
        raise InvalidRequestError("simulate_record needs a stationary initial state")
    n_bins = m.detectors[0].n_bins
    long_detectors = tuple(dataclasses.replace(d, n_bins=n_bins * n_windows) for d in m.detectors)
    long_model = dataclasses.replace(m, detectors=long_detectors, rho0=rho0)
    record = simulate_batch(long_model, cfg, n_jobs=n_jobs, verbose=verbose)
    return dataclasses.replace(
        record,
        values=split_record(record.values, n_bins),
        model_fingerprint=model_fingerprint(m),
        final_states=None,
    )
