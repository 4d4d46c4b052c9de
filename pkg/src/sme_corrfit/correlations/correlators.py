"""
Exact multi-time correlation functions of detector signals.

Modes:
    sharp          Tr[C e^{(t_n - t_{n-1}) L} ... C e^{t_1 L} rho0] at distinct times
    filtered_ode   augmented sensitivity system integrated with an adaptive RK
    binned_expm    same system, exponentiated bin by bin (rectangular filters)
    sharp_approx   G^n x sharp value at bin centres (non-coincident bins only)
"""
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from sme_corrfit.correlations.augmented import (
    MAX_ORDER,
    assemble_augmented_generator,
    normalisation_scale,
)
from sme_corrfit.correlations.filters import FilterSpec, bin_filter, segment_edges
from sme_corrfit.exceptions import InvalidRequestError, OrderingError
from sme_corrfit.quantum.lindblad import OdeSolverConfig, expm_action, integrate, steady_state
from sme_corrfit.quantum.model import ConcreteModel

SHARP = "sharp"
FILTERED_ODE = "filtered_ode"
BINNED_EXPM = "binned_expm"
SHARP_APPROX = "sharp_approx"
MODES = (SHARP, FILTERED_ODE, BINNED_EXPM, SHARP_APPROX)

BinPoint = Tuple[int, int]


@dataclass(frozen=True)
class CorrelationRequest:
    """
    Ordered points (detector index, FilterSpec or sharp time) and an evaluation mode.
    """
    points: Tuple[Tuple[int, Union[FilterSpec, float]], ...]
    mode: str = BINNED_EXPM

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((int(mu), p) for mu, p in self.points))
        if self.mode not in MODES:
            raise InvalidRequestError(f"unknown correlation mode {self.mode!r}")
        if not self.points:
            raise InvalidRequestError("a correlation request needs at least one point")
        if self.mode == SHARP:
            if any(isinstance(p, FilterSpec) for _, p in self.points):
                raise InvalidRequestError("sharp requests take times, not filters")
        else:
            if not all(isinstance(p, FilterSpec) for _, p in self.points):
                raise InvalidRequestError(f"{self.mode} requests take FilterSpec points")
            if self.mode != SHARP_APPROX and len(self.points) > MAX_ORDER:
                raise InvalidRequestError(f"order {len(self.points)} exceeds {MAX_ORDER}")

    @property
    def order(self) -> int:
        return len(self.points)

    @classmethod
    def binned(cls, m: ConcreteModel, bins: Sequence[BinPoint], mode: str = BINNED_EXPM):
        """Request for E[I_{k1} ... I_{kn}] on rectangular bins [(mu, k), ...]."""
        return cls(tuple((mu, bin_filter(m.detectors[mu], k)) for mu, k in bins), mode)


def resolve_initial_state(m: ConcreteModel, rho0) -> np.ndarray:
    if rho0 is not None:
        return np.asarray(rho0, dtype=complex)
    if isinstance(m.rho0, str):
        return steady_state(m)
    return m.rho0


def _trace(vec: np.ndarray, dim: int) -> complex:
    return complex(np.sum(vec[:: dim + 1]))


# ---------------------------------------------------------------------------
# sharp signals
# ---------------------------------------------------------------------------

def sharp_correlation(m: ConcreteModel, req: CorrelationRequest, rho0=None) -> float:
    """
    E[I_{t1} ... I_{tn}] of sharp signals at strictly increasing times.

    Raises:
        OrderingError: times are not strictly increasing (equal times carry a
            delta distribution and are not defined pointwise)
    """
    if req.mode != SHARP:
        raise InvalidRequestError("sharp_correlation needs a sharp request")
    times = np.array([t for _, t in req.points], dtype=float)
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise OrderingError(f"sharp times must be non-negative and strictly increasing: {times}")
    x = resolve_initial_state(m, rho0).ravel()
    superop = m.liouvillian_superop
    t_prev = 0.0
    for mu, t in req.points:
        x = expm_action(superop, x, t - t_prev)
        x = m.correlation_superop(mu) @ x
        t_prev = t
    return _trace(x, m.dim).real


# ---------------------------------------------------------------------------
# filtered / binned signals
# ---------------------------------------------------------------------------

def _resolve_end(gen, T: Optional[float]) -> float:
    t_end = gen.t_end()
    if T is None:
        return t_end
    if T < t_end:
        raise InvalidRequestError(f"T={T} ends before the last filter support ({t_end})")
    # Tr o L = 0: nothing after the supports changes the trace
    return t_end


def filtered_correlation(
    m: ConcreteModel,
    req: CorrelationRequest,
    rho0=None,
    cfg: OdeSolverConfig = OdeSolverConfig(),
    T: Optional[float] = None,
) -> float:
    """
    E[I_f1 ... I_fn] by integrating the augmented system from (rho0, 0, ..., 0).

    Integration restarts at every filter breakpoint.
    """
    if req.mode not in (FILTERED_ODE, BINNED_EXPM):
        raise InvalidRequestError("filtered_correlation needs filter points")
    gen = assemble_augmented_generator(m, req.points)
    t_end = _resolve_end(gen, T)
    shape = (gen.n_blocks, m.dim, m.dim)
    y = gen.initial_state(resolve_initial_state(m, rho0))
    edges = segment_edges(gen.filters, t_end)
    for a, b in zip(edges[:-1], edges[1:]):

        def rhs(t, v, a=a, b=b):
            fvals = gen.filter_values(t, a, b)
            return gen.apply(v.reshape(shape), fvals).ravel()

        y = integrate(rhs, y, a, [b], cfg)[-1]
    return gen.final_trace(y).real


def binned_correlation(
    m: ConcreteModel,
    req: CorrelationRequest,
    rho0=None,
    matrix_free: bool = False,
) -> float:
    """
    E[I_k1 ... I_kn] for rectangular bins by exponentiating the piecewise-constant
    augmented generator interval by interval.

    Args:
        matrix_free: use the Krylov action on the block operator instead of the
            sparse block matrix

    Raises:
        InvalidRequestError: a filter is not a rectangular bin
    """
    if not all(f.is_rect for _, f in req.points):
        raise InvalidRequestError("binned_correlation only accepts rect_bin filters")
    gen = assemble_augmented_generator(m, req.points)
    edges = segment_edges(gen.filters, gen.t_end())
    y = gen.initial_state(resolve_initial_state(m, rho0))
    for a, b in zip(edges[:-1], edges[1:]):
        fvals = gen.filter_values(0.5 * (a + b))
        op = gen.linear_operator(fvals) if matrix_free else gen.superoperator(fvals)
        y = expm_action(op, y, b - a)
    return gen.final_trace(y).real


def sharp_approx_binned(m: ConcreteModel, req: CorrelationRequest, rho0=None) -> float:
    """
    Centre-point approximation E[I_k1 ... I_kn] ~ prod(int f_i) E[I_{t'_1} ... I_{t'_n}],
    t'_k = k dt + dt/2.

    Raises:
        InvalidRequestError: bins coincide or overlap, or a filter is not rectangular
    """
    if not all(f.is_rect for _, f in req.points):
        raise InvalidRequestError("sharp_approx needs rect_bin filters")
    ordered = sorted(req.points, key=lambda p: p[1].center)
    for (_, f1), (_, f2) in zip(ordered[:-1], ordered[1:]):
        if f2.support()[0] < f1.support()[1]:
            raise InvalidRequestError("sharp approximation is not valid for coincident bins")
    factor = float(np.prod([f.integral() for _, f in ordered]))
    sharp = CorrelationRequest(tuple((mu, f.center) for mu, f in ordered), SHARP)
    return factor * sharp_correlation(m, sharp, rho0)


def correlation(m: ConcreteModel, req: CorrelationRequest, rho0=None, cfg: OdeSolverConfig = None) -> float:
    """Evaluate req in its own mode."""
    if req.mode == SHARP:
        return sharp_correlation(m, req, rho0)
    if req.mode == FILTERED_ODE:
        return filtered_correlation(m, req, rho0, cfg or OdeSolverConfig())
    if req.mode == BINNED_EXPM:
        return binned_correlation(m, req, rho0)
    return sharp_approx_binned(m, req, rho0)


# ---------------------------------------------------------------------------
# staged series
# ---------------------------------------------------------------------------

def _one_point_generator(m: ConcreteModel, mu: int, fval: float):
    """[[L, 0], [fval C_mu, L]] as a sparse block matrix."""
    L = m.liouvillian_superop
    return sp.bmat([[L, None], [fval * m.correlation_superop(mu), L]], format="csr")


def _propagate_to_bins(m: ConcreteModel, x: np.ndarray, dt: float, starts: Sequence[int], first: int) -> Dict[int, np.ndarray]:
    """Evolve x (given at the start of bin `first`) with L and collect it at each requested bin start."""
    superop = m.liouvillian_superop
    out = {}
    current = first
    for k in sorted(set(starts)):
        x = expm_action(superop, x, (k - current) * dt)
        current = k
        out[k] = x
    return out


def one_point_series(m: ConcreteModel, mu: int, bins: Sequence[int], rho0=None) -> np.ndarray:
    """E[I_k] for every k in bins: evolve rho once, then one bin-wide step per k."""
    d = m.detectors[mu]
    dt = d.bin_width
    rho = resolve_initial_state(m, rho0).ravel()
    at_start = _propagate_to_bins(m, rho, dt, bins, 0)
    f0 = bin_filter(d, 0)
    g = normalisation_scale(m, mu, f0)
    gen = _one_point_generator(m, mu, f0.max_abs() / g)
    n2 = m.dim ** 2
    keys = sorted(at_start)
    X = np.zeros((2 * n2, len(keys)), dtype=complex)
    for j, k in enumerate(keys):
        X[:n2, j] = at_start[k]
    X = expm_action(gen, X, dt)
    values = {k: g * _trace(X[n2:, j], m.dim).real for j, k in enumerate(keys)}
    return np.array([values[k] for k in bins])


def batch_two_point(
    m: ConcreteModel,
    detectors: Tuple[int, int],
    k_max: int,
    rho0=None,
) -> np.ndarray:
    """
    E[I^{mu_a}_0 I^{mu_b}_k] for k = 1..k_max with the staged scheme.

    (rho, rho^1) is evolved across bin 0 once; rho^1 is then carried by L to the
    start of every bin k and one bin-wide one-point step with C_{mu_b} gives the
    two-point value.
    """
    mu_a, mu_b = detectors
    da, db = m.detectors[mu_a], m.detectors[mu_b]
    if not np.isclose(da.bin_width, db.bin_width, rtol=1e-12, atol=0.0):
        raise InvalidRequestError("batch_two_point needs detectors with equal bin widths")
    if k_max < 1:
        raise InvalidRequestError("k_max must be at least 1")
    dt = da.bin_width
    n2 = m.dim ** 2
    fa, fb = bin_filter(da, 0), bin_filter(db, 1)
    ga, gb = normalisation_scale(m, mu_a, fa), normalisation_scale(m, mu_b, fb)

    x0 = np.zeros(2 * n2, dtype=complex)
    x0[:n2] = resolve_initial_state(m, rho0).ravel()
    x1 = expm_action(_one_point_generator(m, mu_a, fa.max_abs() / ga), x0, dt)
    ks = list(range(1, k_max + 1))
    at_start = _propagate_to_bins(m, x1[n2:], dt, ks, 1)

    X = np.zeros((2 * n2, k_max), dtype=complex)
    for j, k in enumerate(ks):
        X[:n2, j] = at_start[k]
    X = expm_action(_one_point_generator(m, mu_b, fb.max_abs() / gb), X, dt)
    return np.array([ga * gb * _trace(X[n2:, j], m.dim).real for j in range(k_max)])


def predict(
    m: ConcreteModel,
    requests: Sequence[Sequence[BinPoint]],
    mode: str = BINNED_EXPM,
    rho0=None,
    cfg: OdeSolverConfig = None,
) -> np.ndarray:
    """
    Exact values for many binned requests [(mu, k), ...].

    In binned_expm mode one-point series and (bin 0, bin k) two-point series are
    served by the staged schemes; everything else is evaluated one at a time.
    """
    rho0 = resolve_initial_state(m, rho0)
    values = np.full(len(requests), np.nan)
    if mode != BINNED_EXPM:
        for i, bins in enumerate(requests):
            values[i] = correlation(m, CorrelationRequest.binned(m, bins, mode), rho0, cfg)
        return values

    one_point: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    two_point: Dict[Tuple[int, int], List[Tuple[int, int]]] = defaultdict(list)
    for i, bins in enumerate(requests):
        bins = sorted((tuple(p) for p in bins), key=lambda p: p[1])
        if len(bins) == 1:
            one_point[bins[0][0]].append((i, bins[0][1]))
        elif len(bins) == 2 and bins[0][1] == 0 and bins[1][1] >= 1:
            two_point[(bins[0][0], bins[1][0])].append((i, bins[1][1]))
        else:
            values[i] = binned_correlation(m, CorrelationRequest.binned(m, bins), rho0)

    for mu, items in one_point.items():
        series = one_point_series(m, mu, [k for _, k in items], rho0)
        for (i, _), v in zip(items, series):
            values[i] = v
    for pair, items in two_point.items():
        series = batch_two_point(m, pair, max(k for _, k in items), rho0)
        for i, k in items:
            values[i] = series[k - 1]
    return values
