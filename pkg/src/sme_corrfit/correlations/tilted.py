"""
Tilted (counting-field) evolution.

With a source j_mu(t) on every detector, rho^j obeys

    d rho^j/dt = L rho^j + sum_mu  (e^{j_mu} - 1) C_mu rho^j              (jump)
                                  + (j_mu C_mu + j_mu^2 / 2) rho^j        (diffusive)

and Z(j) = Tr[rho^j_T] is the moment-generating functional of the filtered
signals: derivatives of Z at j = 0 are the correlation functions.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from sme_corrfit.correlations.filters import FilterSpec, segment_edges
from sme_corrfit.correlations.correlators import resolve_initial_state
from sme_corrfit.exceptions import InvalidRequestError
from sme_corrfit.quantum.lindblad import OdeSolverConfig, integrate
from sme_corrfit.quantum.model import ConcreteModel, correlation_superop_apply, liouvillian_apply

Source = Tuple[int, FilterSpec, float]


def _fields(sources: Sequence[Source], n_det: int, t: float, a: float, b: float) -> np.ndarray:
    j = np.zeros(n_det)
    for mu, f, weight in sources:
        j[mu] += weight * f.value_on(t, a, b)
    return j


def tilted_evolution(
    m: ConcreteModel,
    sources: Sequence[Source],
    rho0=None,
    T: Optional[float] = None,
    cfg: OdeSolverConfig = OdeSolverConfig(),
) -> Tuple[np.ndarray, float]:
    """
    Integrate the tilted master equation up to T.

    Args:
        sources: [(detector index, filter, weight)]; j_mu(t) = sum of weight * f(t)
            over the sources on mu
        T: final time, defaults to the end of the last filter support

    Returns:
        (rho^j_T, Z(j) = Tr rho^j_T)

    Raises:
        ValueError: a filter support extends past T
    """
    n_det = len(m.detectors)
    for mu, f, _ in sources:
        if not 0 <= mu < n_det:
            raise InvalidRequestError(f"detector index {mu} out of range")
    filters = [f for _, f, _ in sources]
    t_end = max((f.support()[1] for f in filters), default=0.0)
    if T is None:
        T = t_end
    if t_end > T:
        raise ValueError(f"source support ends at {t_end}, after T={T}")

    n = m.dim
    y = resolve_initial_state(m, rho0).astype(complex).ravel()
    if T == 0.0:
        rho = y.reshape(n, n)
        return rho, float(np.trace(rho).real)

    edges = segment_edges(filters, T)
    for a, b in zip(edges[:-1], edges[1:]):

        def rhs(t, v, a=a, b=b):
            rho = v.reshape(n, n)
            out = liouvillian_apply(m, rho)
            for mu, j in enumerate(_fields(sources, n_det, t, a, b)):
                if j == 0.0:
                    continue
                d = m.detectors[mu]
                c_rho = correlation_superop_apply(d, rho)
                if d.is_jump:
                    out += np.expm1(j) * c_rho
                else:
                    out += j * c_rho + 0.5 * j * j * rho
            return out.ravel()

        y = integrate(rhs, y, a, [b], cfg)[-1]
    rho = y.reshape(n, n)
    return rho, float(np.trace(rho).real)
