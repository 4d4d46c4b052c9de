"""
Symmetry argument for vanishing odd-order correlations.

If a unitary superoperator S(rho) = P rho P^dag satisfies

    (i)   [L, S] = 0
    (ii)  S(rho0) = rho0
    (iii) {C_mu, S} = 0 for every detector

then every odd-order correlation function of the signals is zero. The check
evaluates the three conditions numerically and, when they hold, confirms the
claim on a set of odd-order binned correlations.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from sme_corrfit.correlations.correlators import (
    CorrelationRequest,
    binned_correlation,
    resolve_initial_state,
)
from sme_corrfit.quantum.model import ConcreteModel
from sme_corrfit.quantum.operators import as_operator, dag, parity_operator

STATE_TOL = 1e-8


@dataclass
class SymmetryReport:
    conditions: Dict[str, float] = field(default_factory=dict)
    violated: List[str] = field(default_factory=list)
    # (order, detector, bins, value / scale, value, scale)
    values: List[Tuple[int, int, Tuple[int, ...], float, float, float]] = field(default_factory=list)
    value_tol: float = 1e-8

    @property
    def conditions_hold(self) -> bool:
        return not self.violated

    @property
    def max_relative_value(self) -> float:
        return max((abs(v[3]) for v in self.values), default=0.0)

    @property
    def odd_orders_vanish(self) -> bool:
        """True only if the conditions hold and every probed value is below value_tol."""
        return self.conditions_hold and self.max_relative_value <= self.value_tol

    def as_dict(self) -> dict:
        return {
            "conditions": self.conditions,
            "violated": self.violated,
            "conditions_hold": self.conditions_hold,
            "odd_orders_vanish": self.odd_orders_vanish,
            "values": [
                {
                    "order": o,
                    "detector": mu,
                    "bins": list(bins),
                    "relative_value": rel,
                    "value": raw,
                    "scale": scale,
                }
                for o, mu, bins, rel, raw, scale in self.values
            ],
        }


def _norm1(a: sp.spmatrix) -> float:
    return float(abs(a).sum(axis=0).max()) if a.nnz else 0.0


def parity_superop(P: np.ndarray) -> sp.csr_matrix:
    """S(rho) = P rho P^dag on row-major vec(rho)."""
    Ps = sp.csr_matrix(P)
    return sp.csr_matrix(sp.kron(Ps, Ps.conj()))


def _probe_bins(order: int, n_bins: int, n_probe: int) -> List[Tuple[int, ...]]:
    sets = [tuple(range(s, s + order)) for s in range(n_probe)]
    sets.append(tuple(range(0, 2 * order, 2)))
    unique = []
    for bins in sets:
        if bins[-1] < n_bins and bins not in unique:
            unique.append(bins)
    return unique


def symmetry_check(
    m: ConcreteModel,
    symmetry: Optional[np.ndarray] = None,
    orders: Sequence[int] = (1, 3),
    n_probe: int = 4,
    tol: float = 1e-10,
    value_tol: float = 1e-8,
    rho0=None,
) -> SymmetryReport:
    """
    Check conditions (i)-(iii) for the unitary `symmetry` (photon-number parity
    by default) and probe odd-order correlations on non-overlapping bins.

    Residuals are relative: ||[L, S]|| / ||L||, ||S(rho0) - rho0||,
    ||{C_mu, S}|| / ||C_mu||. Probed values are divided by the product of
    ||C_mu|| G over their points (the natural scale of a binned signal), so
    value_tol bounds value / scale, not the value in signal units. The report
    keeps the raw value and the scale next to the ratio.
    """
    P = parity_operator(m.dim) if symmetry is None else as_operator(symmetry, m.dim)
    S = parity_superop(P)
    L = m.liouvillian_superop
    rho = resolve_initial_state(m, rho0)
    report = SymmetryReport(value_tol=value_tol)

    commutator = _norm1(L @ S - S @ L) / (m.liouvillian_norm or 1.0)
    report.conditions["liouvillian_commutes"] = commutator
    if commutator > tol:
        report.violated.append("liouvillian_commutes")

    invariance = float(np.max(np.abs(P @ rho @ dag(P) - rho)))
    report.conditions["state_invariant"] = invariance
    if invariance > STATE_TOL:
        report.violated.append("state_invariant")

    for mu, d in enumerate(m.detectors):
        C = m.correlation_superop(mu)
        key = f"anticommutes_{d.name}"
        residual = _norm1(C @ S + S @ C) / (m.correlation_norm(mu) or 1.0)
        report.conditions[key] = residual
        if residual > tol:
            report.violated.append(key)

    if not report.conditions_hold:
        return report

    for order in orders:
        if order % 2 == 0:
            raise ValueError(f"symmetry probes take odd orders, got {order}")
        for mu, d in enumerate(m.detectors):
            natural = (m.correlation_norm(mu) * d.bin_scale * d.bin_width) ** order
            for bins in _probe_bins(order, d.n_bins, n_probe):
                req = CorrelationRequest.binned(m, [(mu, k) for k in bins])
                value = binned_correlation(m, req, rho)
                scale = natural or 1.0
                report.values.append((order, mu, bins, value / scale, float(value), scale))
    return report
