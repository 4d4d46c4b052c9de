"""
Augmented (sensitivity) generator for n-point filtered correlation functions.

Differentiating the tilted evolution with respect to the source amplitudes
alpha_1..alpha_n at zero yields 2^n coupled linear equations for fictitious
states rho^S, S a subset of the points. Writing A = S \\ S' for a nonzero block
(S <- S'):

    A empty                                      L
    A = {i}                                      f_i C_{mu_i}
    A all on one jump detector mu, |A| >= 2      (prod_{i in A} f_i) C_mu
    A = {i, j} on one diffusive detector         f_i f_j  (identity)
    anything else                                0

States are ordered by subset size, then lexicographically, so the generator is
block lower-triangular with L on the diagonal and the last state carries the
n-point correlation: E[I_f1 ... I_fn] = Tr[rho^{1..n}(T)].

Each filter is divided by a normalisation factor g_i chosen so every source
block has the magnitude of L; the correlation is rescaled by prod g_i.
"""
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from sme_corrfit.correlations.filters import FilterSpec
from sme_corrfit.exceptions import InvalidRequestError
from sme_corrfit.quantum.model import (
    JUMP,
    ConcreteModel,
    correlation_superop_apply,
    liouvillian_apply,
)

MAX_ORDER = 4

Point = Tuple[int, FilterSpec]


@dataclass(frozen=True)
class BlockTerm:
    """Source block: coefficient prod_{i in points} f~_i, operator C_detector or identity."""
    row: int
    col: int
    points: Tuple[int, ...]
    detector: Optional[int]

    def label(self) -> str:
        coef = "*".join(f"f{i + 1}" for i in self.points)
        return coef if self.detector is None else f"{coef}*C{self.detector}"


def ordered_subsets(n: int) -> List[Tuple[int, ...]]:
    return [s for size in range(n + 1) for s in combinations(range(n), size)]


def normalisation_scale(m: ConcreteModel, mu: int, f: FilterSpec) -> float:
    """g_i = max|f_i| * ||C_mu|| / ||L||, falling back to max|f_i| when a norm vanishes."""
    peak = f.max_abs()
    if peak == 0.0:
        return 1.0
    ref = m.liouvillian_norm or 1.0
    c_norm = m.correlation_norm(mu) or ref
    return peak * c_norm / ref


def _source_terms(kinds: Sequence[str], detectors: Sequence[int]) -> List[BlockTerm]:
    n = len(detectors)
    subsets = ordered_subsets(n)
    index = {s: i for i, s in enumerate(subsets)}
    terms = []
    for S in subsets[1:]:
        for size in range(1, len(S) + 1):
            for A in combinations(S, size):
                col = tuple(i for i in S if i not in A)
                mus = {detectors[i] for i in A}
                if size == 1:
                    terms.append(BlockTerm(index[S], index[col], A, detectors[A[0]]))
                elif len(mus) == 1:
                    mu = mus.pop()
                    if kinds[mu] == JUMP:
                        terms.append(BlockTerm(index[S], index[col], A, mu))
                    elif size == 2:
                        terms.append(BlockTerm(index[S], index[col], A, None))
    return terms


class AugmentedGenerator:
    """
    Block generator of the order-n sensitivity system.

    Use apply() for the matrix-free ODE path and superoperator() for the
    piecewise-constant exponentiation path.
    """

    def __init__(self, model: ConcreteModel, points: Sequence[Point], normalise: bool = True):
        self.model = model
        self.points = tuple(points)
        self.order = len(self.points)
        self.subsets = ordered_subsets(self.order)
        self.detectors = tuple(mu for mu, _ in self.points)
        self.filters = tuple(f for _, f in self.points)
        kinds = [d.kind for d in model.detectors]
        self.terms = _source_terms(kinds, self.detectors)
        if normalise:
            self.scales = tuple(normalisation_scale(model, mu, f) for mu, f in self.points)
        else:
            self.scales = (1.0,) * self.order

    @property
    def n_blocks(self) -> int:
        return len(self.subsets)

    @property
    def result_factor(self) -> float:
        return float(np.prod(self.scales))

    def t_end(self) -> float:
        return max(f.support()[1] for f in self.filters)

    def filter_values(self, t: float, seg_start: float = None, seg_end: float = None) -> np.ndarray:
        """Normalised filter values f_i(t)/g_i."""
        if seg_start is None:
            vals = [float(f(t)) for f in self.filters]
        else:
            vals = [f.value_on(t, seg_start, seg_end) for f in self.filters]
        return np.array(vals) / np.array(self.scales)

    def coefficient(self, term: BlockTerm, fvals: np.ndarray) -> float:
        return float(np.prod(fvals[list(term.points)]))

    def block_layout(self) -> List[List[str]]:
        """Human-readable block matrix: 'L' on the diagonal, source labels, '0' elsewhere."""
        layout = [["0"] * self.n_blocks for _ in range(self.n_blocks)]
        for i in range(self.n_blocks):
            layout[i][i] = "L"
        for term in self.terms:
            cell = layout[term.row][term.col]
            layout[term.row][term.col] = term.label() if cell == "0" else f"{cell}+{term.label()}"
        return layout

    def apply(self, states: np.ndarray, fvals: np.ndarray) -> np.ndarray:
        """Generator acting on a stack of 2^n operators of shape (2^n, d, d)."""
        out = liouvillian_apply(self.model, states)
        for term in self.terms:
            c = self.coefficient(term, fvals)
            if c == 0.0:
                continue
            src = states[term.col]
            if term.detector is not None:
                src = correlation_superop_apply(self.model.detectors[term.detector], src)
            out[term.row] += c * src
        return out

    def superoperator(self, fvals: np.ndarray) -> sp.csr_matrix:
        """Sparse block matrix of the generator for fixed filter values."""
        d2 = self.model.dim ** 2
        diag = self.model.liouvillian_superop
        blocks = [[None] * self.n_blocks for _ in range(self.n_blocks)]
        for i in range(self.n_blocks):
            blocks[i][i] = diag
        ident = sp.identity(d2, dtype=complex, format="csr")
        for term in self.terms:
            c = self.coefficient(term, fvals)
            if c == 0.0:
                continue
            op = ident if term.detector is None else self.model.correlation_superop(term.detector)
            cell = blocks[term.row][term.col]
            blocks[term.row][term.col] = c * op if cell is None else cell + c * op
        return sp.bmat(blocks, format="csr")

    def linear_operator(self, fvals: np.ndarray) -> LinearOperator:
        """Matrix-free view of superoperator(fvals) on the flattened stack."""
        d = self.model.dim
        shape = (self.n_blocks * d * d,) * 2

        def matvec(x):
            states = np.asarray(x, dtype=complex).reshape(self.n_blocks, d, d)
            return self.apply(states, fvals).ravel()

        return LinearOperator(shape, matvec=matvec, dtype=complex)

    def initial_state(self, rho0: np.ndarray) -> np.ndarray:
        d = self.model.dim
        y = np.zeros((self.n_blocks, d, d), dtype=complex)
        y[0] = rho0
        return y.ravel()

    def final_trace(self, y: np.ndarray) -> complex:
        d = self.model.dim
        last = y.reshape(self.n_blocks, d, d)[-1]
        return complex(np.trace(last)) * self.result_factor


def assemble_augmented_generator(
    m: ConcreteModel, points: Sequence[Point], normalise: bool = True
) -> AugmentedGenerator:
    """
    Assemble the order-n sensitivity system for points [(mu_i, f_i)].

    Raises:
        InvalidRequestError: n outside 1..4 or an unknown detector index
    """
    n = len(points)
    if not 1 <= n <= MAX_ORDER:
        raise InvalidRequestError(f"augmented systems are assembled for 1 <= n <= {MAX_ORDER}, got {n}")
    for mu, f in points:
        if not 0 <= mu < len(m.detectors):
            raise InvalidRequestError(f"detector index {mu} out of range")
        if not isinstance(f, FilterSpec):
            raise InvalidRequestError("augmented systems need FilterSpec points")
    return AugmentedGenerator(m, points, normalise=normalise)


__all__ = [
    "AugmentedGenerator",
    "BlockTerm",
    "MAX_ORDER",
    "assemble_augmented_generator",
    "normalisation_scale",
    "ordered_subsets",
]
