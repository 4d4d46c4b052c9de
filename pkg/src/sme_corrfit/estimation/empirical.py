"""
Empirical correlation estimates from trajectory batches.
"""
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from sme_corrfit.simulation.smesim import TrajectoryBatch

BinPoint = Tuple[int, int]


@dataclass(frozen=True)
class CorrelationEstimate:
    """Sample mean of prod_i I^{mu_i}_{k_i} with its standard error."""
    points: Tuple[BinPoint, ...]
    value: float
    sem: float
    n_exp: int

    @property
    def order(self) -> int:
        return len(self.points)

    def label(self, detector_names: Sequence[str] = None) -> str:
        def name(mu):
            return detector_names[mu] if detector_names else str(mu)

        return "E[" + " ".join(f"{name(mu)}_{k}" for mu, k in self.points) + "]"


def _normalise_points(points) -> Tuple[BinPoint, ...]:
    return tuple((int(mu), int(k)) for mu, k in points)


def empirical_correlation(batch: TrajectoryBatch, requests: Sequence[Sequence[BinPoint]]) -> List[CorrelationEstimate]:
    """
    Estimate E[I_{k1} ... I_{kn}] for each request [(mu, k), ...].

    value = mean over trajectories of the product, sem = sample std (ddof=1)
    / sqrt(n_exp); a single trajectory gives sem = NaN.

    Raises:
        IndexError: a detector or bin index is outside the batch
    """
    estimates = []
    n = batch.n_exp
    for req in requests:
        points = _normalise_points(req)
        if not points:
            raise ValueError("empty correlation request")
        product = np.ones(n)
        for mu, k in points:
            if not (0 <= mu < batch.n_detectors and 0 <= k < batch.n_bins):
                raise IndexError(
                    f"point ({mu}, {k}) outside batch of {batch.n_detectors} detectors x {batch.n_bins} bins"
                )
            product = product * batch.values[:, mu, k]
        value = float(product.mean())
        sem = float(product.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        estimates.append(CorrelationEstimate(points, value, sem, n))
    return estimates


def estimate_gain(vacuum_batch: TrajectoryBatch, bin_width: float = None, detector: int = 0) -> Tuple[float, float]:
    """
    Calibrate the acquisition gain from a vacuum record: E[I_k^2] = G^2 / dt.

    Every bin's square is averaged per trajectory, so the estimate is
    G = sqrt(mean(I_k^2) dt) and its std follows from the SEM of that mean.
    """
    dt = vacuum_batch.bin_width if bin_width is None else bin_width
    squares = vacuum_batch.values[:, detector, :] ** 2
    per_trajectory = squares.mean(axis=1)
    second_moment = float(per_trajectory.mean())
    if second_moment < 0.0:
        raise ValueError("negative second moment")
    gain = float(np.sqrt(second_moment * dt))
    if gain == 0.0:
        return 0.0, 0.0
    n = vacuum_batch.n_exp
    sem = float(per_trajectory.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return gain, dt * sem / (2.0 * gain)


def partition_batch(batch: TrajectoryBatch, n_subset: int) -> List[TrajectoryBatch]:
    """Split a batch into n_subset contiguous groups of trajectories."""
    if n_subset < 2:
        raise ValueError("n_subset must be >= 2")
    if n_subset > batch.n_exp:
        raise ValueError(f"cannot split {batch.n_exp} trajectories into {n_subset} subsets")
    bounds = np.linspace(0, batch.n_exp, n_subset + 1).astype(int)
    return [batch.select(slice(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]


def estimates_from_batches(
    batches: Mapping[str, TrajectoryBatch],
    requests: Mapping[str, Sequence[Sequence[BinPoint]]],
) -> Dict[str, List[CorrelationEstimate]]:
    """Empirical estimates per configuration name."""
    missing = set(requests) - set(batches)
    if missing:
        raise KeyError(f"no batch for configuration(s) {sorted(missing)}")
    return {name: empirical_correlation(batches[name], reqs) for name, reqs in requests.items()}
