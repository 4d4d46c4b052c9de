"""
Turn a validated ScenarioConfig into library objects.
"""
from typing import Dict, List, Mapping, Sequence, Tuple

from sme_corrfit.estimation.empirical import CorrelationEstimate
from sme_corrfit.estimation.fitting import ConfigurationData, FitProblem
from sme_corrfit.pipeline.config import ScenarioConfig, VariantConfig
from sme_corrfit.quantum.model import ConcreteModel, ModelFamily, instantiate
from sme_corrfit.quantum.families import get_family
from sme_corrfit.simulation.smesim import SimConfig

BinRequest = Tuple[Tuple[int, int], ...]


def build_family(cfg: ScenarioConfig) -> ModelFamily:
    acq = cfg.acquisition
    return get_family(
        cfg.family,
        bin_width=acq.bin_width,
        n_bins=acq.n_bins,
        gain=acq.gain,
        n_trunc=acq.n_trunc,
    )


def resolve_requests(cfg: ScenarioConfig, family: ModelFamily) -> List[BinRequest]:
    """Expand the request list into (detector index, bin) tuples, dropping duplicates."""
    out: List[BinRequest] = []
    for req in cfg.requests:
        for points in req.expand(cfg.acquisition.n_bins):
            resolved = tuple((family.detector_index(det), int(k)) for det, k in points)
            if resolved not in out:
                out.append(resolved)
    return out


def configuration(cfg: ScenarioConfig, variant: VariantConfig, estimates: Sequence[CorrelationEstimate] = ()) -> ConfigurationData:
    return ConfigurationData(
        name=variant.name,
        estimates=tuple(estimates),
        scales=dict(variant.scales),
        overrides=cfg.variant_overrides(variant),
    )


def build_models(cfg: ScenarioConfig, family: ModelFamily = None, theta: Mapping[str, float] = None) -> Dict[str, ConcreteModel]:
    """Concrete model of every variant at theta (default: the scenario's true values)."""
    family = family or build_family(cfg)
    shared = dict(family.defaults)
    shared.update(cfg.theta_true() if theta is None else theta)
    return {v.name: instantiate(family, configuration(cfg, v).theta(shared)) for v in cfg.variants}


def build_problem(
    cfg: ScenarioConfig,
    estimates: Mapping[str, Sequence[CorrelationEstimate]],
    family: ModelFamily = None,
) -> FitProblem:
    family = family or build_family(cfg)
    return FitProblem(
        family=family,
        free=cfg.free_names,
        known=cfg.known(),
        configurations=tuple(configuration(cfg, v, estimates[v.name]) for v in cfg.variants),
        mode=cfg.fit.mode,
        weighted=cfg.fit.weighted,
    )


def sim_config(cfg: ScenarioConfig) -> SimConfig:
    s = cfg.simulation
    return SimConfig(
        substeps_per_bin=s.substeps_per_bin,
        n_exp=s.n_exp,
        seed=s.seed,
        chunk_size=s.chunk_size,
    )
