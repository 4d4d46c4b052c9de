"""
Scenario documents.

A scenario is a JSON file describing one measurement campaign: the model
family and its parameter values (in table units), the acquisition settings,
the correlation functions to use, the simulation and fit settings and where
to write results. Frequencies are quoted without the 2*pi factor and
converted to rad/s on load; the bin width is given in microseconds.
"""
import json
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sme_corrfit.quantum.families import FAMILIES, get_family

Unit = Literal["kHz", "Hz", "MHz", "1"]

UNIT_SCALE = {
    "kHz": 2.0 * np.pi * 1e3,
    "Hz": 2.0 * np.pi,
    "MHz": 2.0 * np.pi * 1e6,
    "1": 1.0,
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParameterConfig(_Strict):
    value: float
    unit: Unit = "1"
    free: bool = False
    guess: Optional[float] = None

    @model_validator(mode="after")
    def _free_needs_guess(self):
        if self.free and self.guess is None:
            raise ValueError("free parameters need a guess")
        return self

    def si(self, value: float = None) -> float:
        return (self.value if value is None else value) * UNIT_SCALE[self.unit]


class AcquisitionConfig(_Strict):
    bin_width_us: float = Field(gt=0)
    n_bins: int = Field(ge=1)
    gain: float = Field(default=1.0, gt=0)
    n_trunc: Optional[int] = Field(default=None, ge=2)

    @property
    def bin_width(self) -> float:
        return self.bin_width_us * 1e-6


class RequestConfig(_Strict):
    """
    A family of binned correlation functions.

    order 1: E[I_k] for k in ks (default: every bin)
    order 2: E[I_0 J_k] for k in ks (default 1..n_bins-1), J = partner or the same detector
    order 4: E[I_0 I_1 I_2 I_k] for k in ks (default 3..n_bins-1)
    points:  explicit requests [[detector, bin], ...], overriding the above
    """
    detector: Optional[str] = None
    partner: Optional[str] = None
    order: Literal[1, 2, 4] = 2
    ks: Optional[List[int]] = None
    points: Optional[List[List[Tuple[str, int]]]] = None

    @model_validator(mode="after")
    def _needs_target(self):
        if self.points is None and self.detector is None:
            raise ValueError("a request needs a detector or explicit points")
        return self

    @field_validator("ks")
    @classmethod
    def _non_negative(cls, ks):
        if ks is not None and any(k < 0 for k in ks):
            raise ValueError("bin indices must be non-negative")
        return ks

    def expand(self, n_bins: int) -> List[List[Tuple[str, int]]]:
        if self.points is not None:
            return [list(p) for p in self.points]
        det, partner = self.detector, self.partner or self.detector
        if self.order == 1:
            ks = self.ks if self.ks is not None else range(n_bins)
            return [[(det, k)] for k in ks]
        if self.order == 2:
            ks = self.ks if self.ks is not None else range(1, n_bins)
            return [[(det, 0), (partner, k)] for k in ks]
        ks = self.ks if self.ks is not None else range(3, n_bins)
        return [[(det, 0), (det, 1), (det, 2), (det, k)] for k in ks]


class SimulationConfig(_Strict):
    n_exp: int = Field(ge=1)
    substeps_per_bin: int = Field(ge=1)
    seed: int = 0
    chunk_size: int = Field(default=1000, ge=1)
    n_windows: int = Field(default=1, ge=1)


class VariantConfig(_Strict):
    """One acquisition configuration; scales multiply, overrides replace (table units)."""
    name: str
    scales: Dict[str, float] = Field(default_factory=dict)
    overrides: Dict[str, float] = Field(default_factory=dict)


class FitConfig(_Strict):
    mode: Literal["binned_expm", "sharp_approx"] = "binned_expm"
    weighted: bool = False
    n_subset: int = Field(default=10, ge=2)
    multi_start: List[Dict[str, float]] = Field(default_factory=list)
    max_nfev: Optional[int] = Field(default=None, ge=1)


class SweepConfig(_Strict):
    parameters: List[str]
    fractions: List[float] = Field(default_factory=lambda: [-0.1, 0.1])


class SymmetryConfig(_Strict):
    orders: List[int] = Field(default_factory=lambda: [1, 3])
    n_probe: int = Field(default=4, ge=1)


class OutputConfig(_Strict):
    directory: str = "outputs"


class ScenarioConfig(_Strict):
    name: str
    family: str
    parameters: Dict[str, ParameterConfig]
    acquisition: AcquisitionConfig
    requests: List[RequestConfig] = Field(min_length=1)
    simulation: SimulationConfig
    variants: List[VariantConfig] = Field(default_factory=lambda: [VariantConfig(name="a")])
    fit: FitConfig = Field(default_factory=FitConfig)
    sweep: Optional[SweepConfig] = None
    symmetry: SymmetryConfig = Field(default_factory=SymmetryConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("family")
    @classmethod
    def _known_family(cls, name):
        if name not in FAMILIES:
            raise ValueError(f"unknown family '{name}'; available: {sorted(FAMILIES)}")
        return name

    @model_validator(mode="after")
    def _consistent(self):
        family = get_family(self.family)
        declared = set(family.parameter_names)
        for name, p in self.parameters.items():
            if name not in declared:
                raise ValueError(f"parameters.{name}: not a parameter of '{self.family}'")
            spec = family.spec(name)
            for field_name, value in (("value", p.value), ("guess", p.guess)):
                if value is not None and not spec.lower <= p.si(value) <= spec.upper:
                    raise ValueError(
                        f"parameters.{name}.{field_name}: {value} {p.unit} outside [{spec.lower}, {spec.upper}] rad/s"
                    )
        missing = [n for n in family.parameter_names if n not in self.parameters and n not in family.defaults]
        if missing:
            raise ValueError(f"parameters: missing values for {missing}")
        if not any(p.free for p in self.parameters.values()):
            raise ValueError("parameters: at least one parameter must be free")

        detectors = set(family.detector_names)
        for i, req in enumerate(self.requests):
            for points in req.expand(self.acquisition.n_bins):
                for det, k in points:
                    if det not in detectors:
                        raise ValueError(f"requests.{i}: unknown detector '{det}' (declared: {sorted(detectors)})")
                    if k >= self.acquisition.n_bins:
                        raise ValueError(f"requests.{i}: bin {k} beyond n_bins={self.acquisition.n_bins}")

        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError("variants: names must be unique")
        for i, v in enumerate(self.variants):
            for key in list(v.scales) + list(v.overrides):
                if key not in self.parameters:
                    raise ValueError(f"variants.{i}: unknown parameter '{key}'")
        for p in (self.sweep.parameters if self.sweep else []):
            if p not in self.parameters:
                raise ValueError(f"sweep.parameters: unknown parameter '{p}'")
        for j, start in enumerate(self.fit.multi_start):
            unknown = set(start) - set(self.free_names)
            if unknown:
                raise ValueError(f"fit.multi_start.{j}: not free parameters {sorted(unknown)}")
        return self

    # ---- derived quantities (SI units) ------------------------------------

    @property
    def free_names(self) -> Tuple[str, ...]:
        return tuple(n for n, p in self.parameters.items() if p.free)

    def theta_true(self) -> Dict[str, float]:
        return {n: p.si() for n, p in self.parameters.items()}

    def known(self) -> Dict[str, float]:
        return {n: p.si() for n, p in self.parameters.items() if not p.free}

    def guess(self) -> Dict[str, float]:
        return {n: p.si(p.guess) for n, p in self.parameters.items() if p.free}

    def guesses(self) -> List[Dict[str, float]]:
        """Main guess followed by the multi-start guesses (missing entries taken from the main one)."""
        base = self.guess()
        out = [base]
        for start in self.fit.multi_start:
            g = dict(base)
            g.update({n: self.parameters[n].si(v) for n, v in start.items()})
            out.append(g)
        return out

    def variant_overrides(self, variant: VariantConfig) -> Dict[str, float]:
        return {n: self.parameters[n].si(v) for n, v in variant.overrides.items()}


def load_scenario(path: str) -> ScenarioConfig:
    """Read and validate a scenario document (raises pydantic.ValidationError)."""
    with open(path, "r") as f:
        return ScenarioConfig.model_validate(json.load(f))


def apply_overrides(
    cfg: ScenarioConfig,
    seed: int = None,
    n_exp: int = None,
    output_dir: str = None,
) -> ScenarioConfig:
    sim_changes = {k: v for k, v in (("seed", seed), ("n_exp", n_exp)) if v is not None}
    update = {}
    if sim_changes:
        update["simulation"] = cfg.simulation.model_copy(update=sim_changes)
    if output_dir is not None:
        update["output"] = cfg.output.model_copy(update={"directory": output_dir})
    if not update:
        return cfg
    # model_copy skips validation
    return ScenarioConfig.model_validate(cfg.model_copy(update=update).model_dump())
