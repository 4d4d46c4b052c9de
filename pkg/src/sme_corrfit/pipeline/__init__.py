from sme_corrfit.pipeline.config import ScenarioConfig, apply_overrides, load_scenario
from sme_corrfit.pipeline.commands import main
