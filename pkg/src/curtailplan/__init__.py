"""curtailplan: planning toolkit for hybrid battery + electrolyzer storage
fed by curtailed renewable energy.

Simulates the plant and its economics, trains a policy-gradient agent to
dispatch energy in real time, and benchmarks it against an exact dynamic
program and exported MILP baselines under curtailment uncertainty.
"""

__version__ = "0.1.0"

from .data_model import (
    CurtailmentSeries,
    EconomicConfig,
    EpisodeData,
    PlantConfig,
    PriceSchedule,
    ingest_curtailment,
    load_prices,
    validate,
)
from .env import Action, EnvConfig, Environment, Observation, StepResult
from .plant import BessState, Dispatch, HourRecord

__all__ = [
    "Action",
    "BessState",
    "CurtailmentSeries",
    "Dispatch",
    "EconomicConfig",
    "EnvConfig",
    "Environment",
    "EpisodeData",
    "HourRecord",
    "Observation",
    "PlantConfig",
    "PriceSchedule",
    "StepResult",
    "ingest_curtailment",
    "load_prices",
    "validate",
]
