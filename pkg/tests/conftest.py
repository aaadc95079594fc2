"""Shared fixtures: toy episodes with a daily curtailment/price structure."""

from datetime import datetime, timezone

import numpy as np
import pytest

from curtailplan.data_model import (
    CurtailmentSeries,
    EconomicConfig,
    EpisodeData,
    PlantConfig,
    PriceSchedule,
)

START = datetime(2020, 1, 1, tzinfo=timezone.utc)

# One TOU day, $/MWh. Peak hours 17-21 reward stored discharge; levels are
# high enough that battery arbitrage beats hydrogen conversion at peak.
TOU_DAY = [120.0] * 6 + [180.0] * 6 + [200.0] * 5 + [350.0] * 5 + [130.0] * 2

# Midday curtailment bump in MWh per hour.
CURTAIL_DAY = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    50.0, 150.0, 300.0, 450.0, 600.0, 650.0,
    600.0, 450.0, 300.0, 150.0, 50.0, 0.0,
    0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
]

DAY_FACTORS = [1.0, 0.8, 1.2, 0.9, 1.1, 0.7, 1.0]


def daily_curtailment(hours: int, split: float = 0.5) -> CurtailmentSeries:
    total = np.array(
        [CURTAIL_DAY[h % 24] * DAY_FACTORS[(h // 24) % 7] for h in range(hours)]
    )
    return CurtailmentSeries(
        start_timestamp=START, wind=total * split, solar=total * (1.0 - split)
    )


def daily_prices(hours: int, hydrogen: float = 6.0) -> PriceSchedule:
    elec = np.array([TOU_DAY[h % 24] for h in range(hours)])
    return PriceSchedule(electricity=elec, hydrogen=hydrogen)


def make_episode(hours: int, plant=None, econ=None) -> EpisodeData:
    return EpisodeData(
        curtailment=daily_curtailment(hours),
        prices=daily_prices(hours),
        plant=plant or PlantConfig(),
        econ=econ or EconomicConfig(),
    )


@pytest.fixture(scope="session")
def week_episode() -> EpisodeData:
    return make_episode(168)


@pytest.fixture(scope="session")
def two_day_episode() -> EpisodeData:
    return make_episode(48)
