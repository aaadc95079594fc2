"""Configuration and time-series types plus raw-data ingestion.

All types are immutable after validation and safe to share read-only
across concurrent rollout workers. Numeric series are float64 numpy
arrays with the writeable flag cleared.

File formats owned here:
  * curtailment (quarter-hour or hourly): CSV, header
    ``timestamp,wind_mwh,solar_mwh``, ISO-8601 timestamps.
  * prices: CSV, header ``hour,price_usd_per_mwh``.
  * config: flat ``key = value`` text mirroring the dataclass field
    names exactly; ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, GapError, ValidationError

QUARTER = timedelta(minutes=15)
HOURS_PER_YEAR = (8760, 8784)


def _freeze(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"expected 1-D series, got shape {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CurtailmentSeries:
    """Hourly curtailed wind and solar energy, the exogenous episode driver."""

    start_timestamp: datetime          # first hour, UTC
    wind: np.ndarray                   # MWh per hour, length T
    solar: np.ndarray                  # MWh per hour, length T

    def __post_init__(self):
        object.__setattr__(self, "wind", _freeze(self.wind))
        object.__setattr__(self, "solar", _freeze(self.solar))

    @property
    def length(self) -> int:
        return len(self.wind)

    @property
    def total(self) -> np.ndarray:
        """Combined per-hour curtailed energy available to the plant."""
        return self.wind + self.solar

    def violations(self) -> list[str]:
        out = []
        if len(self.wind) != len(self.solar):
            out.append(
                f"curtailment: wind length {len(self.wind)} != solar length {len(self.solar)}"
            )
        if len(self.wind) < 1:
            out.append("curtailment: series empty")
        if len(self.wind) and (np.min(self.wind) < 0 or np.min(self.solar) < 0):
            out.append("curtailment: negative energy entry")
        return out


@dataclass(frozen=True)
class PriceSchedule:
    """Hourly electricity sale prices plus a constant hydrogen sale price."""

    electricity: np.ndarray            # $/MWh, length T
    hydrogen: float                    # $/kg

    def __post_init__(self):
        object.__setattr__(self, "electricity", _freeze(self.electricity))

    def violations(self, expected_length: int | None = None) -> list[str]:
        out = []
        if len(self.electricity) and np.min(self.electricity) < 0:
            out.append("prices: negative electricity price")
        if self.hydrogen < 0:
            out.append("prices: negative hydrogen price")
        if expected_length is not None and len(self.electricity) != expected_length:
            out.append(
                f"prices: electricity length {len(self.electricity)} != series length {expected_length}"
            )
        return out


@dataclass(frozen=True)
class PlantConfig:
    """Physical coefficients of the battery + electrolyzer plant.

    The battery hourly power limit is ``bess_power_fraction * bess_capacity``.
    The electrolyzer, when on, must run in
    ``[awe_min_fraction * awe_power_max, awe_power_max]``.
    """

    bess_capacity: float = 1500.0      # MWh
    bess_power_fraction: float = 0.30  # power limit as fraction of capacity
    soc_min_fraction: float = 0.10     # lowest admissible state of charge
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    awe_power_max: float = 500.0       # MWh per hour
    awe_min_fraction: float = 0.20     # electrolyzer minimum-load fraction
    eta_awe: float = 0.70
    lhv: float = 0.03333               # MWh per kg of hydrogen
    soc_initial_fraction: float = 0.10

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.soc_min_fraction <= self.soc_initial_fraction <= 1:
            out.append(
                "plant: require 0 < soc_min_fraction <= soc_initial_fraction <= 1, got "
                f"soc_min_fraction={self.soc_min_fraction}, "
                f"soc_initial_fraction={self.soc_initial_fraction}"
            )
        for name in ("eta_charge", "eta_discharge", "eta_awe"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                out.append(f"plant: {name} must be in (0, 1], got {v}")
        if not 0 < self.bess_power_fraction <= 1:
            out.append(f"plant: bess_power_fraction must be in (0, 1], got {self.bess_power_fraction}")
        if not 0 <= self.awe_min_fraction < 1:
            out.append(f"plant: awe_min_fraction must be in [0, 1), got {self.awe_min_fraction}")
        if self.lhv <= 0:
            out.append(f"plant: lhv must be positive, got {self.lhv}")
        if self.bess_capacity <= 0:
            out.append(f"plant: bess_capacity must be positive, got {self.bess_capacity}")
        if self.awe_power_max < 0:
            out.append(f"plant: awe_power_max must be nonnegative, got {self.awe_power_max}")
        return out


@dataclass(frozen=True)
class EconomicConfig:
    """Cost parameters: capital recovery inputs and O&M rates.

    ``fo_awe_fraction`` follows the printed fixed-cost rule
    ``fraction * awe_power_max * capex_awe`` even though the units are
    odd; the fraction is configurable rather than hard-coded.
    ``crf_annuity`` switches the capital recovery factor from the
    sinking-fund form (default) to the standard annuity form.
    """

    capex_bess: float = 1.0e6          # $
    capex_awe: float = 1.0e4           # $
    inflation_rate: float = 0.08       # per year
    lifetime_years: int = 10
    vom_bess: float = 2.0              # $/MWh discharged
    vom_awe: float = 0.5               # $/kg hydrogen (lumped consumables)
    fo_bess_rate: float = 10.0         # $/(MWh capacity * yr)
    fo_awe_fraction: float = 0.05
    crf_annuity: bool = False

    def violations(self) -> list[str]:
        out = []
        if self.inflation_rate <= 0:
            out.append(f"econ: inflation_rate must be positive, got {self.inflation_rate}")
        if self.lifetime_years < 1:
            out.append(f"econ: lifetime_years must be >= 1, got {self.lifetime_years}")
        for name in ("capex_bess", "capex_awe", "vom_bess", "vom_awe",
                     "fo_bess_rate", "fo_awe_fraction"):
            v = getattr(self, name)
            if v < 0:
                out.append(f"econ: {name} must be nonnegative, got {v}")
        return out


@dataclass(frozen=True)
class EpisodeData:
    """One simulation instance: curtailment, prices, and both configs."""

    curtailment: CurtailmentSeries
    prices: PriceSchedule
    plant: PlantConfig = field(default_factory=PlantConfig)
    econ: EconomicConfig = field(default_factory=EconomicConfig)

    @property
    def length(self) -> int:
        return self.curtailment.length


def validate(episode: EpisodeData) -> list[str]:
    """Collect every violated invariant; an empty list means the episode is valid."""
    out = []
    out.extend(episode.curtailment.violations())
    out.extend(episode.prices.violations(expected_length=episode.curtailment.length))
    out.extend(episode.plant.violations())
    out.extend(episode.econ.violations())
    return out


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _as_utc(ts) -> datetime:
    if isinstance(ts, str):
        try:
            ts = datetime.fromisoformat(ts)
        except ValueError as exc:
            raise FormatError(f"unparseable timestamp {ts!r}") from exc
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def ingest_curtailment(records: Sequence[tuple]) -> CurtailmentSeries:
    """Sum sorted quarter-hour energy records into an hourly series.

    ``records`` holds ``(timestamp, wind_mwh, solar_mwh)`` tuples on a
    15-minute grid starting on an hour boundary; every hour must have
    exactly its 4 quarters. Quarter values are energies and are summed,
    not averaged.
    """
    if not records:
        raise FormatError("no curtailment records")

    times = [_as_utc(r[0]) for r in records]
    first = times[0]
    if first.minute != 0 or first.second != 0 or first.microsecond != 0:
        raise FormatError(f"first record {first.isoformat()} is not on an hour boundary")

    for i, ts in enumerate(times):
        expected = first + i * QUARTER
        if ts == expected:
            continue
        if ts > expected:
            gap_hour = expected.replace(minute=0)
            raise GapError(
                f"missing quarter-hour record at {expected.isoformat()} "
                f"(hour {gap_hour.isoformat()})"
            )
        raise FormatError(
            f"record {i} at {ts.isoformat()} is off the 15-minute grid "
            f"(expected {expected.isoformat()})"
        )

    if len(records) % 4 != 0:
        # All records align, so the shortfall is missing tail quarters.
        raise GapError(
            f"incomplete final hour {times[-1].replace(minute=0).isoformat()}: "
            f"record count {len(records)} is not a whole number of hours"
        )

    wind_q = np.asarray([float(r[1]) for r in records], dtype=np.float64)
    solar_q = np.asarray([float(r[2]) for r in records], dtype=np.float64)
    if np.min(wind_q) < 0 or np.min(solar_q) < 0:
        bad = int(np.argmin(np.minimum(wind_q, solar_q)))
        raise ValidationError(
            f"negative curtailment value at {times[bad].isoformat()}"
        )

    hours = len(records) // 4
    wind = wind_q.reshape(hours, 4).sum(axis=1)
    solar = solar_q.reshape(hours, 4).sum(axis=1)
    return CurtailmentSeries(start_timestamp=first, wind=wind, solar=solar)


def read_curtailment_csv(path) -> list[tuple]:
    """Read raw ``timestamp,wind_mwh,solar_mwh`` rows (any resolution)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    header = lines[0].strip()
    if header != "timestamp,wind_mwh,solar_mwh":
        raise FormatError(f"{path}: unexpected header {header!r}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            records.append((parts[0], float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric value") from exc
    if not records:
        raise FormatError(f"{path}: no data rows")
    return records


def write_curtailment_csv(series: CurtailmentSeries, path) -> None:
    """Write an hourly series in the curtailment CSV format (round-trip exact)."""
    lines = ["timestamp,wind_mwh,solar_mwh"]
    for i in range(series.length):
        ts = series.start_timestamp + timedelta(hours=i)
        lines.append(
            f"{ts.isoformat()},{float(series.wind[i])!r},{float(series.solar[i])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_hourly_curtailment_csv(path) -> CurtailmentSeries:
    """Read an already-hourly series written by :func:`write_curtailment_csv`."""
    records = read_curtailment_csv(path)
    times = [_as_utc(r[0]) for r in records]
    for i, ts in enumerate(times):
        expected = times[0] + timedelta(hours=i)
        if ts != expected:
            raise FormatError(f"{path}: row {i} not on an hourly grid")
    wind = [r[1] for r in records]
    solar = [r[2] for r in records]
    if min(wind) < 0 or min(solar) < 0:
        raise ValidationError(f"{path}: negative curtailment value")
    return CurtailmentSeries(start_timestamp=times[0], wind=wind, solar=solar)


def load_prices(path, length: int, hydrogen_price: float = 6.0) -> PriceSchedule:
    """Load hourly electricity prices, tiled or truncated to ``length`` hours.

    Time-of-use plans repeat daily, so a file shorter than the horizon is
    tiled; a longer file is truncated. The hydrogen price is constant and
    supplied by the caller's config.
    """
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    if lines[0] != "hour,price_usd_per_mwh":
        raise FormatError(f"{path}: unexpected header {lines[0]!r}")
    prices = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            value = float(parts[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: non-numeric price") from exc
        if value < 0:
            raise ValidationError(f"{path}:{lineno}: negative price {value}")
        prices.append(value)
    if not prices:
        raise FormatError(f"{path}: no data rows")
    if hydrogen_price < 0:
        raise ValidationError(f"negative hydrogen price {hydrogen_price}")

    base = np.asarray(prices, dtype=np.float64)
    reps = -(-length // len(base))  # ceil division
    electricity = np.tile(base, reps)[:length]
    return PriceSchedule(electricity=electricity, hydrogen=hydrogen_price)


def write_prices_csv(prices: PriceSchedule, path) -> None:
    lines = ["hour,price_usd_per_mwh"]
    for i, p in enumerate(prices.electricity):
        lines.append(f"{i},{float(p)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# key-value config files
# ---------------------------------------------------------------------------

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a flat dict with typed values."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FormatError(f"config line {lineno}: empty key")
        low = value.lower()
        if low in _BOOL_WORDS:
            out[key] = _BOOL_WORDS[low]
            continue
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def read_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())


def _build_from_mapping(cls, mapping: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in mapping.items() if k in names}
    return cls(**kwargs)


def plant_config_from_mapping(mapping: dict) -> PlantConfig:
    return _build_from_mapping(PlantConfig, mapping)


def econ_config_from_mapping(mapping: dict) -> EconomicConfig:
    return _build_from_mapping(EconomicConfig, mapping)


def config_to_text(plant: PlantConfig, econ: EconomicConfig, extra: dict | None = None) -> str:
    """Serialize configs back to the key-value format (repr round-trips floats)."""
    lines = []
    for obj in (plant, econ):
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {getattr(obj, f.name)!r}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# whole-episode round trip
# ---------------------------------------------------------------------------

def save_episode(episode: EpisodeData, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_curtailment_csv(episode.curtailment, directory / "curtailment.csv")
    write_prices_csv(episode.prices, directory / "prices.csv")
    extra = {"hydrogen_price": episode.prices.hydrogen}
    (directory / "config.kv").write_text(
        config_to_text(episode.plant, episode.econ, extra)
    )


def load_episode(directory) -> EpisodeData:
    directory = Path(directory)
    series = read_hourly_curtailment_csv(directory / "curtailment.csv")
    mapping = read_config_file(directory / "config.kv")
    prices = load_prices(
        directory / "prices.csv",
        length=series.length,
        hydrogen_price=float(mapping.get("hydrogen_price", 6.0)),
    )
    return EpisodeData(
        curtailment=series,
        prices=prices,
        plant=plant_config_from_mapping(mapping),
        econ=econ_config_from_mapping(mapping),
    )
