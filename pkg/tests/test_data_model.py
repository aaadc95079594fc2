"""Ingestion, validation, and serialization round-trips."""

import dataclasses
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from curtailplan.data_model import (
    CurtailmentSeries,
    EconomicConfig,
    EpisodeData,
    PlantConfig,
    PriceSchedule,
    config_to_text,
    econ_config_from_mapping,
    ingest_curtailment,
    load_episode,
    load_prices,
    parse_config_text,
    plant_config_from_mapping,
    read_curtailment_csv,
    read_hourly_curtailment_csv,
    save_episode,
    validate,
    write_curtailment_csv,
    write_prices_csv,
)
from curtailplan.errors import FormatError, GapError, ValidationError

from conftest import START, make_episode


def quarter_records(hours, rng, start=START):
    """Build a clean 15-minute record list covering `hours` full hours."""
    rows = []
    for i in range(hours * 4):
        ts = start + timedelta(minutes=15 * i)
        rows.append((ts, float(rng.uniform(0, 30)), float(rng.uniform(0, 30))))
    return rows


def test_ingest_sums_quarters():
    rng = np.random.default_rng(7)
    rows = quarter_records(3, rng)
    series = ingest_curtailment(rows)
    assert series.length == 3
    wind = np.array([r[1] for r in rows]).reshape(3, 4).sum(axis=1)
    solar = np.array([r[2] for r in rows]).reshape(3, 4).sum(axis=1)
    np.testing.assert_array_equal(series.wind, wind)
    np.testing.assert_array_equal(series.solar, solar)
    assert series.start_timestamp == START


def test_ingest_leap_year_hour_count():
    # 2020 has 8784 hours; a full quarter-hour year collapses to that count.
    rng = np.random.default_rng(2020)
    start = datetime(2020, 1, 1, tzinfo=timezone.utc)
    rows = quarter_records(8784, rng, start=start)
    assert (rows[-1][0] - start) == timedelta(days=366) - timedelta(minutes=15)
    series = ingest_curtailment(rows)
    assert series.length == 8784


def test_ingest_is_linear_in_inputs():
    # Summing two record sets hour-aligned equals summing the ingested series.
    rng = np.random.default_rng(11)
    rows_a = quarter_records(5, rng)
    rows_b = quarter_records(5, rng)
    merged = [
        (ta, wa + wb, sa + sb)
        for (ta, wa, sa), (_, wb, sb) in zip(rows_a, rows_b)
    ]
    sa = ingest_curtailment(rows_a)
    sb = ingest_curtailment(rows_b)
    sm = ingest_curtailment(merged)
    np.testing.assert_allclose(sm.wind, sa.wind + sb.wind, rtol=0, atol=1e-12)
    np.testing.assert_allclose(sm.solar, sa.solar + sb.solar, rtol=0, atol=1e-12)


def test_ingest_gap_names_the_hour():
    rng = np.random.default_rng(3)
    rows = quarter_records(4, rng)
    # Drop one quarter inside hour 2.
    del rows[2 * 4 + 1]
    with pytest.raises(GapError) as exc:
        ingest_curtailment(rows)
    stamp = (START + timedelta(hours=2)).isoformat()
    assert stamp in str(exc.value)


def test_ingest_rejects_misaligned_start():
    rng = np.random.default_rng(5)
    rows = quarter_records(2, rng, start=START + timedelta(minutes=15))
    with pytest.raises(FormatError):
        ingest_curtailment(rows)


def test_ingest_rejects_off_grid_timestamp():
    rng = np.random.default_rng(6)
    rows = quarter_records(2, rng)
    ts, w, s = rows[3]
    rows[3] = (ts + timedelta(minutes=7), w, s)
    with pytest.raises(FormatError):
        ingest_curtailment(rows)


def test_ingest_rejects_negative_energy():
    rng = np.random.default_rng(9)
    rows = quarter_records(2, rng)
    ts, w, s = rows[5]
    rows[5] = (ts, -1.0, s)
    with pytest.raises(ValidationError):
        ingest_curtailment(rows)


def test_ingest_rejects_trailing_partial_hour():
    rng = np.random.default_rng(13)
    rows = quarter_records(3, rng)[:-2]
    with pytest.raises(FormatError):
        ingest_curtailment(rows)


def test_validate_accepts_defaults(week_episode):
    assert validate(week_episode) == []


def test_validate_flags_injected_violations():
    rng = np.random.default_rng(21)
    bad_plant = {
        "eta_charge": 1.5,
        "eta_discharge": 0.0,
        "eta_awe": -0.2,
        "soc_min_fraction": 0.0,
        "soc_initial_fraction": 1.5,
        "bess_capacity": -10.0,
        "bess_power_fraction": 0.0,
        "awe_power_max": -1.0,
        "awe_min_fraction": 1.2,
        "lhv": 0.0,
    }
    bad_econ = {
        "capex_bess": -1.0,
        "capex_awe": -5.0,
        "inflation_rate": 0.0,
        "lifetime_years": 0,
        "vom_bess": -2.0,
        "vom_awe": -0.5,
        "fo_bess_rate": -1.0,
        "fo_awe_fraction": -0.1,
    }
    for _ in range(50):
        episode = make_episode(24)
        field = rng.choice(list(bad_plant) + list(bad_econ))
        if field in bad_plant:
            plant = dataclasses.replace(episode.plant, **{field: bad_plant[field]})
            episode = dataclasses.replace(episode, plant=plant)
        else:
            econ = dataclasses.replace(episode.econ, **{field: bad_econ[field]})
            episode = dataclasses.replace(episode, econ=econ)
        problems = validate(episode)
        assert problems, f"no violation reported for {field}"
        assert any(field in p for p in problems)


def test_validate_flags_soc_order_violation():
    plant = PlantConfig(soc_min_fraction=0.5, soc_initial_fraction=0.2)
    episode = make_episode(24, plant=plant)
    assert any("soc" in p for p in validate(episode))


def test_validate_flags_length_mismatch():
    episode = make_episode(24)
    prices = PriceSchedule(electricity=np.ones(10), hydrogen=6.0)
    episode = dataclasses.replace(episode, prices=prices)
    assert any("length" in p for p in validate(episode))


def test_validate_flags_negative_curtailment():
    episode = make_episode(24)
    wind = episode.curtailment.wind.copy()
    wind[3] = -2.0
    series = CurtailmentSeries(
        start_timestamp=START, wind=wind, solar=episode.curtailment.solar
    )
    episode = dataclasses.replace(episode, curtailment=series)
    assert any("negative" in p for p in validate(episode))


def test_series_total_and_length():
    series = CurtailmentSeries(
        start_timestamp=START,
        wind=np.array([1.0, 2.0]),
        solar=np.array([0.5, 0.25]),
    )
    np.testing.assert_array_equal(series.total, [1.5, 2.25])
    assert series.length == 2


def test_curtailment_csv_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    series = CurtailmentSeries(
        start_timestamp=START,
        wind=rng.uniform(0, 700, 48),
        solar=rng.uniform(0, 700, 48),
    )
    path = tmp_path / "curtailment.csv"
    write_curtailment_csv(series, path)
    back = read_hourly_curtailment_csv(path)
    # Bit-for-bit: writer uses repr() floats.
    np.testing.assert_array_equal(back.wind, series.wind)
    np.testing.assert_array_equal(back.solar, series.solar)
    assert back.start_timestamp == series.start_timestamp


def test_prices_round_trip_and_tiling(tmp_path):
    path = tmp_path / "prices.csv"
    elec = np.array([float(p) for p in range(24)])
    write_prices_csv(PriceSchedule(electricity=elec, hydrogen=6.0), path)
    # Tiling repeats the daily profile out to the requested horizon.
    sched = load_prices(path, 50, hydrogen_price=6.0)
    assert sched.electricity.shape == (50,)
    np.testing.assert_array_equal(sched.electricity[:24], elec)
    np.testing.assert_array_equal(sched.electricity[24:48], elec)
    np.testing.assert_array_equal(sched.electricity[48:], elec[:2])
    # Truncation when the file is longer than the horizon.
    short = load_prices(path, 5)
    np.testing.assert_array_equal(short.electricity, elec[:5])


def test_config_text_round_trip():
    plant = PlantConfig(bess_capacity=2000.0, awe_min_fraction=0.25)
    econ = EconomicConfig(inflation_rate=0.05, lifetime_years=12)
    text = config_to_text(plant, econ)
    mapping = parse_config_text(text)
    assert plant_config_from_mapping(mapping) == plant
    assert econ_config_from_mapping(mapping) == econ


def test_config_parser_comments_types_and_unknowns():
    text = """
# a comment
bess_capacity = 1200.5
lifetime_years = 9
crf_annuity = true
   # indented comment
awe_min_fraction=0.3
"""
    mapping = parse_config_text(text)
    assert mapping["bess_capacity"] == 1200.5
    assert mapping["lifetime_years"] == 9
    assert mapping["crf_annuity"] is True
    assert mapping["awe_min_fraction"] == 0.3
    # Keys outside the dataclass are tolerated: one flat file carries the
    # union of plant and economic fields.
    assert plant_config_from_mapping({"vom_bess": 3.0}) == PlantConfig()
    with pytest.raises(FormatError):
        parse_config_text("just a bare token\n")


def test_episode_round_trip(tmp_path, week_episode):
    root = tmp_path / "episode"
    save_episode(week_episode, root)
    back = load_episode(root)
    np.testing.assert_array_equal(back.curtailment.wind, week_episode.curtailment.wind)
    np.testing.assert_array_equal(back.curtailment.solar, week_episode.curtailment.solar)
    np.testing.assert_array_equal(
        back.prices.electricity, week_episode.prices.electricity
    )
    assert back.prices.hydrogen == week_episode.prices.hydrogen
    assert back.plant == week_episode.plant
    assert back.econ == week_episode.econ


def test_arrays_are_frozen(week_episode):
    with pytest.raises((ValueError, RuntimeError)):
        week_episode.curtailment.wind[0] = 5.0
