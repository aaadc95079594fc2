"""Deterministic plant physics and economics.

Everything here is a pure function over immutable inputs: battery state
is a value passed in and returned, never shared mutable state. State of
charge is stored as a fraction of capacity throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

from .data_model import EconomicConfig, PlantConfig
from .errors import BoundsError, ValidationError

# Absolute slack on the state-of-charge fraction when checking bounds.
# Replayed plans can land within a rounding ulp of the limits; anything
# beyond this is a genuine violation.
SOC_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BessState:
    """Battery state of charge as a fraction of capacity."""

    soc_fraction: float


@dataclass(frozen=True)
class Dispatch:
    """One hour's control decision, all components in MWh.

    Charging and discharging are exclusive; a nonzero electrolyzer
    component must lie inside its minimum-load band.
    """

    p_charge: float = 0.0
    p_discharge: float = 0.0
    p_awe: float = 0.0

    def violations(self, plant: PlantConfig, available_curtailment: float | None = None) -> list[str]:
        out = []
        if self.p_charge < 0 or self.p_discharge < 0 or self.p_awe < 0:
            out.append("dispatch: negative component")
        if self.p_charge > 0 and self.p_discharge > 0:
            out.append("dispatch: simultaneous charge and discharge")
        awe_min = plant.awe_min_fraction * plant.awe_power_max
        if self.p_awe != 0 and not awe_min <= self.p_awe <= plant.awe_power_max:
            out.append(
                f"dispatch: p_awe={self.p_awe} outside [{awe_min}, {plant.awe_power_max}]"
            )
        if available_curtailment is not None and self.p_charge + self.p_awe > available_curtailment:
            out.append(
                f"dispatch: p_charge + p_awe = {self.p_charge + self.p_awe} exceeds "
                f"available curtailment {available_curtailment}"
            )
        return out


@dataclass(frozen=True)
class HourRecord:
    """Dispatch applied for one hour plus its physical and monetary outcome."""

    dispatch: Dispatch
    soc_after: float
    hydrogen_kg: float
    revenue: float
    vom_cost: float


def bess_power_limit(plant: PlantConfig) -> float:
    """Hourly battery power limit in MWh: fraction times capacity."""
    return plant.bess_power_fraction * plant.bess_capacity


def step_soc(state: BessState, d: Dispatch, plant: PlantConfig) -> BessState:
    """Advance the state of charge by one dispatched hour.

    soc' = soc + (p_charge * eta_charge - p_discharge / eta_discharge) / capacity

    Raises :class:`BoundsError` carrying the overshoot magnitude when the
    result leaves [soc_min_fraction, 1] by more than SOC_TOLERANCE;
    overshoots inside the tolerance are clamped to the bound.
    """
    delta = (d.p_charge * plant.eta_charge - d.p_discharge / plant.eta_discharge)
    soc = state.soc_fraction + delta / plant.bess_capacity
    low = plant.soc_min_fraction
    if soc > 1.0:
        if soc - 1.0 > SOC_TOLERANCE:
            raise BoundsError(
                f"state of charge {soc} exceeds 1", overshoot=soc - 1.0
            )
        soc = 1.0
    elif soc < low:
        if low - soc > SOC_TOLERANCE:
            raise BoundsError(
                f"state of charge {soc} below minimum {low}", overshoot=low - soc
            )
        soc = low
    return BessState(soc_fraction=soc)


def hydrogen_out(p_awe: float, plant: PlantConfig) -> float:
    """Hydrogen produced in kg from p_awe MWh: p_awe * eta_awe / lhv."""
    return p_awe * plant.eta_awe / plant.lhv


def hour_economics(
    d: Dispatch,
    hour_price: float,
    h2_price: float,
    econ: EconomicConfig,
    plant: PlantConfig,
) -> tuple[float, float]:
    """Revenue and variable O&M cost of one dispatched hour, in dollars."""
    h2 = hydrogen_out(d.p_awe, plant)
    revenue = d.p_discharge * hour_price + h2 * h2_price
    vom = d.p_discharge * econ.vom_bess + h2 * econ.vom_awe
    return revenue, vom


def capital_recovery_factor(r: float, n: int, annuity: bool = False) -> float:
    """Capital recovery factor for rate r over n years.

    Default is the sinking-fund form r / ((1+r)^n - 1); ``annuity=True``
    switches to the standard annuity form r(1+r)^n / ((1+r)^n - 1).
    """
    if r <= 0:
        raise ValidationError(f"rate must be positive, got {r}")
    if n < 1:
        raise ValidationError(f"lifetime must be >= 1 year, got {n}")
    growth = (1.0 + r) ** n
    if annuity:
        return r * growth / (growth - 1.0)
    return r / (growth - 1.0)


def annualized_fixed_costs(plant: PlantConfig, econ: EconomicConfig) -> tuple[float, float]:
    """Annualized capital cost and fixed O&M cost, both in $/yr.

    The electrolyzer fixed-cost term is fraction * awe_power_max * capex_awe
    with the fraction configurable.
    """
    crf = capital_recovery_factor(
        econ.inflation_rate, econ.lifetime_years, annuity=econ.crf_annuity
    )
    c_acc = (econ.capex_bess + econ.capex_awe) * crf
    c_fo = (
        plant.bess_capacity * econ.fo_bess_rate
        + econ.fo_awe_fraction * plant.awe_power_max * econ.capex_awe
    )
    return c_acc, c_fo


def objective(records: list[HourRecord], plant: PlantConfig, econ: EconomicConfig) -> float:
    """Net profit of a full horizon: revenues minus variable and fixed costs."""
    if not records:
        raise ValidationError("objective of an empty trajectory")
    c_acc, c_fo = annualized_fixed_costs(plant, econ)
    revenue = sum(r.revenue for r in records)
    vom = sum(r.vom_cost for r in records)
    return revenue - vom - c_fo - c_acc
