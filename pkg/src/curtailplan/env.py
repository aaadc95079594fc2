"""The dispatch MDP: observations, action decoding, filtration, reward.

One environment instance is single-threaded; instances are cheap to
construct from a shared immutable :class:`EpisodeData`, and independent
instances may run rollouts concurrently.

Observation feature layout (length 2 + 3W, all entries normalized):

    [0]            state of charge (fraction)
    [1]            remaining capacity = 1 - soc
    [2 : 2+W]      electricity prices for hours t .. t+W-1, divided by the
                   episode maximum electricity price
    [2+W : 2+2W]   hydrogen price repeated W times, divided by itself
    [2+2W : 2+3W]  curtailed energy window divided by battery capacity;
                   hours t-W .. t-1 for internal-prediction mode (zero
                   padded before t=0), hours t .. t+W-1 for
                   external-prediction mode (zero padded past the horizon)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_model import EpisodeData, PlantConfig
from .errors import ValidationError
from .plant import (
    BessState,
    Dispatch,
    annualized_fixed_costs,
    bess_power_limit,
    hour_economics,
    hydrogen_out,
    step_soc,
)

MODE_INTERNAL = "ip"   # observe past curtailment
MODE_EXTERNAL = "ep"   # observe forecast future curtailment

TRACE_HEADER = "t,soc,p_ch,p_dh,p_awe,h2_kg,price,reward,penalty"


@dataclass(frozen=True)
class Action:
    """Agent action: battery axis in [-1, 1] (+charge / -discharge),
    electrolyzer axis in [0, 1]."""

    bess: float
    awe: float


@dataclass(frozen=True)
class EnvConfig:
    window_w: int = 24                 # hours of price/curtailment context
    penalty_factor: float = 100.0      # dollars per MWh of overaction
    filtration_enabled: bool = True
    mode: str = MODE_INTERNAL

    def __post_init__(self):
        if self.window_w < 1:
            raise ValidationError(f"window_w must be >= 1, got {self.window_w}")
        if self.penalty_factor < 0:
            raise ValidationError(f"penalty_factor must be >= 0, got {self.penalty_factor}")
        if self.mode not in (MODE_INTERNAL, MODE_EXTERNAL):
            raise ValidationError(f"mode must be '{MODE_INTERNAL}' or '{MODE_EXTERNAL}'")


@dataclass(frozen=True)
class Observation:
    soc: float
    remaining_capacity: float
    prices_elec: np.ndarray            # next W hours, raw $/MWh
    price_h2: float                    # $/kg
    curtailment_window: np.ndarray     # W hours, raw MWh
    mode: str
    vector: np.ndarray                 # normalized features, length 2 + 3W


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    penalty_raw: float                 # MWh of overaction before scaling
    dispatch_applied: Dispatch
    done: bool
    info: dict = field(default_factory=dict)


def decode_action(a: Action, plant: PlantConfig) -> Dispatch:
    """Map a box action onto a raw (pre-filtration) dispatch.

    Nonnegative battery values charge, negative values discharge, both
    scaled by the battery power limit. Electrolyzer values below the
    minimum-load fraction switch it off entirely.
    """
    if not (math.isfinite(a.bess) and math.isfinite(a.awe)):
        raise ValidationError(f"non-finite action {a}")
    bess, awe = float(a.bess), float(a.awe)
    p_bess = bess_power_limit(plant)
    if bess >= 0:
        p_charge, p_discharge = bess * p_bess, 0.0
    else:
        p_charge, p_discharge = 0.0, -bess * p_bess
    if awe < plant.awe_min_fraction:
        p_awe = 0.0
    else:
        p_awe = awe * plant.awe_power_max
    return Dispatch(p_charge=p_charge, p_discharge=p_discharge, p_awe=p_awe)


def penalty_components(
    d_raw: Dispatch, soc: float, available_curtailment: float, plant: PlantConfig
) -> tuple[float, float, float]:
    """Overcharge, overdischarge and curtailment-exceedance sizes in MWh.

    Headrooms include the charge/discharge efficiencies so that a zero
    penalty is equivalent to the state-of-charge update staying in bounds.
    """
    cap = plant.bess_capacity
    overcharge = max(0.0, d_raw.p_charge * plant.eta_charge - (1.0 - soc) * cap)
    overdischarge = max(
        0.0, d_raw.p_discharge / plant.eta_discharge - (soc - plant.soc_min_fraction) * cap
    )
    exceedance = max(0.0, d_raw.p_charge + d_raw.p_awe - available_curtailment)
    return overcharge, overdischarge, exceedance


def penalty(
    d_raw: Dispatch, soc: float, available_curtailment: float, plant: PlantConfig
) -> float:
    """Total overaction size in MWh; zero when no bound is violated."""
    return sum(penalty_components(d_raw, soc, available_curtailment, plant))


def filter_action(
    d_raw: Dispatch, soc: float, available_curtailment: float, plant: PlantConfig
) -> Dispatch:
    """Clamp a raw dispatch onto the feasible set.

    Charging is clamped before the electrolyzer when curtailment is
    scarce (stored energy is the more valuable use). The nextafter loops
    shave at most a few ulps so that the clamped dispatch satisfies the
    penalty and state-of-charge predicates exactly in floating point.
    """
    cap = plant.bess_capacity
    alpha = plant.soc_min_fraction
    eta_ch = plant.eta_charge
    eta_dh = plant.eta_discharge
    avail = available_curtailment

    p_ch_raw = max(0.0, d_raw.p_charge)
    p_dh_raw = max(0.0, d_raw.p_discharge)
    if p_ch_raw > 0.0 and p_dh_raw > 0.0:
        # Exclusivity repair for hand-built dispatches; decoded actions
        # never carry both battery components.
        if p_ch_raw >= p_dh_raw:
            p_dh_raw = 0.0
        else:
            p_ch_raw = 0.0

    p_ch = min(p_ch_raw, (1.0 - soc) * cap / eta_ch, avail)
    while p_ch > 0.0 and (
        p_ch * eta_ch - (1.0 - soc) * cap > 0.0
        or soc + (p_ch * eta_ch) / cap > 1.0
    ):
        p_ch = math.nextafter(p_ch, 0.0)

    p_dh = min(p_dh_raw, (soc - alpha) * cap * eta_dh)
    while p_dh > 0.0 and (
        p_dh / eta_dh - (soc - alpha) * cap > 0.0
        or soc - (p_dh / eta_dh) / cap < alpha
    ):
        p_dh = math.nextafter(p_dh, 0.0)

    p_awe = max(0.0, min(d_raw.p_awe, plant.awe_power_max, avail - p_ch))
    while p_awe > 0.0 and p_ch + p_awe > avail:
        p_awe = math.nextafter(p_awe, 0.0)
    if p_awe < plant.awe_min_fraction * plant.awe_power_max:
        p_awe = 0.0

    return Dispatch(p_charge=p_ch, p_discharge=p_dh, p_awe=p_awe)


def reward(
    d_applied: Dispatch,
    penalty_raw: float,
    hour_price: float,
    h2_price: float,
    plant: PlantConfig,
    econ,
    cfg: EnvConfig,
    horizon: int,
) -> float:
    """Per-step reward: hour economics minus amortized fixed costs and
    the scaled overaction penalty."""
    rev, vom = hour_economics(d_applied, hour_price, h2_price, econ, plant)
    c_acc, c_fo = annualized_fixed_costs(plant, econ)
    return rev - vom - (c_fo + c_acc) / horizon - penalty_raw * cfg.penalty_factor


def build_observation_vector(
    soc: float,
    elec_window: np.ndarray,
    h2_price: float,
    curt_window: np.ndarray,
    elec_scale: float,
    h2_scale: float,
    capacity: float,
) -> np.ndarray:
    """Assemble the normalized feature vector for the documented layout."""
    w = len(elec_window)
    vec = np.empty(2 + 3 * w)
    vec[0] = soc
    vec[1] = 1.0 - soc
    vec[2 : 2 + w] = np.asarray(elec_window) / elec_scale
    vec[2 + w : 2 + 2 * w] = h2_price / h2_scale
    vec[2 + 2 * w :] = np.asarray(curt_window) / capacity
    return vec


class Environment:
    """Episode stepper over a validated :class:`EpisodeData`.

    ``forecast_curtailment`` substitutes the series the agent observes in
    its curtailment window; the true series still drives dispatch and
    revenue, which is how prediction error is injected for robustness
    studies.
    """

    def __init__(self, episode: EpisodeData, cfg: EnvConfig, seed: int | None = None,
                 forecast_curtailment=None):
        self.episode = episode
        self.cfg = cfg
        self.plant = episode.plant
        self.econ = episode.econ
        self.horizon = episode.length
        if cfg.window_w > self.horizon:
            raise ValidationError(
                f"window_w {cfg.window_w} exceeds horizon {self.horizon}"
            )
        self.rng = np.random.default_rng(seed)

        w = cfg.window_w
        total = episode.curtailment.total
        observed = total
        if forecast_curtailment is not None:
            observed = forecast_curtailment.total
            if len(observed) != len(total):
                raise ValidationError("forecast length differs from the episode")
        elec = episode.prices.electricity
        self.elec_scale = float(np.max(elec)) if np.max(elec) > 0 else 1.0
        self.h2_scale = episode.prices.hydrogen if episode.prices.hydrogen > 0 else 1.0

        # Padded lookups so any window is a contiguous slice.
        self._elec_pad = np.concatenate([elec, np.zeros(w)])
        if cfg.mode == MODE_INTERNAL:
            self._curt_pad = np.concatenate([np.zeros(w), observed])
        else:
            self._curt_pad = np.concatenate([observed, np.zeros(w)])
        self._avail = total

        c_acc, c_fo = annualized_fixed_costs(self.plant, self.econ)
        self.fixed_cost_per_step = (c_fo + c_acc) / self.horizon

        self.t = 0
        self.state = BessState(self.plant.soc_initial_fraction)
        self._done = False
        self._trace: list[str] = []

    # -- observation ------------------------------------------------------

    def _windows(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        w = self.cfg.window_w
        return self._elec_pad[t : t + w], self._curt_pad[t : t + w]

    def _observe(self) -> Observation:
        elec_win, curt_win = self._windows(self.t)
        soc = self.state.soc_fraction
        vector = build_observation_vector(
            soc,
            elec_win,
            self.episode.prices.hydrogen,
            curt_win,
            self.elec_scale,
            self.h2_scale,
            self.plant.bess_capacity,
        )
        return Observation(
            soc=soc,
            remaining_capacity=1.0 - soc,
            prices_elec=elec_win.copy(),
            price_h2=self.episode.prices.hydrogen,
            curtailment_window=curt_win.copy(),
            mode=self.cfg.mode,
            vector=vector,
        )

    @property
    def observation_size(self) -> int:
        return 2 + 3 * self.cfg.window_w

    # -- episode control ---------------------------------------------------

    def reset(self) -> Observation:
        self.t = 0
        self.state = BessState(self.plant.soc_initial_fraction)
        self._done = False
        self._trace = []
        return self._observe()

    def step(self, a: Action) -> StepResult:
        if self._done:
            raise ValidationError("step() called on a finished episode")
        t = self.t
        soc = self.state.soc_fraction
        avail = float(self._avail[t])

        d_raw = decode_action(a, self.plant)
        comps = penalty_components(d_raw, soc, avail, self.plant)
        pen = sum(comps)
        d = filter_action(d_raw, soc, avail, self.plant) if self.cfg.filtration_enabled else d_raw

        self.state = step_soc(self.state, d, self.plant)
        price = float(self.episode.prices.electricity[t])
        rev, vom = hour_economics(d, price, self.episode.prices.hydrogen, self.econ, self.plant)
        r = rev - vom - self.fixed_cost_per_step - pen * self.cfg.penalty_factor

        self.t = t + 1
        self._done = self.t == self.horizon
        h2 = hydrogen_out(d.p_awe, self.plant)
        self._trace.append(
            f"{t},{self.state.soc_fraction!r},{d.p_charge!r},{d.p_discharge!r},"
            f"{d.p_awe!r},{h2!r},{price!r},{r!r},{pen!r}"
        )
        info = {
            "t": t,
            "overcharge": comps[0] > 0.0,
            "overdischarge": comps[1] > 0.0,
            "awe_exceedance": comps[2] > 0.0,
            "penalty_components": comps,
            "dispatch_raw": d_raw,
            "revenue": rev,
            "vom": vom,
            "hydrogen_kg": h2,
            "available_curtailment": avail,
        }
        return StepResult(
            observation=self._observe(),
            reward=r,
            penalty_raw=pen,
            dispatch_applied=d,
            done=self._done,
            info=info,
        )

    # -- trace export ------------------------------------------------------

    @property
    def trace_rows(self) -> list[str]:
        return list(self._trace)

    def trace_csv(self) -> str:
        return "\n".join([TRACE_HEADER, *self._trace]) + "\n"
