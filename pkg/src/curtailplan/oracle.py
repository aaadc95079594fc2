"""Dispatch baselines: a discretized dynamic program, an exhaustive
enumerator for tiny horizons, a greedy profit upper bound, and LP-format
model exporters for external MILP solvers.

The dynamic program and the enumerator share one transition model: for
every (SOC level, action pair) the battery dispatch is realigned so the
next state lands exactly on a grid level (rounding error at most
cap / (2(K-1)) per step). Values are folded right to left in both
solvers, so their optima agree bit for bit and ties resolve to the same
canonical action order.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import EconomicConfig, EpisodeData, PlantConfig
from .env import filter_action, penalty
from .errors import FormatError, NumericalError, ValidationError
from .plant import (
    BessState,
    Dispatch,
    HourRecord,
    annualized_fixed_costs,
    bess_power_limit,
    hour_economics,
    hydrogen_out,
    objective,
    step_soc,
)

BRUTE_FORCE_LIMIT = 12_000_000     # max (M^2)^T sequences to enumerate
DP_BUDGET = 2_000_000_000          # max T*K*M^2 table entries

# Lattice electrolyzer dispatch within this many MWh of the minimum-load
# floor is treated as off, so a one-ulp perturbation during plan replay
# can never flip it across the dead-band.
AWE_FLOOR_MARGIN = 1e-9


@dataclass(frozen=True)
class SocGrid:
    """Evenly spaced state-of-charge levels spanning [soc_min, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64).copy()
        if arr.ndim != 1 or len(arr) < 2:
            raise ValidationError("grid needs at least 2 levels")
        if not np.all(np.diff(arr) > 0):
            raise ValidationError("grid levels must be strictly increasing")
        if arr[-1] != 1.0:
            raise ValidationError(f"grid must end exactly at 1, got {arr[-1]}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def levels(self) -> int:
        return len(self.values)

    @classmethod
    def for_plant(cls, plant: PlantConfig, levels: int) -> "SocGrid":
        return cls(np.linspace(plant.soc_min_fraction, 1.0, levels))


@dataclass(frozen=True)
class PlanResult:
    """An open-loop dispatch plan with its replayed profit and SOC path."""

    dispatch_sequence: tuple
    profit: float
    soc_path: np.ndarray


# ---------------------------------------------------------------------------
# shared transition model
# ---------------------------------------------------------------------------

def _action_levels(plant: PlantConfig, m: int) -> tuple[np.ndarray, np.ndarray]:
    """M battery power levels over [-limit, limit] and M electrolyzer
    levels over [0, max]; the action pair index is battery-major."""
    if m < 2:
        raise ValidationError(f"need at least 2 action levels, got {m}")
    battery = np.linspace(-1.0, 1.0, m) * bess_power_limit(plant)
    awe = np.linspace(0.0, 1.0, m) * plant.awe_power_max
    awe = np.where(awe < plant.awe_min_fraction * plant.awe_power_max, 0.0, awe)
    return battery, awe


def _snap_nearest(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Indices of the grid levels nearest to x; ties resolve downward."""
    pos = np.searchsorted(values, x)
    lo = np.clip(pos - 1, 0, len(values) - 1)
    hi = np.clip(pos, 0, len(values) - 1)
    return np.where(x - values[lo] <= values[hi] - x, lo, hi)


class _HourTables:
    """Per-curtailment transition tables on the (grid x action) lattice.

    j[i, b]: next SOC index; charge[i, b], discharge[i, b]: realigned
    battery dispatch in MWh; awe[i, b, w]: electrolyzer dispatch after the
    curtailment split and dead-band snap.
    """

    def __init__(self, grid: SocGrid, plant: PlantConfig, avail: float,
                 battery_levels: np.ndarray, awe_levels: np.ndarray):
        values = grid.values
        k = len(values)
        mb, mw = len(battery_levels), len(awe_levels)
        cap = plant.bess_capacity
        eta_ch, eta_dh = plant.eta_charge, plant.eta_discharge
        alpha = plant.soc_min_fraction
        awe_floor = plant.awe_min_fraction * plant.awe_power_max
        p_lim = bess_power_limit(plant)

        j = np.empty((k, mb), dtype=np.int32)
        charge = np.zeros((k, mb))
        discharge = np.zeros((k, mb))

        chg = battery_levels >= 0
        for i, s in enumerate(values):
            # Charging branch: clamp to headroom and curtailment, snap the
            # tentative state to the nearest level, realign the dispatch to
            # land exactly on it, fall back downward if the realignment
            # overdraws the curtailment or the hourly power limit.
            c = np.minimum(battery_levels[chg], min((1.0 - s) * cap / eta_ch, avail))
            c = np.maximum(c, 0.0)
            ji = np.maximum(_snap_nearest(values, s + c * eta_ch / cap), i)
            c_lat = (values[ji] - s) * cap / eta_ch
            while True:
                bad = (c_lat > avail) | (c_lat > p_lim)
                if not np.any(bad):
                    break
                ji = np.where(bad, np.maximum(ji - 1, i), ji)
                c_lat = (values[ji] - s) * cap / eta_ch
            j[i, chg] = ji
            charge[i, chg] = c_lat

            # Discharging branch: realignment toward lower levels never
            # leaves [alpha, s]; targets that would need more than the
            # hourly power limit back off toward the start level.
            d = np.minimum(-battery_levels[~chg], (s - alpha) * cap * eta_dh)
            d = np.maximum(d, 0.0)
            ji = np.minimum(_snap_nearest(values, s - d / eta_dh / cap), i)
            d_lat = (s - values[ji]) * cap * eta_dh
            while True:
                bad = d_lat > p_lim
                if not np.any(bad):
                    break
                ji = np.where(bad, np.minimum(ji + 1, i), ji)
                d_lat = (s - values[ji]) * cap * eta_dh
            j[i, ~chg] = ji
            discharge[i, ~chg] = d_lat

        # Electrolyzer split: whatever curtailment the charge left over,
        # switched off below the minimum-load floor. Floor-hugging values
        # with hairline curtailment slack are zeroed too: replay rounding
        # could otherwise push them across the dead-band.
        room = avail - charge[:, :, None]
        awe = np.minimum(awe_levels[None, None, :], room)
        awe = np.maximum(awe, 0.0)
        hairline = (awe < awe_floor + AWE_FLOOR_MARGIN) & (
            room - awe < AWE_FLOOR_MARGIN
        )
        awe[(awe < awe_floor) | hairline] = 0.0

        self.j = j
        self.charge = charge
        self.discharge = discharge
        self.awe = awe
        self.n_actions = mb * mw


def _reward_matrix(tables: _HourTables, price: float, h2_coef: float,
                   vom_bess: float) -> np.ndarray:
    """Hour reward for every (SOC level, action pair), fixed costs excluded."""
    dis_term = tables.discharge * (price - vom_bess)
    return dis_term[:, :, None] + tables.awe * h2_coef


class _LatticeModel:
    """Transition/reward tables per hour, cached on distinct curtailment."""

    def __init__(self, episode: EpisodeData, grid: SocGrid, m: int):
        if grid.values[0] != episode.plant.soc_min_fraction:
            raise ValidationError(
                "grid must start exactly at the plant's soc_min_fraction"
            )
        self.episode = episode
        self.grid = grid
        self.plant = episode.plant
        self.battery_levels, self.awe_levels = _action_levels(episode.plant, m)
        self.avail = episode.curtailment.total
        self.prices = episode.prices.electricity
        econ = episode.econ
        self.h2_coef = (
            (episode.prices.hydrogen - econ.vom_awe)
            * episode.plant.eta_awe / episode.plant.lhv
        )
        self.vom_bess = econ.vom_bess
        self._cache: dict[float, _HourTables] = {}

    def tables(self, t: int) -> _HourTables:
        key = float(self.avail[t])
        hit = self._cache.get(key)
        if hit is None:
            hit = _HourTables(
                self.grid, self.plant, key, self.battery_levels, self.awe_levels
            )
            self._cache[key] = hit
        return hit

    def rewards(self, t: int) -> np.ndarray:
        return _reward_matrix(
            self.tables(t), float(self.prices[t]), self.h2_coef, self.vom_bess
        )

    def start_index(self) -> int:
        return int(
            _snap_nearest(
                self.grid.values, np.asarray([self.plant.soc_initial_fraction])
            )[0]
        )


def _extract_plan(model: _LatticeModel, action_sequence: np.ndarray) -> PlanResult:
    """Replay an action-index sequence into an exactly feasible plan.

    Each hour realigns the dispatch from the actually reached SOC toward
    the planned lattice target and runs it through the action filter, so
    rounding never accumulates and the plan replays with zero penalty.
    """
    episode, grid, plant = model.episode, model.grid, model.plant
    values = grid.values
    mw = len(model.awe_levels)
    cap, eta_ch, eta_dh = plant.bess_capacity, plant.eta_charge, plant.eta_discharge

    state = BessState(plant.soc_initial_fraction)
    i = model.start_index()
    soc_path = [state.soc_fraction]
    records: list[HourRecord] = []
    dispatches: list[Dispatch] = []
    for t, a in enumerate(action_sequence):
        tab = model.tables(t)
        bi, wi = divmod(int(a), mw)
        j = int(tab.j[i, bi])
        target = values[j]
        s = state.soc_fraction
        avail = float(model.avail[t])
        p_lim = bess_power_limit(plant)
        if j > i:
            raw = Dispatch(p_charge=min((target - s) * cap / eta_ch, p_lim))
        elif j < i:
            raw = Dispatch(p_discharge=min((s - target) * cap * eta_dh, p_lim))
        else:
            raw = Dispatch()
        w = float(tab.awe[i, bi, wi])
        if w > 0.0:
            raw = Dispatch(p_charge=raw.p_charge, p_discharge=raw.p_discharge, p_awe=w)
        d = filter_action(raw, s, avail, plant)
        state = step_soc(state, d, plant)
        rev, vom = hour_economics(
            d, float(model.prices[t]), episode.prices.hydrogen, episode.econ, plant
        )
        records.append(
            HourRecord(d, state.soc_fraction, hydrogen_out(d.p_awe, plant), rev, vom)
        )
        dispatches.append(d)
        soc_path.append(state.soc_fraction)
        i = j
    profit = objective(records, plant, episode.econ)
    return PlanResult(
        dispatch_sequence=tuple(dispatches),
        profit=profit,
        soc_path=np.asarray(soc_path),
    )


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def dp_solve(episode: EpisodeData, grid: SocGrid, action_levels: int) -> PlanResult:
    """Backward induction over the SOC lattice and discretized actions.

    Maximizes total reward over the discretized policy class; the
    returned plan replays through the plant model to the reported profit.
    """
    t_len = episode.length
    k = grid.levels
    if t_len * k * action_levels * action_levels > DP_BUDGET:
        raise ValidationError(
            f"dynamic program size {t_len}x{k}x{action_levels}^2 exceeds budget"
        )
    model = _LatticeModel(episode, grid, action_levels)
    mb = len(model.battery_levels)

    value = np.zeros(k)
    best = np.empty((t_len, k), dtype=np.int32)
    for t in range(t_len - 1, -1, -1):
        tab = model.tables(t)
        r = model.rewards(t)                      # (K, Mb, Mw)
        cand = r + value[tab.j][:, :, None]       # suffix value folded right
        flat = cand.reshape(k, tab.n_actions)
        best[t] = np.argmax(flat, axis=1)         # first maximizer wins ties
        value = flat[np.arange(k), best[t]]

    seq = np.empty(t_len, dtype=np.int64)
    i = model.start_index()
    for t in range(t_len):
        a = int(best[t, i])
        seq[t] = a
        i = int(model.tables(t).j[i, a // len(model.awe_levels)])
    return _extract_plan(model, seq)


def brute_force(episode: EpisodeData, grid: SocGrid, action_levels: int) -> PlanResult:
    """Exhaustive maximum over all discretized dispatch sequences.

    The independent ground truth for dp_solve on tiny horizons: expands
    every action sequence in lexicographic order and folds rewards right
    to left, so the optimum matches the dynamic program bit for bit.
    """
    t_len = episode.length
    model = _LatticeModel(episode, grid, action_levels)
    n_actions = len(model.battery_levels) * len(model.awe_levels)
    total = n_actions ** t_len
    if total > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            f"{n_actions}^{t_len} sequences exceed the enumeration limit"
        )
    mw = len(model.awe_levels)

    idx = np.asarray([model.start_index()])
    layers = []
    for t in range(t_len):
        tab = model.tables(t)
        r = model.rewards(t).reshape(grid.levels, n_actions)
        layers.append(r[idx].ravel())
        nxt = tab.j[idx][:, np.repeat(np.arange(len(model.battery_levels)), mw)]
        idx = nxt.ravel()

    value = layers[-1]
    for t in range(t_len - 2, -1, -1):
        reps = n_actions ** (t_len - 1 - t)
        value = np.repeat(layers[t], reps) + value
    best = int(np.argmax(value))

    seq = np.empty(t_len, dtype=np.int64)
    for t in range(t_len - 1, -1, -1):
        best, a = divmod(best, n_actions)
        seq[t] = a
    return _extract_plan(model, seq)


def greedy_profit_bound(episode: EpisodeData) -> float:
    """Upper bound on any feasible profit, by relaxation.

    Counts the full curtailment stream for both storage and hydrogen
    (dropping exclusivity and the dead-band), and sells the storable
    energy at the highest prices subject only to the hourly power limit.
    """
    plant, econ = episode.plant, episode.econ
    avail = episode.curtailment.total
    h2_rate = max(
        0.0,
        (episode.prices.hydrogen - econ.vom_awe) * plant.eta_awe / plant.lhv,
    )
    gain = float(np.sum(np.minimum(avail, plant.awe_power_max))) * h2_rate

    e_cells = (plant.soc_initial_fraction - plant.soc_min_fraction) * plant.bess_capacity
    e_cells += float(np.sum(avail)) * plant.eta_charge
    e_dis = e_cells * plant.eta_discharge
    p_lim = bess_power_limit(plant)
    for p in sorted(episode.prices.electricity, reverse=True):
        if e_dis <= 0.0:
            break
        take = min(e_dis, p_lim)
        gain += take * max(0.0, float(p) - econ.vom_bess)
        e_dis -= take
    c_acc, c_fo = annualized_fixed_costs(plant, econ)
    return gain - c_acc - c_fo


def replay_plan(plan: PlanResult, episode: EpisodeData) -> tuple[float, float]:
    """Step a plan through the plant model; returns (profit, max penalty)."""
    plant, econ = episode.plant, episode.econ
    state = BessState(plant.soc_initial_fraction)
    worst = 0.0
    records = []
    for t, d in enumerate(plan.dispatch_sequence):
        pen = penalty(d, state.soc_fraction, float(episode.curtailment.total[t]), plant)
        worst = max(worst, pen)
        state = step_soc(state, d, plant)
        rev, vom = hour_economics(
            d,
            float(episode.prices.electricity[t]),
            episode.prices.hydrogen,
            econ,
            plant,
        )
        records.append(
            HourRecord(d, state.soc_fraction, hydrogen_out(d.p_awe, plant), rev, vom)
        )
    return objective(records, plant, econ), worst


# ---------------------------------------------------------------------------
# LP-format export
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _term_string(terms: list[tuple[float, str]]) -> str:
    """Render coefficient/variable pairs as LP-format linear expressions."""
    parts: list[str] = []
    for coef, name in terms:
        mag = _fmt(abs(coef))
        if not parts:
            parts.append(f"- {mag} {name}" if coef < 0 else f"{mag} {name}")
        else:
            parts.append(f"{'-' if coef < 0 else '+'} {mag} {name}")
    return " ".join(parts)


def _milp_lines(episode: EpisodeData, suffix, first_stage: bool,
                prob: float) -> tuple[list[str], list[str], list[str], list[str]]:
    """Rows, bounds, binaries, and objective terms for one scenario block.

    ``suffix(base, t)`` names scenario-owned columns; shared first-stage
    columns keep their plain names. ``first_stage`` controls whether the
    dispatch/commitment rows are emitted (they are shared, so only once).
    """
    plant, econ = episode.plant, episode.econ
    avail = episode.curtailment.total
    prices = episode.prices.electricity
    t_len = episode.length
    p_lim = bess_power_limit(plant)
    c1 = plant.eta_charge / plant.bess_capacity
    c2 = 1.0 / (plant.eta_discharge * plant.bess_capacity)
    awe_floor = plant.awe_min_fraction * plant.awe_power_max
    h2_coef = (episode.prices.hydrogen - econ.vom_awe) * plant.eta_awe / plant.lhv

    rows: list[str] = []
    bounds: list[str] = []
    binaries: list[str] = []
    obj: list[tuple[float, str]] = []

    for t in range(t_len):
        soc = suffix("soc", t)
        cf = suffix("cf", t)
        rows.append(
            f" {suffix('balance', t)}: {_term_string([(1.0, cf), (1.0, f'pch_{t}'), (1.0, f'pawe_{t}')])}"
            f" = {_fmt(avail[t])}"
        )
        if t == 0:
            lhs = [(1.0, soc), (-c1, "pch_0"), (c2, "pdh_0")]
            rhs = plant.soc_initial_fraction
        else:
            lhs = [(1.0, soc), (-1.0, suffix("soc", t - 1)),
                   (-c1, f"pch_{t}"), (c2, f"pdh_{t}")]
            rhs = 0.0
        rows.append(f" {suffix('socdef', t)}: {_term_string(lhs)} = {_fmt(rhs)}")
        bounds.append(f" {_fmt(plant.soc_min_fraction)} <= {soc} <= 1.0")
        obj.append((prob * (float(prices[t]) - econ.vom_bess), f"pdh_{t}"))
        obj.append((prob * h2_coef, f"pawe_{t}"))

        if first_stage:
            rows.append(f" excl_{t}: {_term_string([(1.0, f'zch_{t}'), (1.0, f'zdh_{t}')])} <= 1")
            rows.append(f" chlim_{t}: {_term_string([(1.0, f'pch_{t}'), (-p_lim, f'zch_{t}')])} <= 0")
            rows.append(f" dhlim_{t}: {_term_string([(1.0, f'pdh_{t}'), (-p_lim, f'zdh_{t}')])} <= 0")
            rows.append(f" awehi_{t}: {_term_string([(1.0, f'pawe_{t}'), (-plant.awe_power_max, f'zawe_{t}')])} <= 0")
            rows.append(f" awelo_{t}: {_term_string([(1.0, f'pawe_{t}'), (-awe_floor, f'zawe_{t}')])} >= 0")
            bounds.append(f" 0 <= pch_{t} <= {_fmt(p_lim)}")
            bounds.append(f" 0 <= pdh_{t} <= {_fmt(p_lim)}")
            bounds.append(f" 0 <= pawe_{t} <= {_fmt(plant.awe_power_max)}")
            binaries.extend([f"zch_{t}", f"zdh_{t}", f"zawe_{t}"])
    return rows, bounds, binaries, obj


def _write_lp(path, objective_terms, fixed_cost: float, rows, bounds, binaries) -> None:
    lines = ["Maximize"]
    terms = list(objective_terms) + [(-fixed_cost, "one")]
    # Wrap the objective: expressions may span lines in LP format, and
    # some readers cap line lengths.
    lines.append(f" obj: {_term_string(terms[:4])}")
    for i in range(4, len(terms), 4):
        chunk = terms[i : i + 4]
        sign = "-" if chunk[0][0] < 0 else "+"
        rest = _term_string([(abs(chunk[0][0]), chunk[0][1])] + list(chunk[1:]))
        lines.append(f"      {sign} {rest}")
    lines.append("Subject To")
    lines.extend(rows)
    lines.append("Bounds")
    lines.append(" one = 1")
    lines.extend(bounds)
    lines.append("Binaries")
    for i in range(0, len(binaries), 8):
        lines.append(" " + " ".join(binaries[i : i + 8]))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


def export_milp(episode: EpisodeData, path) -> dict:
    """Write the deterministic dispatch MILP in LP format.

    Decision columns per hour: pch_t, pdh_t, pawe_t (MWh), soc_t
    (fraction), cf_t (unused curtailment, MWh), binaries zch_t, zdh_t,
    zawe_t. The objective constant is carried by a variable fixed to 1.
    Reads the file back and checks the analytic row/column counts.
    """
    def plain(base, t):
        return f"{base}_{t}"

    rows, bounds, binaries, obj = _milp_lines(episode, plain, True, 1.0)
    c_acc, c_fo = annualized_fixed_costs(episode.plant, episode.econ)
    _write_lp(path, obj, c_acc + c_fo, rows, bounds, binaries)

    summary = read_lp_summary(path)
    t_len = episode.length
    expect = {"binaries": 3 * t_len, "exclusivity_rows": t_len,
              "constraints": 7 * t_len}
    got = {"binaries": summary["binaries"],
           "exclusivity_rows": summary["exclusivity_rows"],
           "constraints": summary["constraints"]}
    if got != expect:
        raise NumericalError(f"exported model counts {got} != expected {expect}")
    return summary


def export_so(episode: EpisodeData, scenarios, probabilities, path) -> dict:
    """Write the scenario extensive form in LP format.

    Dispatch and commitment columns are first-stage (shared); each
    scenario owns its SOC/curtailment-balance block and contributes its
    probability-weighted revenue terms.
    """
    import dataclasses as _dc

    if len(scenarios) < 1:
        raise ValidationError("need at least one scenario")
    if len(scenarios) != len(probabilities):
        raise ValidationError("scenario and probability counts differ")
    total_p = math.fsum(probabilities)
    if abs(total_p - 1.0) > 1e-9:
        raise ValidationError(f"probabilities sum to {total_p}, expected 1")
    for s in scenarios:
        if s.length != episode.length:
            raise ValidationError("scenario length differs from the episode")

    all_rows: list[str] = []
    all_bounds: list[str] = []
    binaries: list[str] = []
    obj: dict[str, float] = {}
    for si, (series, p) in enumerate(zip(scenarios, probabilities)):
        scen_episode = _dc.replace(episode, curtailment=series)

        def scoped(base, t, _si=si):
            return f"{base}_s{_si}_{t}"

        rows, bounds, bins, terms = _milp_lines(scen_episode, scoped, si == 0, float(p))
        all_rows.extend(rows)
        all_bounds.extend(bounds)
        binaries.extend(bins)
        for coef, name in terms:
            obj[name] = obj.get(name, 0.0) + coef

    c_acc, c_fo = annualized_fixed_costs(episode.plant, episode.econ)
    ordered = [(obj[name], name) for name in obj]
    _write_lp(path, ordered, c_acc + c_fo, all_rows, all_bounds, binaries)
    return read_lp_summary(path)


# ---------------------------------------------------------------------------
# LP-format read-back
# ---------------------------------------------------------------------------

_TERM_RE = re.compile(r"([+-])?\s*(\d[\d.eE+-]*)?\s*([A-Za-z_][\w]*)")


def _parse_terms(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for sign, num, name in _TERM_RE.findall(text):
        coef = float(num) if num else 1.0
        if sign == "-":
            coef = -coef
        out[name] = out.get(name, 0.0) + coef
    return out


@dataclass(frozen=True)
class LpModel:
    sense: str
    objective: dict
    constraints: list            # (name, terms, relation, rhs)
    bounds: dict                 # name -> (lo, hi)
    binaries: frozenset


def read_lp_model(path) -> LpModel:
    """Parse the LP dialect written by the exporters above."""
    text = Path(path).read_text()
    section = None
    sense = ""
    objective: dict[str, float] = {}
    constraints = []
    bounds: dict[str, tuple] = {}
    binaries: set[str] = set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("maximize", "minimize"):
            sense, section = low, "objective"
            continue
        if low == "subject to":
            section = "constraints"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary"):
            section = "binaries"
            continue
        if low == "end":
            section = None
            continue
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            objective.update(_parse_terms(body))
        elif section == "constraints":
            if ":" not in line:
                raise FormatError(f"constraint row without a name: {line!r}")
            name, body = (part.strip() for part in line.split(":", 1))
            match = re.search(r"(<=|>=|=)\s*([-\d.eE+]+)\s*$", body)
            if match is None:
                raise FormatError(f"constraint row without a relation: {line!r}")
            constraints.append(
                (
                    name,
                    _parse_terms(body[: match.start()]),
                    match.group(1),
                    float(match.group(2)),
                )
            )
        elif section == "bounds":
            eq = re.fullmatch(r"([\w]+)\s*=\s*([-\d.eE+]+)", line)
            if eq:
                v = float(eq.group(2))
                bounds[eq.group(1)] = (v, v)
                continue
            rng = re.fullmatch(r"([-\d.eE+]+)\s*<=\s*([\w]+)\s*<=\s*([-\d.eE+]+)", line)
            if rng is None:
                raise FormatError(f"unparseable bounds row: {line!r}")
            bounds[rng.group(2)] = (float(rng.group(1)), float(rng.group(3)))
        elif section == "binaries":
            binaries.update(line.split())
    if not sense:
        raise FormatError(f"{path}: no objective sense found")
    return LpModel(sense, objective, constraints, bounds, frozenset(binaries))


def read_lp_summary(path) -> dict:
    """Structural counts of an exported model, for verification."""
    model = read_lp_model(path)
    variables = set(model.objective)
    exclusivity = 0
    for _, terms, relation, rhs in model.constraints:
        variables.update(terms)
        if (
            relation == "<="
            and rhs == 1.0
            and len(terms) == 2
            and all(name in model.binaries and coef == 1.0 for name, coef in terms.items())
        ):
            exclusivity += 1
    variables.update(model.bounds)
    variables.update(model.binaries)
    return {
        "sense": model.sense,
        "variables": len(variables),
        "binaries": len(model.binaries),
        "constraints": len(model.constraints),
        "exclusivity_rows": exclusivity,
    }
