"""Policy evaluation: Monte Carlo scenario profits, action maps, day traces.

Scenario uncertainty perturbs the curtailment stream with multiplicative
uniform noise. Rollouts report profit in dollars with the penalty term
stripped back out, so the number matches the plant objective for the
dispatches actually applied.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .agent import PolicyParams, policy_forward, sample_action, squash
from .data_model import CurtailmentSeries, EpisodeData
from .env import Action, EnvConfig, Environment, build_observation_vector
from .errors import ValidationError

SCENARIO_MODELS = ("uniform-hourly", "uniform-episode-scalar")


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSet:
    """Perturbed curtailment series drawn around a base series."""

    base: CurtailmentSeries
    amplitude: float
    count: int
    seed: int
    model: str
    scenarios: tuple

    def violations(self) -> list[str]:
        out = []
        if len(self.scenarios) != self.count:
            out.append(f"{len(self.scenarios)} scenarios != count {self.count}")
        lo = (1.0 - self.amplitude) * self.base.total
        hi = (1.0 + self.amplitude) * self.base.total
        for k, s in enumerate(self.scenarios):
            t = s.total
            if len(t) != len(lo):
                out.append(f"scenario {k} length mismatch")
            elif np.any(t < lo - 1e-9) or np.any(t > hi + 1e-9):
                out.append(f"scenario {k} outside the +/-{self.amplitude} band")
        return out


def generate_scenarios(base: CurtailmentSeries, u: float, count: int, seed: int,
                       model: str = "uniform-hourly") -> ScenarioSet:
    """Draw ``count`` perturbed series with factors uniform on [1-u, 1+u],
    independently per hour or as one scalar per episode."""
    if not 0.0 <= u < 1.0:
        raise ValidationError(f"amplitude u must be in [0, 1), got {u}")
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if model not in SCENARIO_MODELS:
        raise ValidationError(f"model must be one of {SCENARIO_MODELS}, got {model!r}")
    rng = np.random.default_rng(seed)
    hours = len(base.total)
    wind = np.asarray(base.wind)
    solar = np.asarray(base.solar)
    scenarios = []
    for _ in range(count):
        if model == "uniform-hourly":
            f = rng.uniform(1.0 - u, 1.0 + u, hours)
        else:
            f = np.full(hours, rng.uniform(1.0 - u, 1.0 + u))
        scenarios.append(CurtailmentSeries(
            start_timestamp=base.start_timestamp, wind=wind * f, solar=solar * f
        ))
    return ScenarioSet(base=base, amplitude=u, count=count, seed=seed,
                       model=model, scenarios=tuple(scenarios))


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

def rollout(policy: PolicyParams, episode: EpisodeData, cfg: EnvConfig,
            deterministic: bool = True, seed: int | None = None,
            forecast: CurtailmentSeries | None = None) -> tuple[float, list[str]]:
    """Run one episode; returns (profit in dollars, trace rows).

    Profit excludes the penalty term; the per-hour penalty stays visible
    in the trace. ``deterministic`` applies the policy mean action,
    otherwise actions are sampled under ``seed``.
    """
    env = Environment(episode, cfg, seed=seed, forecast_curtailment=forecast)
    if policy.obs_dim != env.observation_size:
        raise ValidationError(
            f"policy input width {policy.obs_dim} != observation size "
            f"{env.observation_size}"
        )
    rng = np.random.default_rng(seed)
    obs = env.reset().vector
    profit = 0.0
    done = False
    while not done:
        mean, log_std = policy_forward(policy, obs)
        if deterministic:
            bess, awe = squash(mean)
            action = Action(bess=bess, awe=awe)
        else:
            action, _ = sample_action(mean, log_std, rng)
        result = env.step(action)
        profit += result.reward + result.penalty_raw * cfg.penalty_factor
        obs = result.observation.vector
        done = result.done
    return profit, env.trace_rows


# ---------------------------------------------------------------------------
# Monte Carlo evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    """Per-scenario profits with summary statistics and a histogram."""

    profits: np.ndarray
    mean: float
    std: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    relative_to_optimal: float | None = None

    def violations(self) -> list[str]:
        out = []
        if abs(self.mean - float(np.mean(self.profits))) > 1e-9 * max(
            1.0, abs(self.mean)
        ):
            out.append("mean does not match the per-scenario list")
        if abs(self.std - float(np.std(self.profits))) > 1e-9 * max(1.0, self.std):
            out.append("std does not match the per-scenario list")
        if int(np.sum(self.hist_counts)) != len(self.profits):
            out.append("histogram counts do not total the scenario count")
        return out


def monte_carlo(policy: PolicyParams, episode: EpisodeData, scenarios: ScenarioSet,
                cfg: EnvConfig, bins: int = 50, deterministic: bool = True,
                oracle_profit: float | None = None, forecast_only: bool = False,
                workers: int = 1) -> EvalReport:
    """Roll the policy over every scenario and aggregate profits.

    Scenarios replace the realized curtailment; with ``forecast_only``
    they corrupt only the observation windows while the base episode
    still drives dispatch (prediction-error robustness). Rollouts are
    independent, so ``workers`` threads may run them; results are reduced
    in scenario order either way.
    """
    if scenarios.count < 1 or not scenarios.scenarios:
        raise ValidationError("empty scenario set")
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")

    def run(indexed):
        k, series = indexed
        if forecast_only:
            ep, forecast = episode, series
        else:
            ep, forecast = replace(episode, curtailment=series), None
        profit, _ = rollout(policy, ep, cfg, deterministic=deterministic,
                            seed=scenarios.seed + k, forecast=forecast)
        return profit

    jobs = list(enumerate(scenarios.scenarios))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            profits = np.asarray(list(pool.map(run, jobs)))
    else:
        profits = np.asarray([run(j) for j in jobs])

    counts, edges = np.histogram(profits, bins=bins)
    relative = None
    if oracle_profit is not None:
        if oracle_profit == 0.0:
            raise ValidationError("oracle profit of zero cannot normalize")
        relative = float(np.mean(profits)) / oracle_profit
    return EvalReport(
        profits=profits,
        mean=float(np.mean(profits)),
        std=float(np.std(profits)),
        hist_counts=counts,
        hist_edges=edges,
        relative_to_optimal=relative,
    )


def report_csv(report: EvalReport) -> str:
    lines = ["scenario,profit"]
    for k, p in enumerate(report.profits):
        lines.append(f"{k},{float(p)!r}")
    return "\n".join(lines) + "\n"


def report_summary(report: EvalReport) -> str:
    lines = [
        f"count={len(report.profits)}",
        f"mean={report.mean!r}",
        f"std={report.std!r}",
        f"min={float(np.min(report.profits))!r}",
        f"max={float(np.max(report.profits))!r}",
    ]
    if report.relative_to_optimal is not None:
        lines.append(f"relative_to_optimal={report.relative_to_optimal!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# action maps
# ---------------------------------------------------------------------------

AXIS_KINDS = ("curtailment", "price")


@dataclass(frozen=True)
class ActionMapGrid:
    """Mean policy actions over a SOC x context grid.

    ``bess[i, j]``/``awe[i, j]`` average the deterministic policy action
    over ``samples_per_cell`` observations at soc_levels[i] and
    axis2_levels[j], with the unplotted window randomized per sample.
    """

    soc_levels: np.ndarray
    axis2_kind: str
    axis2_levels: np.ndarray
    samples_per_cell: int
    bess: np.ndarray
    awe: np.ndarray

    def violations(self) -> list[str]:
        out = []
        shape = (len(self.soc_levels), len(self.axis2_levels))
        if self.bess.shape != shape or self.awe.shape != shape:
            out.append(f"grid shapes {self.bess.shape}/{self.awe.shape} != {shape}")
        if self.samples_per_cell < 1:
            out.append("samples_per_cell must be >= 1")
        return out


def action_map(policy: PolicyParams, episode: EpisodeData, cfg: EnvConfig,
               soc_levels, axis2_kind: str, axis2_levels,
               samples_per_cell: int = 2000, seed: int = 0) -> ActionMapGrid:
    """Average the policy mean action per grid cell.

    The plotted axis fills its whole observation window with the level;
    the other window is redrawn uniformly within the episode's observed
    range for every sample, so cell averages isolate the plotted state.
    """
    plant = episode.plant
    soc_levels = np.asarray(soc_levels, dtype=np.float64)
    axis2_levels = np.asarray(axis2_levels, dtype=np.float64)
    if axis2_kind not in AXIS_KINDS:
        raise ValidationError(f"axis2_kind must be one of {AXIS_KINDS}")
    if np.any(soc_levels < plant.soc_min_fraction) or np.any(soc_levels > 1.0):
        raise ValidationError("soc levels outside [soc_min, 1]")
    if np.any(axis2_levels < 0.0):
        raise ValidationError(f"{axis2_kind} levels must be >= 0")
    if samples_per_cell < 1:
        raise ValidationError("samples_per_cell must be >= 1")

    elec = episode.prices.electricity
    total = episode.curtailment.total
    elec_scale = float(np.max(elec)) if np.max(elec) > 0 else 1.0
    h2_scale = episode.prices.hydrogen if episode.prices.hydrogen > 0 else 1.0
    w = cfg.window_w
    rng = np.random.default_rng(seed)

    bess = np.empty((len(soc_levels), len(axis2_levels)))
    awe = np.empty_like(bess)
    for i, soc in enumerate(soc_levels):
        for j, level in enumerate(axis2_levels):
            if axis2_kind == "curtailment":
                elec_win = rng.uniform(float(np.min(elec)), float(np.max(elec)),
                                       (samples_per_cell, w))
                curt_win = np.full((samples_per_cell, w), level)
            else:
                elec_win = np.full((samples_per_cell, w), level)
                curt_win = rng.uniform(0.0, float(np.max(total)),
                                       (samples_per_cell, w))
            obs = np.stack([
                build_observation_vector(
                    float(soc), elec_win[s], episode.prices.hydrogen,
                    curt_win[s], elec_scale, h2_scale, plant.bess_capacity,
                )
                for s in range(samples_per_cell)
            ])
            means, _ = policy_forward(policy, obs)
            acts = np.stack([squash(m) for m in means])
            bess[i, j] = float(np.mean(acts[:, 0]))
            awe[i, j] = float(np.mean(acts[:, 1]))
    return ActionMapGrid(
        soc_levels=soc_levels,
        axis2_kind=axis2_kind,
        axis2_levels=axis2_levels,
        samples_per_cell=samples_per_cell,
        bess=bess,
        awe=awe,
    )


def grid_csv(grid: ActionMapGrid, which: str) -> str:
    """One grid as CSV: soc rows, axis2 columns."""
    if which not in ("bess", "awe"):
        raise ValidationError("which must be 'bess' or 'awe'")
    data = grid.bess if which == "bess" else grid.awe
    header = "soc\\" + grid.axis2_kind + "," + ",".join(
        repr(float(v)) for v in grid.axis2_levels
    )
    lines = [header]
    for i, soc in enumerate(grid.soc_levels):
        row = ",".join(repr(float(x)) for x in data[i])
        lines.append(f"{float(soc)!r},{row}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# day traces
# ---------------------------------------------------------------------------

def day_trace(policy: PolicyParams, episode: EpisodeData, cfg: EnvConfig,
              day: int) -> list[str]:
    """Trace rows for day ``day`` of a deterministic full-episode rollout."""
    if day < 0 or 24 * (day + 1) > episode.length:
        raise ValidationError(
            f"day {day} outside the {episode.length // 24}-day episode"
        )
    _, rows = rollout(policy, episode, cfg, deterministic=True)
    return rows[24 * day : 24 * (day + 1)]
