"""Console entry point wiring ingest, training, evaluation, and export.

Every subcommand resolves its arguments into a canonical argument
vector, writes a JSON run manifest (command, resolved settings, input
file digests, seed, tool version, output paths) *before* producing any
output, then writes the outputs. Re-running the recorded vector, e.g.
via :func:`rerun_manifest`, regenerates every output byte for byte as
long as the inputs still match their digests. Paths are absolutized in
the recorded vector so a rerun does not depend on the working
directory; all randomness flows from the recorded seed.

Exit codes: 0 success, 1 validation or format error, 2 I/O error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agent import (
    TrainConfig,
    curve_to_csv,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .data_model import (
    ingest_curtailment,
    load_episode,
    read_config_file,
    read_curtailment_csv,
    write_curtailment_csv,
)
from .env import TRACE_HEADER, EnvConfig, Environment
from .errors import BoundsError, NumericalError, ValidationError
from .eval import (
    SCENARIO_MODELS,
    action_map,
    day_trace,
    generate_scenarios,
    grid_csv,
    monte_carlo,
    report_csv,
    report_summary,
)
from .oracle import SocGrid, dp_solve, export_milp, export_so, greedy_profit_bound
from .plant import hydrogen_out

CONFIG_ENV_VAR = "CURTAIL_PLAN_CONFIG"


# ---------------------------------------------------------------------------
# run manifests
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Complete recipe for one CLI run.

    ``argv`` is the canonical argument vector that reproduces the run;
    ``inputs`` maps every input file to its sha256 digest so a rerun can
    refuse to proceed on changed data.
    """

    command: str
    argv: tuple
    settings: dict
    inputs: dict
    seed: int | None
    version: str
    outputs: tuple

    def to_json(self) -> str:
        payload = dataclasses.asdict(self)
        payload["argv"] = list(self.argv)
        payload["outputs"] = list(self.outputs)
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _episode_inputs(directory) -> dict:
    d = Path(directory)
    names = ("curtailment.csv", "prices.csv", "config.kv")
    return {str(d / n): _digest(d / n) for n in names}


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_manifest(manifest: RunManifest, path) -> None:
    _write_text(path, manifest.to_json())


def read_manifest(path) -> RunManifest:
    payload = json.loads(Path(path).read_text())
    return RunManifest(
        command=payload["command"],
        argv=tuple(payload["argv"]),
        settings=payload["settings"],
        inputs=payload["inputs"],
        seed=payload["seed"],
        version=payload["version"],
        outputs=tuple(payload["outputs"]),
    )


def rerun_manifest(path) -> int:
    """Re-execute a recorded run after checking its input digests."""
    manifest = read_manifest(path)
    for input_path, digest in manifest.inputs.items():
        if _digest(input_path) != digest:
            raise ValidationError(
                f"input {input_path} changed since the manifest was written"
            )
    return main(list(manifest.argv))


# ---------------------------------------------------------------------------
# shared argument plumbing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Raises instead of exiting so main() owns the exit code."""

    def error(self, message):
        raise ValidationError(message)


def _abspath(path) -> str:
    return os.path.abspath(str(path))


def _resolve_config_path(flag_value) -> str | None:
    if flag_value is not None:
        return _abspath(flag_value)
    env_value = os.environ.get(CONFIG_ENV_VAR)
    if env_value:
        return _abspath(env_value)
    return None


def _load_env_config(config_path: str | None) -> EnvConfig:
    if config_path is None:
        return EnvConfig()
    mapping = read_config_file(config_path)
    names = {f.name for f in dataclasses.fields(EnvConfig)}
    return EnvConfig(**{k: v for k, v in mapping.items() if k in names})


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc


def _config_inputs(config_path: str | None) -> dict:
    return {} if config_path is None else {config_path: _digest(config_path)}


def _config_argv(config_path: str | None) -> list[str]:
    return [] if config_path is None else ["--config", config_path]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    raw = _abspath(args.raw)
    out = _abspath(args.out)
    records = read_curtailment_csv(raw)
    series = ingest_curtailment(records)
    manifest = RunManifest(
        command="ingest",
        argv=("ingest", raw, out),
        settings={"raw": raw, "out": out},
        inputs={raw: _digest(raw)},
        seed=None,
        version=__version__,
        outputs=(out,),
    )
    write_manifest(manifest, out + ".manifest.json")
    write_curtailment_csv(series, out)
    print(f"hours = {series.length}")
    print(f"wrote {out}")
    return 0


def _cmd_train(args) -> int:
    config_path = _abspath(args.config)
    out_dir = Path(_abspath(args.out))
    mapping = read_config_file(config_path)
    if "data_dir" not in mapping:
        raise ValidationError(f"{config_path}: missing data_dir")
    data_dir = Path(config_path).parent / str(mapping["data_dir"])
    data_dir = Path(_abspath(data_dir))
    episode = load_episode(data_dir)

    env_names = {f.name for f in dataclasses.fields(EnvConfig)}
    env_cfg = EnvConfig(**{k: v for k, v in mapping.items() if k in env_names})
    train_names = {f.name for f in dataclasses.fields(TrainConfig)}
    train_cfg = TrainConfig(**{k: v for k, v in mapping.items() if k in train_names})
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    train_cfg.validate()

    checkpoint_path = out_dir / "checkpoint.bin"
    curve_path = out_dir / "curve.csv"
    argv = ["train", config_path, "--out", str(out_dir)]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    settings = dict(sorted({
        **dataclasses.asdict(env_cfg),
        **dataclasses.asdict(train_cfg),
        "data_dir": str(data_dir),
    }.items()))
    manifest = RunManifest(
        command="train",
        argv=tuple(argv),
        settings=settings,
        inputs={config_path: _digest(config_path), **_episode_inputs(data_dir)},
        seed=train_cfg.seed,
        version=__version__,
        outputs=(str(checkpoint_path), str(curve_path)),
    )
    write_manifest(manifest, out_dir / "manifest.json")

    def factory(i: int) -> Environment:
        return Environment(episode, env_cfg)

    policy, value, curve = train(factory, train_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint_path, policy, value)
    _write_text(curve_path, curve_to_csv(curve))
    if curve:
        last = curve[-1]
        print(f"iterations = {len(curve)}")
        print(f"final_mean_profit = {last.mean_profit!r}")
    print(f"wrote {checkpoint_path}")
    print(f"wrote {curve_path}")
    return 0


def _cmd_evaluate(args) -> int:
    checkpoint = _abspath(args.checkpoint)
    data_dir = _abspath(args.data)
    out_dir = Path(_abspath(args.out))
    config_path = _resolve_config_path(args.config)
    env_cfg = _load_env_config(config_path)
    episode = load_episode(data_dir)
    policy, _ = load_checkpoint(checkpoint)
    scenarios = generate_scenarios(
        episode.curtailment, args.uncertainty, args.scenarios, args.seed,
        model=args.model,
    )

    # Report names encode the policy, scenario seed, and amplitude so runs
    # with different settings can land in one directory without clobbering.
    tag = f"{Path(checkpoint).stem}_u{args.uncertainty!r}_s{args.seed}"
    report_path = out_dir / f"report_{tag}.csv"
    summary_path = out_dir / f"summary_{tag}.txt"
    argv = (
        ["evaluate", checkpoint, data_dir, "--out", str(out_dir)]
        + _config_argv(config_path)
        + ["--uncertainty", repr(args.uncertainty),
           "--scenarios", str(args.scenarios),
           "--seed", str(args.seed),
           "--model", args.model,
           "--bins", str(args.bins),
           "--workers", str(args.workers)]
        + (["--oracle-profit", repr(args.oracle_profit)]
           if args.oracle_profit is not None else [])
        + (["--forecast-only"] if args.forecast_only else [])
    )
    settings = {
        **dataclasses.asdict(env_cfg),
        "uncertainty": args.uncertainty,
        "scenarios": args.scenarios,
        "model": args.model,
        "bins": args.bins,
        "workers": args.workers,
        "oracle_profit": args.oracle_profit,
        "forecast_only": args.forecast_only,
    }
    manifest = RunManifest(
        command="evaluate",
        argv=tuple(argv),
        settings=dict(sorted(settings.items())),
        inputs={checkpoint: _digest(checkpoint),
                **_episode_inputs(data_dir), **_config_inputs(config_path)},
        seed=args.seed,
        version=__version__,
        outputs=(str(report_path), str(summary_path)),
    )
    write_manifest(manifest, out_dir / "manifest.json")

    report = monte_carlo(
        policy, episode, scenarios, env_cfg, bins=args.bins,
        oracle_profit=args.oracle_profit, forecast_only=args.forecast_only,
        workers=args.workers,
    )
    summary = report_summary(report)
    _write_text(report_path, report_csv(report))
    _write_text(summary_path, summary)
    print(summary, end="")
    return 0


def _cmd_oracle(args) -> int:
    data_dir = _abspath(args.data)
    out_dir = Path(_abspath(args.out))
    episode = load_episode(data_dir)
    plan_path = out_dir / "plan.csv"
    summary_path = out_dir / "summary.txt"
    manifest = RunManifest(
        command="oracle",
        argv=("oracle", data_dir, "--out", str(out_dir),
              "--grid", str(args.grid), "--levels", str(args.levels)),
        settings={"grid": args.grid, "levels": args.levels},
        inputs=_episode_inputs(data_dir),
        seed=None,
        version=__version__,
        outputs=(str(plan_path), str(summary_path)),
    )
    write_manifest(manifest, out_dir / "manifest.json")

    grid = SocGrid.for_plant(episode.plant, args.grid)
    plan = dp_solve(episode, grid, args.levels)
    lines = ["t,p_ch,p_dh,p_awe,h2_kg,soc"]
    for t, d in enumerate(plan.dispatch_sequence):
        h2 = hydrogen_out(d.p_awe, episode.plant)
        lines.append(
            f"{t},{float(d.p_charge)!r},{float(d.p_discharge)!r},"
            f"{float(d.p_awe)!r},{float(h2)!r},{float(plan.soc_path[t + 1])!r}"
        )
    _write_text(plan_path, "\n".join(lines) + "\n")
    summary = "\n".join([
        f"hours={episode.length}",
        f"grid_levels={args.grid}",
        f"action_levels={args.levels}",
        f"profit={float(plan.profit)!r}",
        f"upper_bound={float(greedy_profit_bound(episode))!r}",
    ]) + "\n"
    _write_text(summary_path, summary)
    print(summary, end="")
    return 0


def _cmd_export_milp(args) -> int:
    data_dir = _abspath(args.data)
    out = _abspath(args.out)
    episode = load_episode(data_dir)
    manifest = RunManifest(
        command="export-milp",
        argv=("export-milp", data_dir, "--out", out),
        settings={"hours": episode.length},
        inputs=_episode_inputs(data_dir),
        seed=None,
        version=__version__,
        outputs=(out,),
    )
    write_manifest(manifest, out + ".manifest.json")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    summary = export_milp(episode, out)
    for key in sorted(summary):
        print(f"{key} = {summary[key]}")
    return 0


def _cmd_export_so(args) -> int:
    data_dir = _abspath(args.data)
    out = _abspath(args.out)
    episode = load_episode(data_dir)
    scenarios = generate_scenarios(
        episode.curtailment, args.uncertainty, args.scenarios, args.seed,
        model=args.model,
    )
    manifest = RunManifest(
        command="export-so",
        argv=("export-so", data_dir, "--out", out,
              "--uncertainty", repr(args.uncertainty),
              "--scenarios", str(args.scenarios),
              "--seed", str(args.seed), "--model", args.model),
        settings={"hours": episode.length, "uncertainty": args.uncertainty,
                  "scenarios": args.scenarios, "model": args.model},
        inputs=_episode_inputs(data_dir),
        seed=args.seed,
        version=__version__,
        outputs=(out,),
    )
    write_manifest(manifest, out + ".manifest.json")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    probabilities = [1.0 / args.scenarios] * args.scenarios
    summary = export_so(episode, scenarios.scenarios, probabilities, out)
    for key in sorted(summary):
        print(f"{key} = {summary[key]}")
    return 0


def _cmd_action_map(args) -> int:
    checkpoint = _abspath(args.checkpoint)
    data_dir = _abspath(args.data)
    out_dir = Path(_abspath(args.out))
    config_path = _resolve_config_path(args.config)
    env_cfg = _load_env_config(config_path)
    episode = load_episode(data_dir)
    policy, _ = load_checkpoint(checkpoint)

    if args.soc_levels is not None:
        soc_levels = _float_list(args.soc_levels)
    else:
        soc_levels = np.linspace(episode.plant.soc_min_fraction, 1.0, 10).tolist()
    if args.axis_levels is not None:
        axis_levels = _float_list(args.axis_levels)
    elif args.axis == "curtailment":
        axis_levels = np.linspace(0.0, float(np.max(episode.curtailment.total)), 10).tolist()
    else:
        elec = episode.prices.electricity
        axis_levels = np.linspace(float(np.min(elec)), float(np.max(elec)), 10).tolist()

    tag = f"{Path(checkpoint).stem}_{args.axis}_s{args.seed}"
    bess_path = out_dir / f"map_bess_{tag}.csv"
    awe_path = out_dir / f"map_awe_{tag}.csv"
    argv = (
        ["action-map", checkpoint, data_dir, "--out", str(out_dir)]
        + _config_argv(config_path)
        + ["--axis", args.axis,
           "--soc-levels", ",".join(repr(v) for v in soc_levels),
           "--axis-levels", ",".join(repr(v) for v in axis_levels),
           "--samples", str(args.samples), "--seed", str(args.seed)]
    )
    settings = {
        **dataclasses.asdict(env_cfg),
        "axis": args.axis,
        "soc_levels": soc_levels,
        "axis_levels": axis_levels,
        "samples_per_cell": args.samples,
    }
    manifest = RunManifest(
        command="action-map",
        argv=tuple(argv),
        settings=dict(sorted(settings.items())),
        inputs={checkpoint: _digest(checkpoint),
                **_episode_inputs(data_dir), **_config_inputs(config_path)},
        seed=args.seed,
        version=__version__,
        outputs=(str(bess_path), str(awe_path)),
    )
    write_manifest(manifest, out_dir / "manifest.json")

    grid = action_map(
        policy, episode, env_cfg, soc_levels, args.axis, axis_levels,
        samples_per_cell=args.samples, seed=args.seed,
    )
    _write_text(bess_path, grid_csv(grid, "bess"))
    _write_text(awe_path, grid_csv(grid, "awe"))
    print(f"wrote {bess_path}")
    print(f"wrote {awe_path}")
    return 0


def _cmd_trace(args) -> int:
    checkpoint = _abspath(args.checkpoint)
    data_dir = _abspath(args.data)
    out_dir = Path(_abspath(args.out))
    config_path = _resolve_config_path(args.config)
    env_cfg = _load_env_config(config_path)
    episode = load_episode(data_dir)
    policy, _ = load_checkpoint(checkpoint)

    trace_path = out_dir / "trace.csv"
    argv = (
        ["trace", checkpoint, data_dir, "--out", str(out_dir)]
        + _config_argv(config_path)
        + ["--day", str(args.day)]
    )
    manifest = RunManifest(
        command="trace",
        argv=tuple(argv),
        settings={**dataclasses.asdict(env_cfg), "day": args.day},
        inputs={checkpoint: _digest(checkpoint),
                **_episode_inputs(data_dir), **_config_inputs(config_path)},
        seed=None,
        version=__version__,
        outputs=(str(trace_path),),
    )
    write_manifest(manifest, out_dir / "manifest.json")

    rows = day_trace(policy, episode, env_cfg, args.day)
    _write_text(trace_path, "\n".join([TRACE_HEADER, *rows]) + "\n")
    print(f"wrote {trace_path}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="curtailplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="sum quarter-hour records into an hourly series")
    p.add_argument("raw", help="raw timestamp,wind_mwh,solar_mwh CSV")
    p.add_argument("out", help="hourly CSV to write")
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("train", help="train a dispatch policy")
    p.add_argument("config", help="key=value config referencing a data_dir")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("evaluate", help="Monte Carlo evaluation of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None,
                   help=f"env settings (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--uncertainty", type=float, default=0.0)
    p.add_argument("--scenarios", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=SCENARIO_MODELS, default=SCENARIO_MODELS[0])
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--oracle-profit", type=float, default=None)
    p.add_argument("--forecast-only", action="store_true",
                   help="corrupt only the observed windows, not the true inflow")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("oracle", help="dynamic-programming dispatch baseline")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=101, help="SOC grid levels")
    p.add_argument("--levels", type=int, default=21, help="action levels per axis")
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("export-milp", help="write the deterministic model in LP format")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True, help="LP file to write")
    p.set_defaults(handler=_cmd_export_milp)

    p = sub.add_parser("export-so", help="write the scenario extensive form in LP format")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True, help="LP file to write")
    p.add_argument("--uncertainty", type=float, default=0.1)
    p.add_argument("--scenarios", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", choices=SCENARIO_MODELS, default=SCENARIO_MODELS[0])
    p.set_defaults(handler=_cmd_export_so)

    p = sub.add_parser("action-map", help="mean policy action over a state grid")
    p.add_argument("checkpoint")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None,
                   help=f"env settings (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--axis", choices=("curtailment", "price"), default="curtailment")
    p.add_argument("--soc-levels", default=None, help="comma-separated SOC levels")
    p.add_argument("--axis-levels", default=None, help="comma-separated context levels")
    p.add_argument("--samples", type=int, default=2000, help="samples per cell")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_cmd_action_map)

    p = sub.add_parser("trace", help="hourly dispatch trace for one day")
    p.add_argument("checkpoint")
    p.add_argument("data", help="episode directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None,
                   help=f"env settings (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--day", type=int, default=0)
    p.set_defaults(handler=_cmd_trace)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = _build_parser().parse_args(list(argv))
        return args.handler(args)
    except SystemExit as exc:  # argparse --help / --version
        return 0 if exc.code in (None, 0) else int(exc.code)
    except (ValidationError, BoundsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
