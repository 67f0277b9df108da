"""Command-line entry point: train / eval / sweep / simulate / render.

Configuration comes from a flat JSON file plus flags, flags winning.
Every run writes into a fresh directory, emits its artifacts atomically
and finishes with a manifest; failures exit nonzero after printing a
one-line machine-readable error JSON.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, replace

from .controller import GainSchedule, load_checkpoint
from .errors import ConfigError, NumericError, RdsteerError, UsageError
from .evaluation import REGIME_PRESETS, ConvergenceSpec, evaluate_regime
from .fieldio import render_raw, write_pgm, write_raw
from .grayscott import SimParams
from .objective import LossWeights
from .rollout import run_rollout
from .runio import RunDir, sha256_file, write_csv, write_json, write_svg_scatter
from .sweep import DEFAULT_AMPLITUDES, amplitude_sweep, sweep_pareto
from .training import LOG_COLUMNS, TrainConfig, train

__all__ = ["main", "parse_config", "RunConfig"]

WORKERS_ENV = "RDSTEER_WORKERS"

SEED_COLUMNS = (
    "regime",
    "seed",
    "strict_t",
    "quasi_t",
    "band_ratio",
    "band_power",
    "l1",
    "l2",
    "stability_tail",
    "error",
)
REGIME_COLUMNS = (
    "regime",
    "n_seeds",
    "strict_rate",
    "quasi_rate",
    "t_strict_median",
    "t_quasi_median",
    "band_ratio_median",
    "band_power_median",
    "l1_mean",
    "l2_mean",
    "stability_tail",
)
POINT_COLUMNS = (
    "amplitude",
    "quasi_rate",
    "t_quasi_median",
    "band_ratio_median",
    "l1_mean",
    "l2_mean",
    "l2_rel",
)


class CliFailure(RdsteerError):
    """Carries a machine-readable error code and process exit code."""

    def __init__(self, code: str, message: str, exit_code: int = 2):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    items = [s for s in str(text).split(",") if s.strip()]
    return [float(s) for s in items]


def _parse_names(text) -> list:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


_COMMON_SCHEMA = {
    "seed": (int, 0),
    "workers": (int, None),
}

_DETECTOR_SCHEMA = {
    "dv_thresh": (float, 1e-5),
    "ma_window": (int, 5),
    "hold_steps": (int, 12),
    "ratio_gate": (float, 0.22),
    "power_gate": (float, 1.2e-4),
    "quasi_ratio_tol": (float, 0.05),
    "quasi_power_tol": (float, 0.08),
    "quasi_dv_factor": (float, 10.0),
}

_SCHEMAS = {
    "train": {
        **_COMMON_SCHEMA,
        "episodes": (int, 300),
        "lr": (float, 2e-3),
        "adam_beta1": (float, 0.9),
        "adam_beta2": (float, 0.999),
        "adam_eps": (float, 1e-8),
        "clip_norm": (float, 1.0),
        "horizon_min": (int, 120),
        "horizon_max": (int, 240),
        "grid": (int, 96),
        "f0": (float, 0.04),
        "k0": (float, 0.06),
        "amplitude": (float, 0.03),
        "warm": (int, 10),
        "hold": (int, 60),
        "decay": (int, 50),
        "w_ratio": (float, 1.0),
        "w_power": (float, 1.0),
        "w_stab": (float, 10.0),
        "w_l1": (float, 0.1),
        "w_sustain": (float, 1.0),
        "ratio_target": (float, 0.22),
        "power_target": (float, 1.2e-4),
        "sustain_frac": (float, 0.25),
        "checkpoint_every": (int, 50),
        "resume": (str, ""),
    },
    "eval": {
        **_COMMON_SCHEMA,
        **_DETECTOR_SCHEMA,
        "checkpoint": (str, ""),
        "regimes": (_parse_names, ["cell_only", "nn_dominant", "hybrid"]),
        "n_seeds": (int, 16),
        "seed_start": (int, 10001),
        "horizon": (int, 240),
        "grid": (int, 96),
    },
    "sweep": {
        **_COMMON_SCHEMA,
        **_DETECTOR_SCHEMA,
        "checkpoint": (str, ""),
        "amplitudes": (_parse_floats, list(DEFAULT_AMPLITUDES)),
        "n_seeds": (int, 16),
        "seed_start": (int, 10001),
        "horizon": (int, 120),
        "grid": (int, 96),
        "cost_axis": (str, "l2"),
        "constrained": (_parse_bool, True),
    },
    "simulate": {
        **_COMMON_SCHEMA,
        "preset": (str, "cell_only"),
        "checkpoint": (str, ""),
        "amplitude": (float, math.nan),
        "steps": (int, 240),
        "snapshot_every": (int, 40),
        "grid": (int, 96),
        "sim_seed": (int, 10001),
        "field": (str, "v"),
    },
    "render": {
        **_COMMON_SCHEMA,
        "input": (str, ""),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved per-subcommand configuration plus the output directory."""

    subcommand: str
    out: str
    values: dict


def parse_config(subcommand: str, config_path: str | None, flag_values: dict) -> dict:
    """Merge schema defaults, JSON config file, and flags (flags win).

    The file must be a flat JSON object; unknown keys are rejected in a
    single error naming all offenders, and coercion failures name the key.
    """
    schema = _SCHEMAS[subcommand]
    values = {key: default for key, (_cast, default) in schema.items()}

    if config_path:
        if not os.path.isfile(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {config_path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        unknown = sorted(set(loaded) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config keys for {subcommand}: {', '.join(unknown)}")
        for key, raw in loaded.items():
            values[key] = _coerce(schema, key, raw)

    for key, raw in flag_values.items():
        if raw is None or key not in schema:
            continue
        values[key] = _coerce(schema, key, raw)

    if values.get("workers") is None:
        values["workers"] = _default_workers()
    _validate(subcommand, values)
    return values


def _coerce(schema, key, raw):
    cast = schema[key][0]
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def _validate(subcommand: str, v: dict) -> None:
    if v.get("workers", 1) < 1:
        raise ConfigError(f"workers: must be >= 1, got {v['workers']}")
    if subcommand == "train" and v["horizon_min"] > v["horizon_max"]:
        raise ConfigError(
            f"horizon_min, horizon_max: horizon_min ({v['horizon_min']}) exceeds "
            f"horizon_max ({v['horizon_max']})"
        )
    if subcommand in ("eval", "sweep"):
        if v["n_seeds"] < 1:
            raise ConfigError(f"n_seeds: must be >= 1, got {v['n_seeds']}")
    if subcommand == "eval":
        bad = sorted(set(v["regimes"]) - set(REGIME_PRESETS))
        if bad:
            raise ConfigError(f"regimes: unknown preset(s) {', '.join(bad)}")
    if subcommand == "sweep" and v["cost_axis"] not in ("l2", "l1"):
        raise ConfigError(f"cost_axis: must be 'l2' or 'l1', got {v['cost_axis']!r}")
    if subcommand == "simulate":
        if v["preset"] not in REGIME_PRESETS:
            raise ConfigError(f"preset: unknown preset {v['preset']!r}")
        if v["steps"] < 1:
            raise ConfigError(f"steps: must be >= 1, got {v['steps']}")
        if v["snapshot_every"] < 1:
            raise ConfigError(f"snapshot_every: must be >= 1, got {v['snapshot_every']}")
        if v["field"] not in ("u", "v"):
            raise ConfigError(f"field: must be 'u' or 'v', got {v['field']!r}")
    if subcommand == "render" and not v["input"]:
        raise ConfigError("input: render needs an input raw dump path")


def _load_params(path: str):
    if not path:
        return None, None
    if not os.path.isfile(path):
        raise CliFailure("checkpoint_not_found", f"checkpoint not found: {path}", exit_code=3)
    params, _meta = load_checkpoint(path)
    return params, sha256_file(path)


def _detector(v: dict) -> ConvergenceSpec:
    # quasi_dv_factor <= 0 disables the quasi delta-V guard entirely
    factor = v["quasi_dv_factor"]
    return ConvergenceSpec(
        dv_thresh=v["dv_thresh"],
        ma_window=v["ma_window"],
        hold_steps=v["hold_steps"],
        ratio_gate=v["ratio_gate"],
        power_gate=v["power_gate"],
        quasi_ratio_tol=v["quasi_ratio_tol"],
        quasi_power_tol=v["quasi_power_tol"],
        quasi_dv_factor=None if factor <= 0 else factor,
    )


def _echo(rc: RunConfig) -> dict:
    # out path deliberately not echoed: runs into different fresh dirs
    # must still produce identical manifests up to wall clock
    return {"subcommand": rc.subcommand, **rc.values}


def cmd_train(rc: RunConfig) -> None:
    v = rc.values
    cfg = TrainConfig(
        episodes=v["episodes"],
        lr=v["lr"],
        adam_beta1=v["adam_beta1"],
        adam_beta2=v["adam_beta2"],
        adam_eps=v["adam_eps"],
        clip_norm=v["clip_norm"],
        horizon_min=v["horizon_min"],
        horizon_max=v["horizon_max"],
        grid=v["grid"],
        f0=v["f0"],
        k0=v["k0"],
        schedule=GainSchedule(
            amplitude=v["amplitude"], warm=v["warm"], hold=v["hold"], decay=v["decay"]
        ),
        loss=LossWeights(
            w_ratio=v["w_ratio"],
            w_power=v["w_power"],
            w_stab=v["w_stab"],
            w_l1=v["w_l1"],
            w_sustain=v["w_sustain"],
            ratio_target=v["ratio_target"],
            power_target=v["power_target"],
            sustain_frac=v["sustain_frac"],
        ),
        seed=v["seed"],
        checkpoint_every=v["checkpoint_every"],
    )
    run_dir = RunDir(rc.out)
    result = train(cfg, out_dir=run_dir.path, resume=v["resume"] or None)
    write_csv(run_dir.file("training_log.csv"), LOG_COLUMNS, result.log_rows)
    ckpt = run_dir.file("checkpoint.json")
    run_dir.finalize("train", _echo(rc), sha256_file(ckpt))
    done = [r for r in result.log_rows if not math.isnan(r["total"])]
    last = done[-1]["total"] if done else math.nan
    print(f"trained {result.episodes_done} episodes, final loss {last:.6g}, wrote {run_dir.path}")


def cmd_eval(rc: RunConfig) -> None:
    v = rc.values
    params, ckpt_sha = _load_params(v["checkpoint"])
    needs = [r for r in v["regimes"] if REGIME_PRESETS[r].schedule.amplitude != 0.0]
    if params is None and needs:
        raise ConfigError(f"checkpoint: regimes {', '.join(needs)} need a trained checkpoint")
    conv = _detector(v)
    seeds = list(range(v["seed_start"], v["seed_start"] + v["n_seeds"]))
    sim = SimParams(height=v["grid"], width=v["grid"])
    run_dir = RunDir(rc.out)
    reports, all_rows = [], []
    for name in v["regimes"]:
        preset = REGIME_PRESETS[name]
        report, rows = evaluate_regime(
            params if preset.schedule.amplitude != 0.0 else None,
            preset,
            seeds,
            horizon=v["horizon"],
            sim=sim,
            conv=conv,
            workers=v["workers"],
        )
        reports.append(report)
        all_rows.extend(rows)
    write_csv(run_dir.file("eval_seeds.csv"), SEED_COLUMNS, all_rows)
    write_csv(run_dir.file("eval_regimes.csv"), REGIME_COLUMNS, [asdict(r) for r in reports])
    write_json(run_dir.file("summary.json"), {"regimes": [asdict(r) for r in reports]})
    run_dir.finalize("eval", _echo(rc), ckpt_sha)
    for r in reports:
        print(
            f"{r.regime}: strict {r.strict_rate:.2f} quasi {r.quasi_rate:.2f} "
            f"l1 {r.l1_mean:.3e} l2 {r.l2_mean:.3e}"
        )
    print(f"wrote {run_dir.path}")


def cmd_sweep(rc: RunConfig) -> None:
    v = rc.values
    params, ckpt_sha = _load_params(v["checkpoint"])
    if params is None and any(a != 0.0 for a in v["amplitudes"]):
        raise ConfigError("checkpoint: nonzero amplitudes need a trained checkpoint")
    conv = _detector(v)
    seeds = list(range(v["seed_start"], v["seed_start"] + v["n_seeds"]))
    sim = SimParams(height=v["grid"], width=v["grid"])
    run_dir = RunDir(rc.out)
    points, rows = amplitude_sweep(
        params,
        amps=v["amplitudes"],
        seeds=seeds,
        horizon=v["horizon"],
        sim=sim,
        conv=conv,
        workers=v["workers"],
    )
    pareto = sweep_pareto(points, cost_axis=v["cost_axis"], constrained=v["constrained"])
    write_csv(run_dir.file("sweep_seeds.csv"), SEED_COLUMNS, rows)
    write_csv(run_dir.file("sweep_points.csv"), POINT_COLUMNS, [asdict(p) for p in points])
    write_json(
        run_dir.file("pareto.json"),
        {
            "cost_axis": pareto.cost_axis,
            "constrained": pareto.constrained,
            "front": [
                {"amplitude": a, "cost": c, "quality": q} for a, c, q in pareto.points
            ],
            "knee": {
                "amplitude": pareto.knee[0],
                "cost": pareto.knee[1],
                "quality": pareto.knee[2],
            },
            "normalization": pareto.normalization,
        },
    )
    scatter = [
        (
            p.l2_mean if v["cost_axis"] == "l2" else p.l1_mean,
            p.band_ratio_median,
            f"A={p.amplitude:g}",
        )
        for p in points
    ]
    write_svg_scatter(
        run_dir.file("pareto.svg"),
        scatter,
        xlabel=f"mean {v['cost_axis']} control cost",
        ylabel="median band ratio",
        front=[(c, q) for _a, c, q in pareto.points],
        knee=(pareto.knee[1], pareto.knee[2]),
        title="amplitude sweep",
    )
    run_dir.finalize("sweep", _echo(rc), ckpt_sha)
    print(
        f"front {[round(a, 4) for a, _c, _q in pareto.points]}, "
        f"knee amplitude {pareto.knee[0]:g}, wrote {run_dir.path}"
    )


def cmd_simulate(rc: RunConfig) -> None:
    v = rc.values
    preset = REGIME_PRESETS[v["preset"]]
    schedule = preset.schedule
    if not math.isnan(v["amplitude"]):
        schedule = replace(schedule, amplitude=v["amplitude"])
    params, ckpt_sha = _load_params(v["checkpoint"])
    if params is None and schedule.amplitude != 0.0:
        raise ConfigError("checkpoint: a nonzero amplitude needs a trained checkpoint")
    sim = SimParams(f0=preset.f0, k0=preset.k0, height=v["grid"], width=v["grid"])
    run_dir = RunDir(rc.out)
    steps, every, fname = v["steps"], v["snapshot_every"], v["field"]

    def snap(state):
        if state.t % every == 0 or state.t == steps:
            field = (state.u if fname == "u" else state.v).data
            write_pgm(
                run_dir.file(f"snap_t{state.t:06d}.pgm"),
                field,
                extra_meta={"field": fname, "step": state.t, "seed": v["sim_seed"]},
            )

    rec = run_rollout(params, sim, schedule, steps, v["sim_seed"], snapshot_cb=snap)
    metric_rows = []
    for t in range(steps):
        metric_rows.append(
            {
                "t": t,
                "band_ratio": rec.band_ratio[t],
                "band_power": rec.band_power[t],
                "deltav": rec.deltav[t],
                "l1": rec.l1_step[t],
                "l2": rec.l2_step[t],
            }
        )
    metric_rows.append(
        {
            "t": steps,
            "band_ratio": float(rec.final_metrics.band_ratio),
            "band_power": float(rec.final_metrics.band_power),
            "deltav": None,
            "l1": None,
            "l2": None,
        }
    )
    write_csv(
        run_dir.file("metrics.csv"),
        ("t", "band_ratio", "band_power", "deltav", "l1", "l2"),
        metric_rows,
    )
    final = (rec.final_state.u if fname == "u" else rec.final_state.v).data
    write_raw(
        run_dir.file(f"field_{fname}_final.raw"),
        final,
        extra_meta={"field": fname, "step": steps, "seed": v["sim_seed"]},
    )
    run_dir.finalize("simulate", _echo(rc), ckpt_sha)
    n_snaps = len([n for n in os.listdir(run_dir.path) if n.endswith(".pgm")])
    print(f"simulated {steps} steps, {n_snaps} snapshots, wrote {run_dir.path}")


def cmd_render(rc: RunConfig) -> None:
    v = rc.values
    run_dir = RunDir(rc.out)
    stem = os.path.splitext(os.path.basename(v["input"]))[0]
    render_raw(v["input"], run_dir.file(stem + ".pgm"))
    run_dir.finalize("render", _echo(rc), None)
    print(f"rendered {v['input']} into {run_dir.path}")


_DISPATCH = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "render": cmd_render,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdsteer",
        description="Reaction-diffusion pattern steering: training, evaluation, sweeps.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="fresh output directory for artifacts")
        p.add_argument("--config", default=None, help="flat JSON config file")
        for key, (cast, _default) in schema.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, type=str, metavar=key.upper())
            del cast
    return parser


def _emit_error(code: str, message: str, out_dir: str | None) -> None:
    payload = {"code": code, "message": message}
    print(json.dumps(payload, sort_keys=True))
    if out_dir and os.path.isdir(out_dir):
        try:
            write_json(os.path.join(out_dir, "error.json"), payload)
        except OSError:
            pass


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir = getattr(args, "out", None)
    try:
        flag_values = {
            k: getattr(args, k) for k in _SCHEMAS[args.subcommand] if hasattr(args, k)
        }
        values = parse_config(args.subcommand, args.config, flag_values)
        rc = RunConfig(subcommand=args.subcommand, out=args.out, values=values)
        _DISPATCH[args.subcommand](rc)
    except CliFailure as exc:
        _emit_error(exc.code, str(exc), out_dir)
        return exc.exit_code
    except (ConfigError, UsageError) as exc:
        _emit_error("config_error", str(exc), out_dir)
        return 2
    except NumericError as exc:
        _emit_error("numeric_error", str(exc), out_dir)
        return 4
    except OSError as exc:
        _emit_error("io_error", str(exc), out_dir)
        return 5
    return 0
