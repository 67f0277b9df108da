"""Frozen-policy evaluation: convergence detectors, regime reports.

Strict convergence: the moving average of deltaV stays below dv_thresh
for hold_steps consecutive steps while both spectral gates hold at every
step of that run; t* is the run's first step. Quasi convergence: both
gates hold at t and the trailing hold_steps window of band_ratio and
band_power is flat within the relative tolerances; by default a relaxed
deltaV bound (quasi_dv_factor * dv_thresh on the moving average) must
hold as well, which suppresses plateau false positives during the slow
mid-rollout power dip. Set quasi_dv_factor=None for plateau-only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .controller import ControllerParams, GainSchedule
from .errors import ConfigError, NumericError
from .grayscott import SimParams
from .objective import RolloutRecord
from .rollout import run_rollout
from .spectral import BandSpec

__all__ = [
    "ConvergenceSpec",
    "RegimePreset",
    "REGIME_PRESETS",
    "RegimeReport",
    "moving_avg_dv",
    "detect_strict",
    "detect_quasi",
    "stability_tail",
    "evaluate_regime",
]


@dataclass(frozen=True)
class ConvergenceSpec:
    """Detector thresholds; defaults are the standard operating point."""

    dv_thresh: float = 1e-5
    ma_window: int = 5
    hold_steps: int = 12
    ratio_gate: float = 0.22
    power_gate: float = 1.2e-4
    quasi_ratio_tol: float = 0.05
    quasi_power_tol: float = 0.08
    quasi_dv_factor: float | None = 10.0

    def __post_init__(self):
        numeric = (
            self.dv_thresh,
            self.ma_window,
            self.hold_steps,
            self.ratio_gate,
            self.power_gate,
            self.quasi_ratio_tol,
            self.quasi_power_tol,
        )
        if any(x <= 0 for x in numeric):
            raise ConfigError("all ConvergenceSpec thresholds must be positive")
        if self.ma_window > self.hold_steps:
            raise ConfigError(f"ma_window {self.ma_window} must not exceed hold_steps {self.hold_steps}")
        if self.quasi_dv_factor is not None and self.quasi_dv_factor <= 0:
            raise ConfigError("quasi_dv_factor must be positive or None")


@dataclass(frozen=True)
class RegimePreset:
    """Base rates plus gain schedule defining one evaluation regime."""

    name: str
    f0: float
    k0: float
    schedule: GainSchedule


# nn_dominant holds peak gain for the whole run: no decay inside any horizon
REGIME_PRESETS = {
    "cell_only": RegimePreset("cell_only", 0.04, 0.06, GainSchedule(amplitude=0.0)),
    "nn_dominant": RegimePreset(
        "nn_dominant", 0.01, 0.01, GainSchedule(amplitude=0.30, warm=10, hold=10**9, decay=0)
    ),
    "hybrid": RegimePreset("hybrid", 0.04, 0.06, GainSchedule(amplitude=0.03)),
}


@dataclass
class RegimeReport:
    """Aggregate outcomes for one regime over a seed list."""

    regime: str
    n_seeds: int
    strict_rate: float
    quasi_rate: float
    t_strict_median: float
    t_quasi_median: float
    band_ratio_median: float
    band_power_median: float
    l1_mean: float
    l2_mean: float
    stability_tail: float


def _series_floats(rec: RolloutRecord):
    ratio = [float(x) for x in rec.band_ratio]
    power = [float(x) for x in rec.band_power]
    dv = [None if x is None else float(x) for x in rec.deltav]
    return ratio, power, dv


def moving_avg_dv(dv, t: int, window: int) -> float:
    """Mean of the defined deltaV entries in (t-window, t]; 0.0 if none."""
    vals = [dv[s] for s in range(max(0, t - window + 1), t + 1) if dv[s] is not None]
    if not vals:
        return 0.0
    return sum(vals) / len(vals)


def _check_detector_pre(rec: RolloutRecord, spec: ConvergenceSpec):
    if rec.horizon < spec.ma_window + spec.hold_steps:
        raise ConfigError(
            f"detector needs horizon >= {spec.ma_window + spec.hold_steps}, got {rec.horizon}"
        )


def detect_strict(rec: RolloutRecord, spec: ConvergenceSpec = ConvergenceSpec()):
    """First step of a hold_steps run with low moving-average deltaV and
    both gates holding throughout; None when no such run exists."""
    _check_detector_pre(rec, spec)
    ratio, power, dv = _series_floats(rec)
    run = 0
    for t in range(rec.horizon):
        ok = (
            moving_avg_dv(dv, t, spec.ma_window) < spec.dv_thresh
            and ratio[t] >= spec.ratio_gate
            and power[t] >= spec.power_gate
        )
        run = run + 1 if ok else 0
        if run >= spec.hold_steps:
            return t - spec.hold_steps + 1
    return None


def _plateau(window, tol: float) -> bool:
    hi, lo = max(window), min(window)
    if hi <= 0:
        return hi == lo
    return (hi - lo) / hi <= tol


def detect_quasi(rec: RolloutRecord, spec: ConvergenceSpec = ConvergenceSpec()):
    """First step whose trailing hold_steps window shows in-gate plateaus."""
    _check_detector_pre(rec, spec)
    ratio, power, dv = _series_floats(rec)
    for t in range(spec.hold_steps - 1, rec.horizon):
        if ratio[t] < spec.ratio_gate or power[t] < spec.power_gate:
            continue
        lo = t - spec.hold_steps + 1
        if not _plateau(ratio[lo : t + 1], spec.quasi_ratio_tol):
            continue
        if not _plateau(power[lo : t + 1], spec.quasi_power_tol):
            continue
        if spec.quasi_dv_factor is not None:
            if moving_avg_dv(dv, t, spec.ma_window) >= spec.quasi_dv_factor * spec.dv_thresh:
                continue
        return t
    return None


def stability_tail(rec: RolloutRecord, window: int = 20) -> float:
    """Mean deltaV over the final `window` steps (defined entries only)."""
    dv = [float(x) for x in rec.deltav if x is not None]
    if not dv:
        return 0.0
    tail = dv[-window:]
    return sum(tail) / len(tail)


def _eval_seed(params, preset, sim, schedule, horizon, seed, conv, band):
    try:
        rec = run_rollout(params, sim, schedule, horizon, seed, band=band)
    except NumericError:
        return {
            "regime": preset.name,
            "seed": seed,
            "strict_t": None,
            "quasi_t": None,
            "band_ratio": math.nan,
            "band_power": math.nan,
            "l1": math.nan,
            "l2": math.nan,
            "stability_tail": math.nan,
            "error": "numeric",
        }
    return {
        "regime": preset.name,
        "seed": seed,
        "strict_t": detect_strict(rec, conv),
        "quasi_t": detect_quasi(rec, conv),
        "band_ratio": float(rec.final_metrics.band_ratio),
        "band_power": float(rec.final_metrics.band_power),
        "l1": sum(rec.l1_step) / len(rec.l1_step),
        "l2": sum(rec.l2_step) / len(rec.l2_step),
        "stability_tail": stability_tail(rec),
        "error": "",
    }


def evaluate_regime(
    params: ControllerParams | None,
    preset: RegimePreset,
    seeds,
    horizon: int = 240,
    sim: SimParams | None = None,
    conv: ConvergenceSpec = ConvergenceSpec(),
    band: BandSpec = BandSpec(),
    workers: int = 1,
):
    """Run every seed under the frozen policy; aggregate a RegimeReport.

    Per-seed rows come back alongside the report in seed order. A rollout
    that blows up numerically is flagged in its row and counted as
    non-converged. Median convergence times substitute the horizon as the
    sentinel for seeds that never converged.
    """
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("evaluate_regime needs at least one seed")
    if horizon < 120:
        raise ConfigError(f"evaluation horizon must be >= 120, got {horizon}")
    if params is None and preset.schedule.amplitude != 0.0:
        raise ConfigError(f"regime {preset.name} requires a trained controller")
    base = sim or SimParams()
    sim_eff = replace(base, f0=preset.f0, k0=preset.k0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(
                    lambda s: _eval_seed(params, preset, sim_eff, preset.schedule, horizon, s, conv, band),
                    seeds,
                )
            )
    else:
        rows = [
            _eval_seed(params, preset, sim_eff, preset.schedule, horizon, s, conv, band)
            for s in seeds
        ]

    n = len(rows)
    ok_rows = [r for r in rows if not r["error"]]
    strict_hits = [r["strict_t"] for r in rows if r["strict_t"] is not None]
    quasi_hits = [r["quasi_t"] for r in rows if r["quasi_t"] is not None]

    def _median(values):
        return float(np.median(values)) if values else math.nan

    report = RegimeReport(
        regime=preset.name,
        n_seeds=n,
        strict_rate=len(strict_hits) / n,
        quasi_rate=len(quasi_hits) / n,
        t_strict_median=_median([r["strict_t"] if r["strict_t"] is not None else horizon for r in rows]),
        t_quasi_median=_median([r["quasi_t"] if r["quasi_t"] is not None else horizon for r in rows]),
        band_ratio_median=_median([r["band_ratio"] for r in ok_rows]),
        band_power_median=_median([r["band_power"] for r in ok_rows]),
        l1_mean=float(np.mean([r["l1"] for r in ok_rows])) if ok_rows else math.nan,
        l2_mean=float(np.mean([r["l2"] for r in ok_rows])) if ok_rows else math.nan,
        stability_tail=float(np.mean([r["stability_tail"] for r in ok_rows])) if ok_rows else math.nan,
    )
    return report, rows
