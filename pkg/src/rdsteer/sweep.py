"""Amplitude sweep over frozen hybrid weights, Pareto front, knee point.

The sweep reruns the hybrid preset at several gain amplitudes with
identical seeds, then projects each amplitude onto a (control cost,
band selectivity) plane. The default front keeps only amplitudes that
actually quasi-converged (rate >= 0.5): convergence is the third
criterion that makes the moderate-amplitude points the interesting
ones. The knee is the front point farthest from the chord between the
front's extremes after min-max normalization of both axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .controller import ControllerParams, GainSchedule
from .errors import ConfigError
from .evaluation import REGIME_PRESETS, ConvergenceSpec, RegimePreset, evaluate_regime
from .grayscott import SimParams
from .spectral import BandSpec

__all__ = [
    "DEFAULT_AMPLITUDES",
    "SweepPoint",
    "ParetoResult",
    "amplitude_sweep",
    "pareto_front",
    "knee",
    "sweep_pareto",
]

DEFAULT_AMPLITUDES = (0.0, 0.015, 0.03, 0.045, 0.08)
REFERENCE_AMPLITUDE = 0.03
CONVERGED_RATE_MIN = 0.5


@dataclass
class SweepPoint:
    """Aggregates for one amplitude; l2_rel is relative to the reference
    amplitude (the one closest to 0.030; exactly 1.0 for the reference)."""

    amplitude: float
    quasi_rate: float
    t_quasi_median: float
    band_ratio_median: float
    l1_mean: float
    l2_mean: float
    l2_rel: float = math.nan


@dataclass
class ParetoResult:
    """Front points as (amplitude, cost, quality) triples plus the knee."""

    points: list
    knee: tuple | None
    cost_axis: str
    constrained: bool
    normalization: dict


def amplitude_sweep(
    params: ControllerParams | None,
    amps=DEFAULT_AMPLITUDES,
    seeds=None,
    horizon: int = 120,
    sim: SimParams | None = None,
    conv: ConvergenceSpec = ConvergenceSpec(),
    band: BandSpec = BandSpec(),
    base: RegimePreset | None = None,
    workers: int = 1,
):
    """Evaluate each amplitude with identical seeds; returns
    (list of SweepPoint, list of per-seed rows)."""
    amps = list(amps)
    if not amps:
        raise ConfigError("amplitude_sweep needs at least one amplitude")
    if seeds is None:
        seeds = list(range(10001, 10017))
    base = base or REGIME_PRESETS["hybrid"]
    points, all_rows = [], []
    for amp in amps:
        preset = RegimePreset(
            name=f"{base.name}_a{amp:g}",
            f0=base.f0,
            k0=base.k0,
            schedule=replace(base.schedule, amplitude=float(amp)),
        )
        report, rows = evaluate_regime(
            params, preset, seeds, horizon, sim=sim, conv=conv, band=band, workers=workers
        )
        points.append(
            SweepPoint(
                amplitude=float(amp),
                quasi_rate=report.quasi_rate,
                t_quasi_median=report.t_quasi_median,
                band_ratio_median=report.band_ratio_median,
                l1_mean=report.l1_mean,
                l2_mean=report.l2_mean,
            )
        )
        all_rows.extend(rows)
    _fill_l2_rel(points)
    return points, all_rows


def _fill_l2_rel(points):
    ref = min(points, key=lambda p: (abs(p.amplitude - REFERENCE_AMPLITUDE), p.amplitude))
    for p in points:
        if p is ref:
            p.l2_rel = 1.0
        elif ref.l2_mean > 0:
            p.l2_rel = p.l2_mean / ref.l2_mean
        else:
            p.l2_rel = 0.0 if p.l2_mean == 0 else math.inf


def pareto_front(points):
    """Nondominated subset of (cost, quality) pairs, sorted by cost.

    p survives iff no q has cost <= p.cost and quality >= p.quality with
    at least one inequality strict; exact duplicates survive together.
    """
    points = list(points)
    if not points:
        raise ConfigError("pareto_front needs at least one point")
    front = []
    for p in points:
        dominated = False
        for q in points:
            if q[0] <= p[0] and q[1] >= p[1] and (q[0] < p[0] or q[1] > p[1]):
                dominated = True
                break
        if not dominated:
            front.append(p)
    return sorted(front, key=lambda p: (p[0], p[1]))


def knee(front):
    """Farthest-from-chord point of a cost-sorted front.

    Both axes are min-max normalized first; fronts of size <= 2 (and
    all-collinear fronts, where every distance is 0) yield the
    lowest-cost point.
    """
    front = list(front)
    if not front:
        raise ConfigError("knee needs a non-empty front")
    if len(front) <= 2:
        return front[0]

    costs = [p[0] for p in front]
    quals = [p[1] for p in front]

    def norm(v, lo, hi):
        return (v - lo) / (hi - lo) if hi > lo else 0.0

    pts = [
        (norm(c, min(costs), max(costs)), norm(q, min(quals), max(quals)))
        for c, q in zip(costs, quals)
    ]
    (x0, y0), (x1, y1) = pts[0], pts[-1]
    chord = math.hypot(x1 - x0, y1 - y0)
    best_i, best_d = 0, -1.0
    for i, (x, y) in enumerate(pts):
        if chord == 0.0:
            d = math.hypot(x - x0, y - y0)
        else:
            d = abs((x1 - x0) * (y0 - y) - (x0 - x) * (y1 - y0)) / chord
        if d > best_d + 1e-15:
            best_i, best_d = i, d
    return front[best_i]


def sweep_pareto(points, cost_axis: str = "l2", constrained: bool = True) -> ParetoResult:
    """Project SweepPoints onto (cost, quality) and extract front + knee.

    cost_axis selects mean l2 power (default) or mean l1 effort;
    constrained restricts the candidate set to quasi-converged
    amplitudes (rate >= 0.5) when any exist.
    """
    if cost_axis not in ("l2", "l1"):
        raise ConfigError(f"cost_axis must be 'l2' or 'l1', got {cost_axis!r}")
    candidates = list(points)
    if constrained:
        converged = [p for p in candidates if p.quasi_rate >= CONVERGED_RATE_MIN]
        candidates = converged or candidates
    tagged = {}
    for p in candidates:
        cost = p.l2_mean if cost_axis == "l2" else p.l1_mean
        tagged[(cost, p.band_ratio_median)] = p.amplitude
    pairs = pareto_front(list(tagged.keys()))
    knee_pair = knee(pairs)
    all_costs = [(p.l2_mean if cost_axis == "l2" else p.l1_mean) for p in candidates]
    all_quals = [p.band_ratio_median for p in candidates]
    return ParetoResult(
        points=[(tagged[pair], pair[0], pair[1]) for pair in pairs],
        knee=(tagged[knee_pair], knee_pair[0], knee_pair[1]),
        cost_axis=cost_axis,
        constrained=constrained,
        normalization={
            "cost_min": min(all_costs),
            "cost_max": max(all_costs),
            "quality_min": min(all_quals),
            "quality_max": max(all_quals),
        },
    )
