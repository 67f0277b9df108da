"""Composite rollout loss: spectral targets, gated stability, control cost.

A RolloutRecord stores per-step series indexed by state: entry t
describes the state reached after t simulation steps, so entry 0 is the
initial state (its deltaV has no predecessor and is None) and the state
after the final step lives in final_state with its spectral metrics
alongside. Series entries are plain floats during evaluation and scalar
tensors during training; every loss formula below works on either.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .spectral import SpectralMetrics

__all__ = ["LossWeights", "RolloutRecord", "spectral_deficit", "gate_step", "loss_terms", "total_loss"]


@dataclass(frozen=True)
class LossWeights:
    """Weights and targets of the composite loss."""

    w_ratio: float = 1.0
    w_power: float = 1.0
    w_stab: float = 10.0
    w_l1: float = 0.1
    w_sustain: float = 1.0
    ratio_target: float = 0.22
    power_target: float = 1.2e-4
    sustain_frac: float = 0.25

    def __post_init__(self):
        for name in ("w_ratio", "w_power", "w_stab", "w_l1", "w_sustain"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 < self.sustain_frac <= 1.0:
            raise ConfigError(f"sustain_frac must be in (0, 1], got {self.sustain_frac}")
        if self.ratio_target <= 0 or self.power_target <= 0:
            raise ConfigError("spectral targets must be positive")


@dataclass
class RolloutRecord:
    """Per-step series over states 0..T-1 plus the final state after step T."""

    horizon: int
    band_ratio: list = field(default_factory=list)
    band_power: list = field(default_factory=list)
    deltav: list = field(default_factory=list)
    l1_step: list = field(default_factory=list)
    l2_step: list = field(default_factory=list)
    final_state: object = None
    final_metrics: SpectralMetrics | None = None

    def check(self):
        t = self.horizon
        series = (self.band_ratio, self.band_power, self.deltav, self.l1_step, self.l2_step)
        if any(len(s) != t for s in series):
            raise ConfigError(f"rollout series lengths must equal horizon {t}")
        if t > 0 and self.deltav[0] is not None:
            raise ConfigError("deltav[0] has no predecessor and must be None")


def _hinge(x):
    if isinstance(x, Tensor):
        return ad.relu(x)
    return max(0.0, x)


def _mean(entries):
    total = entries[0]
    for e in entries[1:]:
        total = total + e
    return total / len(entries)


def spectral_deficit(m: SpectralMetrics, w: LossWeights):
    """Hinge shortfall against both targets; zero iff both are met."""
    ratio_term = _hinge(1.0 - m.band_ratio / w.ratio_target) * w.w_ratio
    power_term = _hinge(1.0 - m.band_power / w.power_target) * w.w_power
    return ratio_term + power_term


def gate_step(rec: RolloutRecord, w: LossWeights) -> int:
    """First step with both targets met (horizon if never); no gradient."""
    for t in range(rec.horizon):
        if float(rec.band_ratio[t]) >= w.ratio_target and float(rec.band_power[t]) >= w.power_target:
            return t
    return rec.horizon


def loss_terms(rec: RolloutRecord, w: LossWeights) -> dict:
    """All loss components plus their sum, keyed for the training log."""
    if rec.horizon < 4:
        raise ConfigError(f"total_loss requires horizon >= 4, got {rec.horizon}")
    rec.check()
    if rec.final_metrics is None:
        raise ConfigError("rollout record is missing final-state spectral metrics")
    t_gate = gate_step(rec, w)

    deficit_final = spectral_deficit(rec.final_metrics, w)
    stab_window = [rec.deltav[t] for t in range(t_gate + 1, rec.horizon)]
    stab = _mean([dv * dv for dv in stab_window]) * w.w_stab if stab_window else 0.0
    l1 = _mean(rec.l1_step) * w.w_l1
    tail = [t for t in range(rec.horizon) if t >= (1.0 - w.sustain_frac) * rec.horizon]
    sustain = 0.0
    if tail:
        sustain = _mean(
            [
                spectral_deficit(SpectralMetrics(rec.band_ratio[t], rec.band_power[t]), w)
                for t in tail
            ]
        ) * w.w_sustain

    total = deficit_final + stab + l1 + sustain
    return {
        "deficit_final": deficit_final,
        "stab": stab,
        "l1": l1,
        "sustain": sustain,
        "total": total,
        "gate": t_gate,
    }


def total_loss(rec: RolloutRecord, w: LossWeights):
    return loss_terms(rec, w)["total"]
