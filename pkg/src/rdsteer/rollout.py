"""Rollout driver: advance the substrate under a (possibly zero) policy
while recording the per-step series the loss and the detectors consume.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .controller import ControllerParams, GainSchedule, amplitude_at, control_fields
from .errors import ConfigError
from .grayscott import SimParams, SimState, gs_step, init_state
from .objective import RolloutRecord
from .spectral import BandSpec, band_metrics, power_spectrum

__all__ = ["run_rollout"]


def _record_state(rec: RolloutRecord, state: SimState, prev_v, band: BandSpec, as_floats: bool):
    metrics = band_metrics(power_spectrum(state.v), band)
    if prev_v is None:
        dv = None
    elif as_floats:
        dv = float(np.abs(state.v.data - prev_v.data).mean())
    else:
        dv = (state.v - prev_v).abs().mean()
    if as_floats:
        rec.band_ratio.append(float(metrics.band_ratio))
        rec.band_power.append(float(metrics.band_power))
    else:
        rec.band_ratio.append(metrics.band_ratio)
        rec.band_power.append(metrics.band_power)
    rec.deltav.append(dv)


def run_rollout(
    params: ControllerParams | None,
    sim: SimParams,
    schedule: GainSchedule,
    horizon: int,
    seed: int,
    band: BandSpec = BandSpec(),
    noise_sigma: float = 0.02,
    patch_half: int = 6,
    dtype=np.float32,
    as_floats: bool = True,
    snapshot_cb=None,
) -> RolloutRecord:
    """Roll the simulator forward `horizon` steps from a seeded init.

    Series entry t describes the state after t steps together with the
    control applied at that state; the post-final-step state and its
    spectral metrics land in final_state/final_metrics. With
    as_floats=False all recorded quantities stay tensors so a
    surrounding Tape sees the whole graph. snapshot_cb, when given, is
    called with every state including the initial and final ones.
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if params is None and schedule.amplitude != 0.0:
        raise ConfigError("a controller is required when the schedule amplitude is nonzero")

    state = init_state(seed, sim, noise_sigma=noise_sigma, patch_half=patch_half, dtype=dtype)
    rec = RolloutRecord(horizon=horizon)
    if snapshot_cb is not None:
        snapshot_cb(state)

    prev_v = None
    for t in range(horizon):
        _record_state(rec, state, prev_v, band, as_floats)
        if params is not None and amplitude_at(schedule, t) > 0.0:
            d_f, d_k = control_fields(params, schedule, state)
            l1 = d_f.abs().mean() + d_k.abs().mean()
            l2 = (d_f * d_f).mean() + (d_k * d_k).mean()
            rec.l1_step.append(float(l1) if as_floats else l1)
            rec.l2_step.append(float(l2) if as_floats else l2)
        else:
            d_f, d_k = 0.0, 0.0
            rec.l1_step.append(0.0)
            rec.l2_step.append(0.0)
        prev_v = state.v
        state = gs_step(state, sim, d_f, d_k)
        if snapshot_cb is not None:
            snapshot_cb(state)

    rec.final_state = state
    metrics = band_metrics(power_spectrum(state.v), band)
    if as_floats:
        metrics.band_ratio = float(metrics.band_ratio)
        metrics.band_power = float(metrics.band_power)
    rec.final_metrics = metrics
    rec.check()
    return rec
