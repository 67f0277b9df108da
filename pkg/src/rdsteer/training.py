"""End-to-end training: taped rollouts, global-norm clipping, Adam.

Each episode samples a horizon and an init seed from a stream derived
from (config seed, episode index) alone, so an interrupted run resumed
from a checkpoint replays the identical episode sequence and reproduces
the uninterrupted run bit for bit.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .controller import (
    ControllerParams,
    GainSchedule,
    init_controller,
    load_checkpoint,
    save_checkpoint,
)
from .errors import ConfigError, NumericError
from .grayscott import SimParams
from .objective import LossWeights, loss_terms
from .rng import make_generator
from .rollout import run_rollout
from .spectral import BandSpec

__all__ = ["TrainConfig", "AdamState", "TrainResult", "clip_global_norm", "adam_step", "train"]

_EPISODE_NS = 1000003

LOG_COLUMNS = ("episode", "horizon", "deficit_final", "stab", "l1", "sustain", "total")


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 300
    lr: float = 2e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    horizon_min: int = 120
    horizon_max: int = 240
    grid: int = 96
    f0: float = 0.04
    k0: float = 0.06
    schedule: GainSchedule = field(default_factory=GainSchedule)
    loss: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 50
    max_episode_failures: int = 10

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError(f"episodes must be >= 0, got {self.episodes}")
        if not 0 < self.horizon_min <= self.horizon_max:
            raise ConfigError(
                f"need 0 < horizon_min <= horizon_max, got {self.horizon_min}..{self.horizon_max}"
            )
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0 (0 disables periodic checkpoints)")

    def sim_params(self) -> SimParams:
        return SimParams(f0=self.f0, k0=self.k0, height=self.grid, width=self.grid)


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, params: ControllerParams) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params.parameters()],
            v=[np.zeros_like(p.data) for p in params.parameters()],
        )


@dataclass
class TrainResult:
    params: ControllerParams
    opt: AdamState
    log_rows: list
    episodes_done: int


def clip_global_norm(grads, clip_norm: float):
    """Scale the gradient list so its global L2 norm is at most clip_norm."""
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
    if total > clip_norm and total > 0:
        scale = clip_norm / total
        grads = [g * g.dtype.type(scale) for g in grads]
    return grads, total


def adam_step(params: ControllerParams, grads, opt: AdamState, cfg: TrainConfig):
    """Global-norm clip, then Adam with bias correction, updating in place."""
    tensors = params.parameters()
    if len(grads) != len(tensors):
        raise ConfigError(f"expected {len(tensors)} gradients, got {len(grads)}")
    for g in grads:
        if g is None or not np.isfinite(g).all():
            raise NumericError("non-finite or missing gradient in adam_step")
    grads, _ = clip_global_norm(grads, cfg.clip_norm)
    opt.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bias1 = 1.0 - b1**opt.step
    bias2 = 1.0 - b2**opt.step
    for i, (p, g) in enumerate(zip(tensors, grads)):
        dt = p.data.dtype
        opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g
        opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * (g * g)
        m_hat = opt.m[i] / dt.type(bias1)
        v_hat = opt.v[i] / dt.type(bias2)
        p.data = p.data - dt.type(cfg.lr) * m_hat / (np.sqrt(v_hat) + dt.type(cfg.adam_eps))


def _episode_draw(cfg: TrainConfig, episode: int):
    gen = make_generator([cfg.seed, _EPISODE_NS, episode])
    horizon = int(gen.integers(cfg.horizon_min, cfg.horizon_max + 1))
    init_seed = int(gen.integers(0, 2**31 - 1))
    return horizon, init_seed


def _nan_row(episode: int, horizon: int) -> dict:
    row = {k: math.nan for k in LOG_COLUMNS}
    row["episode"] = episode
    row["horizon"] = horizon
    return row


def train(
    cfg: TrainConfig,
    out_dir: str | None = None,
    resume: str | None = None,
    band: BandSpec = BandSpec(),
    progress=None,
) -> TrainResult:
    """Run the training loop; optionally write checkpoints into out_dir.

    resume points at a checkpoint written by this function; training
    continues after the episode recorded there and matches the
    uninterrupted run bit for bit. Episodes whose rollout or update blows
    up numerically are logged as NaN rows and skipped; more than
    cfg.max_episode_failures consecutive failures abort.
    """
    start_episode = 0
    if resume is not None:
        params, meta = load_checkpoint(resume)
        params.set_requires_grad(True)
        opt = _optimizer_from_meta(params, meta)
        start_episode = int(meta.get("episodes", 0))
        resumed_loss = meta.get("loss")
        if meta.get("seed") != cfg.seed:
            raise ConfigError(
                f"checkpoint was trained with seed {meta.get('seed')}, config says {cfg.seed}"
            )
    else:
        params = init_controller(cfg.seed, requires_grad=True)
        opt = AdamState.for_params(params)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    sim = cfg.sim_params()
    log_rows = []
    consecutive_failures = 0
    last_total = math.nan
    if resume is not None and resumed_loss is not None:
        last_total = float(resumed_loss)

    for episode in range(start_episode, cfg.episodes):
        horizon, init_seed = _episode_draw(cfg, episode)
        try:
            with Tape() as tape:
                rec = run_rollout(
                    params,
                    sim,
                    cfg.schedule,
                    horizon,
                    init_seed,
                    band=band,
                    as_floats=False,
                )
                terms = loss_terms(rec, cfg.loss)
                tape.backward(terms["total"])
            grads = [p.grad for p in params.parameters()]
            adam_step(params, grads, opt, cfg)
        except NumericError:
            consecutive_failures += 1
            log_rows.append(_nan_row(episode, horizon))
            if consecutive_failures > cfg.max_episode_failures:
                raise NumericError(
                    f"{consecutive_failures} consecutive failed episodes, aborting at {episode}"
                )
            continue
        finally:
            for p in params.parameters():
                p.grad = None

        consecutive_failures = 0
        last_total = float(terms["total"])
        log_rows.append(
            {
                "episode": episode,
                "horizon": horizon,
                "deficit_final": float(terms["deficit_final"]),
                "stab": float(terms["stab"]),
                "l1": float(terms["l1"]),
                "sustain": float(terms["sustain"]),
                "total": last_total,
            }
        )
        if progress is not None:
            progress(log_rows[-1])
        if (
            out_dir
            and cfg.checkpoint_every
            and (episode + 1) % cfg.checkpoint_every == 0
            and episode + 1 < cfg.episodes
        ):
            _write_checkpoint(
                os.path.join(out_dir, f"checkpoint_ep{episode + 1:06d}.json"),
                params,
                opt,
                cfg,
                episode + 1,
                last_total,
            )

    if out_dir:
        _write_checkpoint(
            os.path.join(out_dir, "checkpoint.json"), params, opt, cfg, cfg.episodes, last_total
        )
    return TrainResult(params=params, opt=opt, log_rows=log_rows, episodes_done=cfg.episodes)


def _write_checkpoint(path, params, opt, cfg, episodes, last_total):
    meta = {
        "seed": cfg.seed,
        "episodes": episodes,
        "loss": None if math.isnan(last_total) else last_total,
        "optimizer": {
            "step": opt.step,
            "m": [[float(x) for x in m.ravel()] for m in opt.m],
            "v": [[float(x) for x in v.ravel()] for v in opt.v],
        },
    }
    save_checkpoint(path, params, meta)


def _optimizer_from_meta(params: ControllerParams, meta: dict) -> AdamState:
    opt = AdamState.for_params(params)
    blob = meta.get("optimizer")
    if not blob:
        return opt
    opt.step = int(blob["step"])
    for i, p in enumerate(params.parameters()):
        opt.m[i] = np.asarray(blob["m"][i], dtype=np.float64).reshape(p.data.shape).astype(p.data.dtype)
        opt.v[i] = np.asarray(blob["v"][i], dtype=np.float64).reshape(p.data.shape).astype(p.data.dtype)
    return opt
