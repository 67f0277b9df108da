"""Convolutional steering policy and its gain schedule.

The policy is three 3x3 conv layers (2 -> 16 -> 16 -> 2 channels) with
tanh after every layer, so raw outputs live strictly inside (-1, 1). The
two output channels are box-smoothed and scaled by a warm-hold-decay
amplitude to produce the dF and dK modulation fields; the peak amplitude
A is therefore a hard pointwise bound on the intervention.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .grayscott import SimState
from .rng import make_generator, normals

__all__ = [
    "LAYER_SHAPES",
    "CHECKPOINT_FORMAT_VERSION",
    "ARCHITECTURE",
    "ControllerParams",
    "GainSchedule",
    "init_controller",
    "policy_forward",
    "smooth3",
    "amplitude_at",
    "control_fields",
    "save_checkpoint",
    "load_checkpoint",
]

LAYER_SHAPES = ((16, 2, 3, 3), (16, 16, 3, 3), (2, 16, 3, 3))
CHECKPOINT_FORMAT_VERSION = 1
ARCHITECTURE = "conv3x3x3-tanh-16ch"

_BOX = np.full((3, 3), 1.0 / 9.0, dtype=np.float64)


@dataclass
class ControllerParams:
    """Kernels and biases of the three conv layers, in forward order."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def set_requires_grad(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag


@dataclass(frozen=True)
class GainSchedule:
    """Piecewise-linear amplitude profile: ramp, plateau, fade, silence."""

    amplitude: float = 0.03
    warm: int = 10
    hold: int = 60
    decay: int = 50

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigError(f"amplitude must be >= 0, got {self.amplitude}")
        if min(self.warm, self.hold, self.decay) < 0:
            raise ConfigError("schedule step counts must be >= 0")


def init_controller(seed: int, dtype=np.float32, requires_grad: bool = False) -> ControllerParams:
    """Seeded Gaussian init, sigma = 1/sqrt(fan_in); biases zero."""
    gen = make_generator([seed, 0x5EED])
    tensors = []
    for shape in LAYER_SHAPES:
        fan_in = shape[1] * shape[2] * shape[3]
        w = normals(gen, int(np.prod(shape))).reshape(shape) / np.sqrt(fan_in)
        tensors.append(Tensor(w.astype(dtype), requires_grad=requires_grad))
        tensors.append(Tensor(np.zeros(shape[0], dtype=dtype), requires_grad=requires_grad))
    return ControllerParams(*tensors)


def policy_forward(p: ControllerParams, u: Tensor, v: Tensor):
    """(U,V) -> (rawF, rawK), both strictly inside (-1, 1)."""
    x = ad.stack_channels([u, v])
    x = ad.tanh(ad.conv2d(x, p.w1, p.b1))
    x = ad.tanh(ad.conv2d(x, p.w2, p.b2))
    x = ad.tanh(ad.conv2d(x, p.w3, p.b3))
    return ad.take_channel(x, 0), ad.take_channel(x, 1)


def smooth3(f: Tensor) -> Tensor:
    """3x3 box mean with edge-repeat padding; preserves the field sum."""
    return ad.stencil3x3(f, _BOX)


def amplitude_at(s: GainSchedule, t: int) -> float:
    """Amplitude at step t: ramp over warm, plateau over hold, linear fade."""
    if t < 0:
        raise ConfigError(f"step index must be >= 0, got {t}")
    if t < s.warm:
        return s.amplitude * t / s.warm
    if t < s.warm + s.hold:
        return s.amplitude
    end = s.warm + s.hold + s.decay
    if t < end:
        return s.amplitude * (end - t) / s.decay
    return 0.0


def control_fields(p: ControllerParams, s: GainSchedule, state: SimState):
    """Modulation fields at the state's step: amplitude * smooth3(raw).

    Zero amplitude short-circuits to exact zero fields, so uncontrolled
    steps carry no policy evaluation and no control cost.
    """
    a = amplitude_at(s, state.t)
    if a == 0.0:
        zero = np.zeros(state.u.data.shape, dtype=state.u.dtype)
        return Tensor(zero), Tensor(zero.copy())
    raw_f, raw_k = policy_forward(p, state.u, state.v)
    return smooth3(raw_f) * a, smooth3(raw_k) * a


def save_checkpoint(path: str, params: ControllerParams, metadata: dict | None = None):
    """Write a JSON checkpoint; weights are stored as decimal floats.

    float32 values survive the decimal round trip bit-exactly.
    """
    weights = {}
    for name, tensor in zip(("w1", "b1", "w2", "b2", "w3", "b3"), params.parameters()):
        weights[name] = [float(x) for x in np.asarray(tensor.data, dtype=np.float64).ravel()]
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "architecture": ARCHITECTURE,
        "layer_shapes": [list(s) for s in LAYER_SHAPES],
        "weights": weights,
        "metadata": metadata or {},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str, dtype=np.float32):
    """Read a checkpoint; returns (ControllerParams, metadata dict)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint format_version {doc.get('format_version')!r}; "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    shapes = [tuple(s) for s in doc.get("layer_shapes", [])]
    if shapes != list(LAYER_SHAPES):
        raise ConfigError(f"checkpoint layer shapes {shapes} do not match {LAYER_SHAPES}")
    tensors = []
    weights = doc["weights"]
    for name, shape in zip(("w1", "b1", "w2", "b2", "w3", "b3"), _tensor_shapes()):
        flat = np.asarray(weights[name], dtype=np.float64)
        if flat.size != int(np.prod(shape)):
            raise ConfigError(f"checkpoint field {name} has {flat.size} values, expected {np.prod(shape)}")
        tensors.append(Tensor(flat.reshape(shape).astype(dtype)))
    return ControllerParams(*tensors), doc.get("metadata", {})


def _tensor_shapes():
    for shape in LAYER_SHAPES:
        yield shape
        yield (shape[0],)
