"""Dense-tensor reverse-mode autodiff over the op set the simulator needs.

A Tensor wraps a numpy array (float32 or float64). Operations executed
while a Tape is active are recorded in execution order; Tape.backward
walks the record in reverse and accumulates gradients on every tensor
with requires_grad set. With no active tape every op is plain forward
evaluation.

Only the operations used by the rollout, controller, and loss exist:
elementwise arithmetic (same shape, or one scalar operand), tanh, relu,
abs, clamp, sum/mean/masked_sum reductions, 3x3 convolution and stencil
with edge-repeat padding, channel stack/select, and the DC-free 2D DFT
power map. Any op producing a non-finite value raises NumericError.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "tanh",
    "relu",
    "clamp",
    "conv2d",
    "stencil3x3",
    "dft_power2d",
    "masked_sum",
    "stack_channels",
    "take_channel",
]

_ACTIVE_TAPE = None


class Tensor:
    """Array value with an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __float__(self) -> float:
        return self.item()

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"

    # arithmetic; reflected variants cover python scalars on the left
    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _sub(self, _as_operand(other, self))

    def __rsub__(self, other):
        return _sub(_as_operand(other, self), self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _div(self, _as_operand(other, self))

    def __rtruediv__(self, other):
        return _div(_as_operand(other, self), self)

    def __neg__(self):
        return _neg(self)

    def tanh(self):
        return tanh(self)

    def abs(self):
        return _abs(self)

    def sum(self):
        return _sum(self)

    def mean(self):
        return _mean(self)


class Tape:
    """Context manager recording ops for one reverse pass.

    Backward clears gradients of recorded outputs first, so leaves keep
    accumulating across repeated backward calls while intermediates do
    not double count.
    """

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise UsageError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss: Tensor):
        if not self._nodes:
            raise UsageError("backward on an empty tape")
        if loss.data.size != 1:
            raise UsageError("backward requires a scalar loss")
        for out, _, _ in self._nodes:
            out.grad = None
        loss.grad = np.ones_like(loss.data)
        for out, parents, backward_fn in reversed(self._nodes):
            g = out.grad
            if g is None:
                continue
            for parent, pg in zip(parents, backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _fit_shape(pg, parent.data.shape)
                if parent.grad is None:
                    parent.grad = pg.copy()
                else:
                    parent.grad = parent.grad + pg


def _fit_shape(g: np.ndarray, shape) -> np.ndarray:
    # reduce a gradient onto a scalar parent; same-shape otherwise
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)


def _as_operand(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _check_shapes(a: Tensor, b: Tensor, op: str):
    if a.data.ndim and b.data.ndim and a.data.shape != b.data.shape:
        raise ConfigError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {op}")
    return arr


def _emit(data: np.ndarray, parents, backward_fn, op: str) -> Tensor:
    out = Tensor(_finite(data, op))
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape._nodes.append((out, parents, backward_fn))
    return out


def _add(a: Tensor, other) -> Tensor:
    b = _as_operand(other, a)
    _check_shapes(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g), "add")


def _sub(a: Tensor, b: Tensor) -> Tensor:
    _check_shapes(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def _mul(a: Tensor, other) -> Tensor:
    b = _as_operand(other, a)
    _check_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def _div(a: Tensor, b: Tensor) -> Tensor:
    _check_shapes(a, b, "div")
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd
    return _emit(out, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)), "div")


def _neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,), "neg")


def _abs(a: Tensor) -> Tensor:
    sgn = np.sign(a.data)
    return _emit(np.abs(a.data), (a,), lambda g: (g * sgn,), "abs")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(a: Tensor) -> Tensor:
    gate = (a.data > 0).astype(a.dtype)
    return _emit(np.maximum(a.data, 0), (a,), lambda g: (g * gate,), "relu")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    if not lo < hi:
        raise ConfigError(f"clamp requires lo < hi, got [{lo}, {hi}]")
    gate = ((a.data > lo) & (a.data < hi)).astype(a.dtype)
    return _emit(np.clip(a.data, lo, hi), (a,), lambda g: (g * gate,), "clamp")


def _sum(a: Tensor) -> Tensor:
    dt = a.dtype
    return _emit(
        np.asarray(a.data.sum(), dtype=dt),
        (a,),
        lambda g: (np.broadcast_to(g.astype(dt), a.data.shape),),
        "sum",
    )


def _mean(a: Tensor) -> Tensor:
    n = a.data.size
    dt = a.dtype
    return _emit(
        np.asarray(a.data.mean(), dtype=dt),
        (a,),
        lambda g: (np.broadcast_to(g.astype(dt) / n, a.data.shape),),
        "mean",
    )


def masked_sum(a: Tensor, mask: np.ndarray) -> Tensor:
    """Sum of a over the True cells of a boolean mask of equal shape."""
    if mask.shape != a.data.shape:
        raise ConfigError(f"masked_sum: mask shape {mask.shape} vs {a.data.shape}")
    m = mask.astype(a.dtype)
    return _emit(np.asarray((a.data * m).sum(), dtype=a.dtype), (a,), lambda g: (g * m,), "masked_sum")


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution with one-pixel edge-repeat padding.

    x: (C,H,W), kernel: (O,C,3,3), bias: (O,) -> (O,H,W).
    """
    xd, wd, bd = x.data, kernel.data, bias.data
    if xd.ndim != 3:
        raise ConfigError(f"conv2d input must be (C,H,W), got shape {xd.shape}")
    if wd.ndim != 4 or wd.shape[2:] != (3, 3) or wd.shape[1] != xd.shape[0]:
        raise ConfigError(f"conv2d kernel must be (O,{xd.shape[0]},3,3), got {wd.shape}")
    if bd.shape != (wd.shape[0],):
        raise ConfigError(f"conv2d bias must be ({wd.shape[0]},), got {bd.shape}")
    if xd.shape[1] < 2 or xd.shape[2] < 2:
        raise ConfigError(f"conv2d needs H,W >= 2, got {xd.shape[1:]}")
    if not (xd.dtype == wd.dtype == bd.dtype):
        raise ConfigError("conv2d operands must share one dtype")
    xd = np.ascontiguousarray(xd)
    wd = np.ascontiguousarray(wd)

    def backward(g):
        g = np.ascontiguousarray(g)
        return (
            _kernels.conv3x3_grad_input(g, wd),
            _kernels.conv3x3_grad_kernel(g, xd),
            g.sum(axis=(1, 2)),
        )

    return _emit(_kernels.conv3x3(xd, wd, bd), (x, kernel, bias), backward, "conv2d")


def stencil3x3(x: Tensor, weights: np.ndarray, diff: bool = False) -> Tensor:
    """Fixed-coefficient 3x3 stencil with edge-repeat padding; (H,W) -> (H,W).

    diff=True applies the stencil to neighbor-minus-center differences,
    making the response to constant fields exactly zero.
    """
    if x.data.ndim != 2:
        raise ConfigError(f"stencil3x3 input must be (H,W), got shape {x.data.shape}")
    if x.data.shape[0] < 2 or x.data.shape[1] < 2:
        raise ConfigError(f"stencil3x3 needs H,W >= 2, got {x.data.shape}")
    w = np.ascontiguousarray(weights, dtype=x.dtype)
    if w.shape != (3, 3):
        raise ConfigError(f"stencil3x3 weights must be 3x3, got {w.shape}")
    xd = np.ascontiguousarray(x.data)

    def backward(g):
        return (_kernels.stencil3x3_grad_input(np.ascontiguousarray(g), w, diff),)

    return _emit(_kernels.stencil3x3(xd, w, diff), (x,), backward, "stencil3x3")


def dft_power2d(x: Tensor) -> Tensor:
    """Normalized DFT power of a mean-subtracted field, DC bin zeroed.

    P[k] = |FFT2(x - mean(x))[k]|^2 / (H*W)^2 and P[0,0] = 0, so the sum
    of P equals the field variance.
    """
    if x.data.ndim != 2:
        raise ConfigError(f"dft_power2d input must be (H,W), got shape {x.data.shape}")
    h, w = x.data.shape
    scale = x.dtype.type(1.0 / (h * w) ** 2)
    fv = np.fft.fft2(x.data - x.data.mean())
    p = (fv.real * fv.real + fv.imag * fv.imag) * scale
    p[0, 0] = 0.0

    def backward(g):
        gf = (2.0 * scale) * (g * np.conj(fv))
        gf[0, 0] = 0.0
        gy = np.fft.fft2(gf).real.astype(x.dtype)
        return (gy - gy.mean(),)

    return _emit(p, (x,), backward, "dft_power2d")


def stack_channels(fields) -> Tensor:
    """Stack equal-shape (H,W) tensors into (C,H,W)."""
    fields = list(fields)
    if not fields:
        raise ConfigError("stack_channels needs at least one field")
    shape = fields[0].data.shape
    for f in fields:
        if f.data.shape != shape or f.data.ndim != 2:
            raise ConfigError("stack_channels requires equal-shape 2D fields")

    def backward(g):
        return tuple(g[i] for i in range(len(fields)))

    return _emit(np.stack([f.data for f in fields]), tuple(fields), backward, "stack_channels")


def take_channel(x: Tensor, index: int) -> Tensor:
    """Select channel index from a (C,H,W) tensor."""
    if x.data.ndim != 3:
        raise ConfigError(f"take_channel input must be (C,H,W), got shape {x.data.shape}")
    if not 0 <= index < x.data.shape[0]:
        raise ConfigError(f"take_channel index {index} out of range for {x.data.shape[0]} channels")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _emit(x.data[index].copy(), (x,), backward, "take_channel")
