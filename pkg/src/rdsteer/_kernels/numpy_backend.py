"""Pure-numpy 3x3 convolution and stencil kernels with edge-repeat padding.

These are the hot inner kernels of the simulator: a multi-channel 3x3
convolution (forward plus the three backward passes) and a single-channel
3x3 stencil. Boundary handling is a one-pixel edge-repeat pad, which is
the ghost-cell construction for no-flux boundaries: the pad gradient is
folded back onto the border cells in the backward passes.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _pad1(x: np.ndarray) -> np.ndarray:
    # pad the trailing two axes by one pixel, repeating the edge row/column
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    return np.pad(x, pad, mode="symmetric")


def _fold_pad1(gp: np.ndarray) -> np.ndarray:
    """Adjoint of _pad1: accumulate pad-border gradient onto the edge cells."""
    g = gp[..., 1:-1, 1:-1].copy()
    g[..., 0, :] += gp[..., 0, 1:-1]
    g[..., -1, :] += gp[..., -1, 1:-1]
    g[..., :, 0] += gp[..., 1:-1, 0]
    g[..., :, -1] += gp[..., 1:-1, -1]
    g[..., 0, 0] += gp[..., 0, 0]
    g[..., 0, -1] += gp[..., 0, -1]
    g[..., -1, 0] += gp[..., -1, 0]
    g[..., -1, -1] += gp[..., -1, -1]
    return g


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (C,H,W), w: (O,C,3,3), b: (O,) -> (O,H,W)."""
    _, h, wd = x.shape
    xp = _pad1(x)
    out = np.empty((w.shape[0], h, wd), dtype=x.dtype)
    out[:] = b[:, None, None]
    for di in range(3):
        for dj in range(3):
            out += np.tensordot(w[:, :, di, dj], xp[:, di:di + h, dj:dj + wd], axes=(1, 0))
    return out


def conv3x3_grad_input(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """g: (O,H,W), w: (O,C,3,3) -> (C,H,W)."""
    _, h, wd = g.shape
    gp = np.zeros((w.shape[1], h + 2, wd + 2), dtype=g.dtype)
    for di in range(3):
        for dj in range(3):
            gp[:, di:di + h, dj:dj + wd] += np.tensordot(w[:, :, di, dj], g, axes=(0, 0))
    return _fold_pad1(gp)


def conv3x3_grad_kernel(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    """g: (O,H,W), x: (C,H,W) -> (O,C,3,3)."""
    _, h, wd = g.shape
    xp = _pad1(x)
    gw = np.empty((g.shape[0], x.shape[0], 3, 3), dtype=g.dtype)
    for di in range(3):
        for dj in range(3):
            gw[:, :, di, dj] = np.tensordot(g, xp[:, di:di + h, dj:dj + wd], axes=([1, 2], [1, 2]))
    return gw


def stencil3x3(x: np.ndarray, w: np.ndarray, diff: bool = False) -> np.ndarray:
    """x: (H,W), w: (3,3) -> (H,W).

    diff=True evaluates sum(w * (neighbor - center)) instead of the plain
    correlation: a constant field then maps to exactly zero, which plain
    accumulation of the Laplacian weights does not guarantee in floats.
    """
    h, wd = x.shape
    xp = _pad1(x)
    out = np.zeros((h, wd), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            shifted = xp[di:di + h, dj:dj + wd]
            out += w[di, dj] * (shifted - x) if diff else w[di, dj] * shifted
    return out


def stencil3x3_grad_input(g: np.ndarray, w: np.ndarray, diff: bool = False) -> np.ndarray:
    """g: (H,W), w: (3,3) -> (H,W)."""
    h, wd = g.shape
    gp = np.zeros((h + 2, wd + 2), dtype=g.dtype)
    for di in range(3):
        for dj in range(3):
            gp[di:di + h, dj:dj + wd] += w[di, dj] * g
    gx = _fold_pad1(gp)
    if diff:
        gx -= w.sum(dtype=g.dtype) * g
    return gx
