"""Kernel backend selection.

The compiled Cython backend is preferred when its extension module is
importable; otherwise the pure-numpy implementation is used. The choice
can be forced with the RDSTEER_KERNEL_BACKEND environment variable
("cython" or "numpy"), read once at import time.
"""

from __future__ import annotations

import os

from ..errors import ConfigError
from . import numpy_backend


def _select():
    choice = os.environ.get("RDSTEER_KERNEL_BACKEND", "").strip().lower()
    if choice == "numpy":
        return numpy_backend
    if choice == "cython":
        from . import cython_backend  # noqa: F401  raises if not built
        return cython_backend
    if choice == "":
        try:
            from . import cython_backend
        except ImportError:
            return numpy_backend
        return cython_backend
    raise ConfigError(f"unknown kernel backend {choice!r}; expected 'cython' or 'numpy'")


_impl = _select()

BACKEND = _impl.NAME
conv3x3 = _impl.conv3x3
conv3x3_grad_input = _impl.conv3x3_grad_input
conv3x3_grad_kernel = _impl.conv3x3_grad_kernel
stencil3x3 = _impl.stencil3x3
stencil3x3_grad_input = _impl.stencil3x3_grad_input

__all__ = [
    "BACKEND",
    "conv3x3",
    "conv3x3_grad_input",
    "conv3x3_grad_kernel",
    "stencil3x3",
    "stencil3x3_grad_input",
]
