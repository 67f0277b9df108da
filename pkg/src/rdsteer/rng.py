"""Seeded random streams.

All stochastic entry points draw from a PCG64 generator and convert
uniforms to normals with an explicit Box-Muller transform, so the byte
stream behind every random field is pinned by this module alone.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_generator", "normals"]


def make_generator(seed) -> np.random.Generator:
    """Build the package-wide generator for a seed or seed sequence."""
    return np.random.Generator(np.random.PCG64(seed))


def normals(gen: np.random.Generator, n: int) -> np.ndarray:
    """Draw n standard normals via Box-Muller on PCG64 uniforms.

    Uses 1 - U so the log argument stays in (0, 1]; returns float64.
    """
    if n <= 0:
        return np.zeros(0, dtype=np.float64)
    m = (n + 1) // 2
    u1 = 1.0 - gen.random(m)
    u2 = gen.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
    return z[:n]
