"""Power spectrum of a field and annular band metrics.

band_power is the spectral power inside a radial frequency annulus and
band_ratio its share of the total (DC-free) power; together they measure
whether a texture concentrates energy at the target wavelengths without
being trivially weak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError

__all__ = ["BandSpec", "SpectralMetrics", "annulus_mask", "power_spectrum", "band_metrics"]


@dataclass(frozen=True)
class BandSpec:
    """Radial frequency annulus in cycles/pixel, inclusive on both ends."""

    r_lo: float = 0.05
    r_hi: float = 0.22

    def __post_init__(self):
        if not 0.0 <= self.r_lo < self.r_hi <= 0.5:
            raise ConfigError(f"need 0 <= r_lo < r_hi <= 0.5, got [{self.r_lo}, {self.r_hi}]")


@dataclass
class SpectralMetrics:
    """band_ratio in [0,1]; band_power >= 0. Values are floats or scalar tensors."""

    band_ratio: object
    band_power: object


_MASK_CACHE: dict = {}


def annulus_mask(h: int, w: int, spec: BandSpec) -> np.ndarray:
    """Boolean mask of DFT bins whose radial frequency lies in the annulus."""
    key = (h, w, spec.r_lo, spec.r_hi)
    mask = _MASK_CACHE.get(key)
    if mask is None:
        fi = np.fft.fftfreq(h)[:, None]
        fj = np.fft.fftfreq(w)[None, :]
        r = np.sqrt(fi * fi + fj * fj)
        mask = (r >= spec.r_lo) & (r <= spec.r_hi)
        _MASK_CACHE[key] = mask
    return mask


def power_spectrum(f: Tensor) -> Tensor:
    """DC-free normalized power map; sum equals the field variance."""
    return ad.dft_power2d(f)


def band_metrics(p: Tensor, spec: BandSpec = BandSpec()) -> SpectralMetrics:
    """Band power and band ratio of a power map from power_spectrum.

    With an active tape the results are scalar tensors and stay
    differentiable; band_ratio falls back to plain 0.0 when the total
    power is zero (the 0/0 convention for degenerate fields).
    """
    mask = annulus_mask(p.data.shape[0], p.data.shape[1], spec)
    band = ad.masked_sum(p, mask)
    total = p.sum()
    if float(total) == 0.0:
        return SpectralMetrics(0.0, band)
    return SpectralMetrics(band / total, band)
