"""Gray-Scott reaction-diffusion substrate.

Two fields U, V evolve under

    dU/dt = Du lap(U) - U V^2 + F_eff (1 - U)
    dV/dt = Dv lap(V) + U V^2 - (F_eff + K_eff) V

on a grid with no-flux boundaries, where F_eff and K_eff are the base
feed/kill rates plus externally supplied modulation fields, clamped to
conservative ranges. The Laplacian is the isotropic 3x3 stencil with
edge-repeat padding, which conserves total mass under pure diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, NumericError
from .rng import make_generator, normals

__all__ = ["STENCIL", "SimParams", "SimState", "laplacian", "gs_step", "init_state"]

# isotropic discrete Laplacian: center -1, edges 0.2, corners 0.05
STENCIL = np.array(
    [
        [0.05, 0.20, 0.05],
        [0.20, -1.00, 0.20],
        [0.05, 0.20, 0.05],
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class SimParams:
    """Physical and numerical constants of the substrate."""

    du: float = 0.16
    dv: float = 0.08
    f0: float = 0.04
    k0: float = 0.06
    dt: float = 1.0
    height: int = 96
    width: int = 96
    clamp_f: tuple = (0.0, 0.12)
    clamp_k: tuple = (0.0, 0.08)

    def __post_init__(self):
        if not self.du > self.dv > 0:
            raise ConfigError(f"need du > dv > 0, got du={self.du}, dv={self.dv}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.height < 2 or self.width < 2:
            raise ConfigError(f"grid must be at least 2x2, got {self.height}x{self.width}")
        for name, (lo, hi), base in (
            ("clamp_f", self.clamp_f, self.f0),
            ("clamp_k", self.clamp_k, self.k0),
        ):
            if not lo < hi:
                raise ConfigError(f"{name} must be a non-empty interval, got [{lo}, {hi}]")
            if not lo <= base <= hi:
                raise ConfigError(f"{name}=[{lo}, {hi}] must contain the base rate {base}")


@dataclass
class SimState:
    """Fields U and V plus the step index t."""

    u: Tensor
    v: Tensor
    t: int = 0


def laplacian(f: Tensor) -> Tensor:
    # diff form: exactly zero on constant fields, exact no-flux at edges
    return ad.stencil3x3(f, STENCIL, diff=True)


def gs_step(state: SimState, params: SimParams, d_f, d_k, react: bool = True) -> SimState:
    """Advance one time step under modulations d_f, d_k (Tensor or 0.0).

    react=False drops the kinetic terms, leaving pure diffusion; it exists
    for conservation checks only.
    """
    u, v = state.u, state.v
    dt = params.dt
    try:
        lap_u = laplacian(u)
        lap_v = laplacian(v)
        if react:
            f_eff = ad.clamp(_offset(params.f0, d_f, u), *params.clamp_f)
            k_sum = ad.clamp(_offset(params.k0, d_k, u), *params.clamp_k) + f_eff
            uvv = u * v * v
            u2 = u + (lap_u * params.du - uvv + f_eff * (1.0 - u)) * dt
            v2 = v + (lap_v * params.dv + uvv - k_sum * v) * dt
        else:
            u2 = u + lap_u * (params.du * dt)
            v2 = v + lap_v * (params.dv * dt)
    except NumericError as exc:
        raise NumericError(f"non-finite update at step {state.t}: {exc}") from exc
    return SimState(u2, v2, state.t + 1)


def _offset(base: float, delta, like: Tensor) -> Tensor:
    if isinstance(delta, Tensor):
        return delta + base
    if delta:
        raise ConfigError("scalar modulation must be 0.0; pass a field for nonzero control")
    return Tensor(np.full(like.data.shape, base, dtype=like.dtype))


def init_state(
    seed: int,
    params: SimParams,
    noise_sigma: float = 0.02,
    patch_half: int = 6,
    dtype=np.float32,
) -> SimState:
    """Seeded initial condition: U=1/V=0 with a central perturbed patch.

    The central (2*patch_half)^2 patch is set to U=0.50, V=0.25, then
    i.i.d. Gaussian noise of scale noise_sigma is added to both fields
    (U stream drawn first) and the result is clipped to [0, 1].
    """
    h, w = params.height, params.width
    if patch_half < 0 or 2 * patch_half > min(h, w):
        raise ConfigError(f"patch_half={patch_half} does not fit a {h}x{w} grid")
    u = np.ones((h, w), dtype=np.float64)
    v = np.zeros((h, w), dtype=np.float64)
    r0, r1 = h // 2 - patch_half, h // 2 + patch_half
    c0, c1 = w // 2 - patch_half, w // 2 + patch_half
    u[r0:r1, c0:c1] = 0.50
    v[r0:r1, c0:c1] = 0.25
    if noise_sigma:
        gen = make_generator(seed)
        u += noise_sigma * normals(gen, h * w).reshape(h, w)
        v += noise_sigma * normals(gen, h * w).reshape(h, w)
    np.clip(u, 0.0, 1.0, out=u)
    np.clip(v, 0.0, 1.0, out=v)
    return SimState(Tensor(u.astype(dtype)), Tensor(v.astype(dtype)), t=0)
