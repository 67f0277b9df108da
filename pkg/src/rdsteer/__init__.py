"""rdsteer: steering reaction-diffusion patterns with a learned controller.

A differentiable Gray-Scott simulator on a no-flux grid, a small
convolutional policy that nudges the feed/kill rates under a
warm-hold-decay gain schedule, a from-scratch reverse-mode tape for
training the policy end to end through the rollout, and the evaluation
stack (convergence detectors, regime comparison, amplitude sweep with
Pareto front) behind the `rdsteer` command line.
"""

from .autodiff import Tape, Tensor
from .controller import ControllerParams, GainSchedule, init_controller, load_checkpoint, save_checkpoint
from .errors import ConfigError, NumericError, RdsteerError, UsageError
from .evaluation import REGIME_PRESETS, ConvergenceSpec, RegimePreset, RegimeReport, evaluate_regime
from .grayscott import SimParams, SimState, gs_step, init_state
from .objective import LossWeights, RolloutRecord, loss_terms, total_loss
from .rollout import run_rollout
from .spectral import BandSpec, SpectralMetrics, band_metrics, power_spectrum
from .sweep import ParetoResult, SweepPoint, amplitude_sweep, knee, pareto_front, sweep_pareto
from .training import AdamState, TrainConfig, TrainResult, train

__version__ = "0.1.0"


def kernel_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    from ._kernels import BACKEND

    return BACKEND

__all__ = [
    "Tape",
    "Tensor",
    "ControllerParams",
    "GainSchedule",
    "init_controller",
    "save_checkpoint",
    "load_checkpoint",
    "RdsteerError",
    "ConfigError",
    "NumericError",
    "UsageError",
    "ConvergenceSpec",
    "RegimePreset",
    "RegimeReport",
    "REGIME_PRESETS",
    "evaluate_regime",
    "SimParams",
    "SimState",
    "gs_step",
    "init_state",
    "LossWeights",
    "RolloutRecord",
    "loss_terms",
    "total_loss",
    "run_rollout",
    "BandSpec",
    "SpectralMetrics",
    "band_metrics",
    "power_spectrum",
    "SweepPoint",
    "ParetoResult",
    "amplitude_sweep",
    "pareto_front",
    "knee",
    "sweep_pareto",
    "TrainConfig",
    "TrainResult",
    "AdamState",
    "train",
    "kernel_backend",
    "__version__",
]
