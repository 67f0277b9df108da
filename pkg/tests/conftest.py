import numpy as np
import pytest

from rdsteer.objective import RolloutRecord
from rdsteer.spectral import SpectralMetrics


def make_record(ratio, power, dv=None, l1=None, l2=None):
    """Build a synthetic RolloutRecord from raw series lists.

    dv defaults to all-None-but-leading; final metrics repeat the last
    series entries.
    """
    t = len(ratio)
    if dv is None:
        dv = [None] + [0.0] * (t - 1)
    l1 = l1 if l1 is not None else [0.0] * t
    l2 = l2 if l2 is not None else [0.0] * t
    return RolloutRecord(
        horizon=t,
        band_ratio=list(ratio),
        band_power=list(power),
        deltav=list(dv),
        l1_step=list(l1),
        l2_step=list(l2),
        final_state=None,
        final_metrics=SpectralMetrics(float(ratio[-1]), float(power[-1])),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
