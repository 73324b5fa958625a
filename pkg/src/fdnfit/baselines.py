"""Homogeneous reverberation time control (HRTC) baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .fdn import ConstrainedParams, orthogonal_from_proxy
from .metrics import estimate_t60

DELAY_SET_1 = (997, 1153, 1327, 1559, 1801, 2099)


@dataclass
class HrtcConfig:
    delays: tuple = field(default=DELAY_SET_1)
    seed: int = 0

    def __post_init__(self):
        d = np.asarray(self.delays)
        if d.ndim != 1 or len(d) < 1 or np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ContractError("delays must be positive and strictly increasing")
        if np.any(d != np.round(d)):
            raise ContractError("HRTC delays must be integers")


def hrtc_gamma(t60, sample_rate):
    """Gain per sample giving -60 dB after ``t60`` seconds."""
    if t60 <= 0:
        raise ContractError("T60 must be positive")
    return 10.0 ** (-60.0 / (20.0 * sample_rate * t60))


def buffer_size_for(delays):
    """Smallest power of two holding the longest delay."""
    need = int(np.max(delays)) + 1
    return 1 << (need - 1).bit_length()


def hrtc_build(target, config=None):
    """Analytic FDN for an onset-trimmed target :class:`~fdnfit.audio.Rir`.

    Absorption is tied to delay length so every loop decays at the same
    per-sample rate; the direct gain copies the target's first sample.
    """
    config = config or HrtcConfig()
    m = np.asarray(config.delays, dtype=np.float64)
    n = len(m)
    t60 = estimate_t60(target)
    g = hrtc_gamma(t60, target.sample_rate)
    rng = np.random.default_rng(config.seed)
    U = orthogonal_from_proxy(rng.normal(0.0, np.sqrt(1.0 / n), (n, n)))
    return ConstrainedParams(
        b=np.ones(n),
        c=np.full(n, 1.0 / n),
        d=abs(float(target.samples[0])),
        U=U,
        gamma=g**m,
        m=m,
        Q=buffer_size_for(m),
    )
