"""Mono WAV I/O and impulse-response preparation."""
from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import DegenerateInputError, FormatError, UnsupportedError

log = logging.getLogger(__name__)

CANONICAL_RATE = 16000
ONSET_THRESHOLD = 0.01
KAISER_BETA = 8.6
TAPS_PER_PHASE = 32


@dataclass(frozen=True)
class Rir:
    """A mono impulse response and its sampling rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise UnsupportedError(f"expected mono samples, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise FormatError("samples contain NaN or Inf")
        if int(self.sample_rate) <= 0:
            raise FormatError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def load_wav(path):
    """Read a mono PCM16 or float32 WAV file.

    Integer PCM is scaled by 1/32768.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported bit depth" in msg:
            raise UnsupportedError(f"{path}: {msg}") from exc
        raise FormatError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise FormatError(f"{path}: truncated file") from exc
    except (UnboundLocalError, struct.error, IndexError) as exc:
        # scipy's parser fails this way on files missing their fmt or data chunk
        raise FormatError(f"{path}: malformed WAV header") from exc
    if data.ndim != 1:
        raise UnsupportedError(f"{path}: {data.shape[1]} channels, only mono is supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedError(f"{path}: sample type {data.dtype} is not PCM16 or float32")
    return Rir(samples, rate)


def save_wav(rir, path, encoding="float32"):
    """Write ``rir`` as a mono WAV; returns the number of clipped samples."""
    x = rir.samples
    clipped = 0
    if encoding == "pcm16":
        over = np.abs(x) > 1.0
        clipped = int(over.sum())
        if clipped:
            log.warning("clipped %d samples to [-1, 1]", clipped)
        q = np.round(np.clip(x, -1.0, 1.0) * 32768.0)
        data = np.clip(q, -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = x.astype(np.float32)
    else:
        raise UnsupportedError(f"unknown encoding {encoding!r}")
    wavfile.write(path, rir.sample_rate, data)
    return clipped


def resample(rir, target_rate=CANONICAL_RATE):
    """Polyphase windowed-sinc resampling (Kaiser window, >= 32 taps per phase)."""
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    if target_rate == rir.sample_rate:
        return rir
    ratio = Fraction(int(target_rate), rir.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    half = TAPS_PER_PHASE // 2 * max(up, down)
    taps = signal.firwin(2 * half + 1, 1.0 / max(up, down), window=("kaiser", KAISER_BETA))
    y = signal.resample_poly(rir.samples, up, down, window=taps * up)
    n_out = int(round(len(rir) * target_rate / rir.sample_rate))
    y = y[:n_out] if len(y) >= n_out else np.pad(y, (0, n_out - len(y)))
    return Rir(y, target_rate)


def normalize_unit_norm(rir):
    norm = float(np.linalg.norm(rir.samples))
    if norm == 0.0:
        raise DegenerateInputError("cannot normalise an all-zero signal")
    return Rir(rir.samples / norm, rir.sample_rate)


def trim_to_onset(rir, threshold_fraction=ONSET_THRESHOLD):
    """Drop leading samples below ``threshold_fraction`` of the peak magnitude."""
    if not 0.0 < threshold_fraction < 1.0:
        raise ValueError("threshold_fraction must lie in (0, 1)")
    mag = np.abs(rir.samples)
    peak = mag.max(initial=0.0)
    if peak == 0.0:
        raise DegenerateInputError("cannot find the onset of an all-zero signal")
    start = int(np.argmax(mag >= threshold_fraction * peak))
    return Rir(rir.samples[start:], rir.sample_rate)


def prepare(rir, sample_rate=CANONICAL_RATE, threshold_fraction=ONSET_THRESHOLD):
    """Resample, trim to onset and scale to unit norm."""
    if not np.any(rir.samples):
        raise DegenerateInputError("impulse response is silent")
    out = resample(rir, sample_rate)
    return normalize_unit_norm(trim_to_onset(out, threshold_fraction))


def samples_for(seconds, sample_rate):
    return int(math.ceil(seconds * sample_rate - 1e-9))
