"""Room-acoustic metrics: reverberation times, C80, D50 and centre time."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInputError, InfiniteClarityError, InsufficientDecayError
from .losses import edc_db

FIELDS = ("t20", "t30", "t60", "c80", "d50", "ts")
TRUNCATION_MARGIN_DB = 10.0
UNITS = {"t20": "s", "t30": "s", "t60": "s", "c80": "dB", "d50": "%", "ts": "ms"}


@dataclass
class AcousticMetrics:
    t20: float | None = None
    t30: float | None = None
    t60: float | None = None
    c80: float | None = None
    d50: float | None = None
    ts: float | None = None

    def to_dict(self):
        return asdict(self)


def _samples(h):
    h = getattr(h, "samples", h)
    return np.asarray(h, dtype=np.float64)


def _energy(h):
    total = float(np.sum(h * h))
    if total == 0.0:
        raise DegenerateInputError("impulse response has zero energy")
    return total


def boundary(ms, sample_rate):
    """L_tau = ceil(tau * fs / 1000)."""
    return int(math.ceil(ms * sample_rate * 1e-3 - 1e-9))


def reverberation_time(curve_db, upper_db, lower_db, sample_rate):
    """Decay time from a least-squares line over the [-upper, -lower] dB span.

    ``curve_db`` must be an EDC in dB normalised to 0 dB at its start.
    """
    curve_db = np.asarray(curve_db, dtype=np.float64)
    _check_decay(curve_db, lower_db)
    idx = np.flatnonzero((curve_db <= -upper_db) & (curve_db >= -lower_db))
    if len(idx) < 2:
        raise InsufficientDecayError(
            f"fewer than two EDC samples between -{upper_db:g} and -{lower_db:g} dB"
        )
    slope, _ = np.polyfit(idx.astype(np.float64), curve_db[idx], 1)
    if slope >= 0:
        raise InsufficientDecayError("EDC is not decaying in the fit window")
    return -60.0 / slope / sample_rate


def _check_decay(curve_db, lower_db):
    below = np.flatnonzero(curve_db <= -lower_db)
    if len(below) == 0:
        raise InsufficientDecayError(f"EDC never reaches -{lower_db:g} dB")
    # A signal that does not decay at all still has a Schroeder curve falling
    # like 10 log10(1 - n/L) near its end; demand TRUNCATION_MARGIN_DB more.
    remaining = (len(curve_db) - below[0]) / len(curve_db)
    if 10.0 * np.log10(remaining) <= -lower_db + TRUNCATION_MARGIN_DB:
        raise InsufficientDecayError(
            f"EDC reaches -{lower_db:g} dB only through truncation at the end of the signal"
        )


def t20(h, sample_rate):
    return reverberation_time(edc_db(_samples(h)), 5, 25, sample_rate)


def t30(h, sample_rate):
    return reverberation_time(edc_db(_samples(h)), 5, 35, sample_rate)


def estimate_t60(h, sample_rate=None):
    """T60 from the -5..-65 dB span, or the T30 extrapolation below a noise floor.

    Accepts an :class:`~fdnfit.audio.Rir` or a sample array plus rate.
    """
    if sample_rate is None:
        sample_rate = h.sample_rate
    x = _samples(h)
    _energy(x)
    curve = edc_db(x)
    try:
        return reverberation_time(curve, 5, 65, sample_rate)
    except InsufficientDecayError:
        return reverberation_time(curve, 5, 35, sample_rate)


def clarity_c80(h, sample_rate):
    x = _samples(h)
    split = boundary(80, sample_rate)
    if len(x) <= split:
        raise InfiniteClarityError("signal ends before 80 ms")
    early = float(np.sum(x[:split] ** 2))
    late = float(np.sum(x[split:] ** 2))
    if late == 0.0:
        raise InfiniteClarityError("no energy after 80 ms")
    if early == 0.0:
        return -math.inf
    return 10.0 * math.log10(early / late)


def definition_d50(h, sample_rate):
    x = _samples(h)
    total = _energy(x)
    return 100.0 * float(np.sum(x[: boundary(50, sample_rate)] ** 2)) / total


def center_time(h, sample_rate):
    x = _samples(h)
    e = x * x
    total = _energy(x)
    return 1e3 * float(np.sum(np.arange(len(x)) * e)) / (sample_rate * total)


def compute_metrics(h, sample_rate=None, strict=True):
    """All six metrics.

    With ``strict=False`` a metric that cannot be evaluated is left as
    ``None`` and the reason is returned in the second element.
    """
    if sample_rate is None:
        sample_rate = h.sample_rate
    x = _samples(h)
    _energy(x)
    fns = {
        "t20": lambda: t20(x, sample_rate),
        "t30": lambda: t30(x, sample_rate),
        "t60": lambda: estimate_t60(x, sample_rate),
        "c80": lambda: clarity_c80(x, sample_rate),
        "d50": lambda: definition_d50(x, sample_rate),
        "ts": lambda: center_time(x, sample_rate),
    }
    values, errors = {}, {}
    for name, fn in fns.items():
        try:
            values[name] = fn()
        except (InsufficientDecayError, InfiniteClarityError) as exc:
            if strict:
                raise
            values[name] = None
            errors[name] = str(exc)
    metrics = AcousticMetrics(**values)
    return metrics if strict else (metrics, errors)


def metric_deltas(target, pred, sample_rate=None, strict=True):
    """Absolute differences of all six metrics."""
    if sample_rate is None:
        sample_rate = target.sample_rate
    if strict:
        a = compute_metrics(target, sample_rate)
        b = compute_metrics(pred, sample_rate)
    else:
        a, _ = compute_metrics(target, sample_rate, strict=False)
        b, _ = compute_metrics(pred, sample_rate, strict=False)
    out = {}
    for name in FIELDS:
        va, vb = getattr(a, name), getattr(b, name)
        out[name] = None if va is None or vb is None else abs(va - vb)
    return AcousticMetrics(**out)


def decays_at_all(h, db=25.0):
    """True when the EDC genuinely falls ``db`` below its start."""
    x = _samples(h)
    if not np.any(x):
        return False
    try:
        _check_decay(edc_db(x), db)
    except InsufficientDecayError:
        return False
    return True
