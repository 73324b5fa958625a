"""Energy decay curve, echo density profile and the training loss.

Functions accept either numpy arrays (plain evaluation) or :class:`Var`
objects (recorded on the tape), except :func:`edp`, which is analysis-only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import autodiff as ad
from . import backend
from .errors import ContractError, DegenerateInputError, ShapeError

# fraction of a Gaussian's samples lying more than one std from the mean
ERFC_NORM = math.erfc(1.0 / math.sqrt(2.0))


@dataclass
class LossConfig:
    lam: float = 0.1
    window_ms: float = 20.0
    kappa_start: float = 1e2
    kappa_end: float = 1e5
    sample_rate: int = 16000

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError("lambda must be >= 0")
        if not 0 < self.kappa_start <= self.kappa_end:
            raise ContractError("need 0 < kappa_start <= kappa_end")
        if self.window_ms <= 0:
            raise ContractError("window_ms must be positive")

    def window(self):
        return edp_window(self.sample_rate, self.window_ms)


def edp_window(sample_rate=16000, window_ms=20.0):
    """Unit-sum Hann window of ``window_ms``, length forced odd."""
    n = int(round(window_ms * sample_rate / 1000.0))
    if n % 2 == 0:
        n += 1
    w = np.hanning(n) if n > 2 else np.ones(n)
    return w / w.sum()


def kappa_schedule(length, start=1e2, end=1e5):
    """Sigmoid scale rising linearly from ``start`` (n=0) to ``end`` (n=L-1)."""
    if length < 2:
        return np.full(length, float(start))
    slope = (end - start) / (length - 1)
    return start + slope * np.arange(length)


# ------------------------------------------------------------------- EDC


def edc(h):
    """Schroeder backward integral eps[n] = sum_{t >= n} h[t]^2."""
    if isinstance(h, ad.Var):
        return ad.rcumsum(ad.square(h))
    h = np.asarray(h, dtype=np.float64)
    return np.cumsum((h * h)[::-1])[::-1]


def edc_db(h):
    """EDC in dB, 0 dB at n = 0."""
    e = edc(h)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def edc_loss(h_target, h_pred):
    """Normalised squared error between linear-scale EDCs."""
    target = np.asarray(h_target.value if isinstance(h_target, ad.Var) else h_target,
                        dtype=np.float64)
    pred_len = len(h_pred)
    if len(target) != pred_len or pred_len < 2:
        raise ShapeError("edc_loss needs equal lengths >= 2")
    e = edc(target)
    denom = float(np.sum(e * e))
    if denom == 0.0:
        raise DegenerateInputError("target impulse response is all zeros")
    diff = edc(h_pred) - e
    if isinstance(diff, ad.Var):
        return ad.sum_(ad.square(diff)) * (1.0 / denom)
    return float(np.sum(diff * diff) / denom)


# ------------------------------------------------------------------- EDP


def _check_window(w):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or len(w) % 2 == 0:
        raise ContractError("EDP window must have odd length 2*nu + 1")
    return w


def frame_std(h, w):
    """Local standard deviation sigma_n = sqrt(sum_j w[j] h[n - nu + j]^2)."""
    if isinstance(h, ad.Var):
        return ad.sqrt(ad.window_sum(ad.square(h), w))
    h = np.asarray(h, dtype=np.float64)
    nu = len(w) // 2
    var = np.convolve(h * h, w[::-1], mode="full")[nu : nu + len(h)]
    return np.sqrt(np.maximum(var, ad.SQRT_EPS))


def edp(h, w):
    """Normalised echo density profile (hard threshold, not differentiable)."""
    w = _check_window(w)
    h = np.asarray(h, dtype=np.float64)
    nu = len(w) // 2
    sigma = frame_std(h, w)
    frames = sliding_window_view(np.pad(np.abs(h), nu), len(w))
    out = np.empty(len(h))
    for lo in range(0, len(h), 4096):
        hi = lo + 4096
        out[lo:hi] = (frames[lo:hi] > sigma[lo:hi, None]) @ w
    return out / ERFC_NORM


def soft_density(a, sigma, kappa, w):
    """Tape op: sum_j w[j] * sigmoid(kappa_n * (a[n - nu + j] - sigma_n))."""
    kappa = np.ascontiguousarray(kappa, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    av = np.ascontiguousarray(a.value)
    sv = np.ascontiguousarray(sigma.value)
    out = backend.soft_density(av, sv, kappa, w)

    def vjp(g):
        return backend.soft_density_vjp(av, sv, kappa, w, np.ascontiguousarray(g))

    return a.tape.record(out, (a, sigma), vjp, name="soft_density")


def soft_edp(h, w, kappa):
    """Echo density profile with the indicator replaced by a scaled sigmoid.

    ``kappa`` is a scalar or a per-sample schedule.  Gradients flow through
    both ``|h|`` and the frame standard deviation.
    """
    w = _check_window(w)
    if isinstance(h, ad.Var):
        kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), h.value.shape)
        dens = soft_density(ad.abs_(h), frame_std(h, w), kappa, w)
        return dens * (1.0 / ERFC_NORM)
    h = np.asarray(h, dtype=np.float64)
    tape = ad.Tape()
    return soft_edp(tape.var(h), w, kappa).value


def profile_mse(eta_target, eta_pred):
    """Mean squared difference between two profiles."""
    if isinstance(eta_pred, ad.Var):
        return ad.mean(ad.square(eta_pred - eta_target))
    diff = np.asarray(eta_pred) - np.asarray(eta_target)
    return float(np.mean(diff * diff))


def edp_loss(h_target, h_pred, config=None):
    config = config or LossConfig()
    if len(h_target) != len(h_pred):
        raise ShapeError("edp_loss needs equal lengths")
    w = config.window()
    kappa = kappa_schedule(len(h_target), config.kappa_start, config.kappa_end)
    eta = soft_edp(np.asarray(h_target, dtype=np.float64), w, kappa)
    return profile_mse(eta, soft_edp(h_pred, w, kappa))


# ------------------------------------------------------------- composite


class CompositeLoss:
    """Training loss against a fixed target, with target-side terms cached.

    ``L = L_edc + lam * L_edp`` on the first ``len(target)`` samples.
    """

    def __init__(self, h_target, config=None):
        self.config = config or LossConfig()
        self.target = np.asarray(h_target, dtype=np.float64)
        if len(self.target) < 2:
            raise ShapeError("target must have at least 2 samples")
        self.edc_target = edc(self.target)
        self.edc_norm = float(np.sum(self.edc_target**2))
        if self.edc_norm == 0.0:
            raise DegenerateInputError("target impulse response is all zeros")
        self.window = self.config.window()
        self.kappa = kappa_schedule(len(self.target), self.config.kappa_start,
                                    self.config.kappa_end)
        self.edp_target = soft_edp(self.target, self.window, self.kappa)

    def __len__(self):
        return len(self.target)

    def __call__(self, h_pred):
        """Return (total, edc term, edp term); Vars if ``h_pred`` is a Var."""
        if len(h_pred) != len(self.target):
            raise ShapeError(f"prediction length {len(h_pred)} != target length {len(self.target)}")
        if isinstance(h_pred, ad.Var):
            diff = edc(h_pred) - self.edc_target
            l_edc = ad.sum_(ad.square(diff)) * (1.0 / self.edc_norm)
            l_edp = profile_mse(self.edp_target, soft_edp(h_pred, self.window, self.kappa))
            if self.config.lam == 0.0:
                # keep the edp term for reporting but off the gradient path
                return l_edc, l_edc, l_edp
            return l_edc + l_edp * self.config.lam, l_edc, l_edp
        h_pred = np.asarray(h_pred, dtype=np.float64)
        diff = edc(h_pred) - self.edc_target
        l_edc = float(np.sum(diff * diff) / self.edc_norm)
        l_edp = profile_mse(self.edp_target, soft_edp(h_pred, self.window, self.kappa))
        return l_edc + self.config.lam * l_edp, l_edc, l_edp


def composite_loss(h_target, h_pred, config=None):
    return CompositeLoss(h_target, config)(h_pred)
