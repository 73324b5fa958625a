"""Adam and the end-to-end fitting loop."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DivergenceError, ShapeError
from .fdn import (DEFAULT_N, DEFAULT_Q, UnconstrainedParams, constrain, init_params,
                  leaves_on, render_constrained, render_vars)
from .losses import CompositeLoss, LossConfig
from .metrics import compute_metrics, estimate_t60, metric_deltas

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "loss_total", "loss_edc", "loss_edp", "ms")


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    max_iterations: int = 1000
    lam: float = 0.1
    seed: int = 0
    N: int = DEFAULT_N
    Q: int = DEFAULT_Q
    window_ms: float = 20.0
    kappa_start: float = 1e2
    kappa_end: float = 1e5
    t60: float | None = None  # override the estimate from the target

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be >= 1")
        if self.N < 1 or self.Q < 2 or self.Q & (self.Q - 1):
            raise ContractError("need N >= 1 and Q a power of two")

    def loss_config(self, sample_rate):
        return LossConfig(lam=self.lam, window_ms=self.window_ms,
                          kappa_start=self.kappa_start, kappa_end=self.kappa_end,
                          sample_rate=sample_rate)


# ------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state, config):
    """One bias-corrected Adam update.  ``params`` and ``grads`` are dicts of arrays."""
    state.step += 1
    t = state.step
    lr, b1, b2 = config.learning_rate, config.beta1, config.beta2
    out = {}
    for name, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
        if config.weight_decay:
            g = g + config.weight_decay * p
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return out, state


# -------------------------------------------------------------- reporting


@dataclass
class IterationRecord:
    iteration: int
    loss_total: float
    loss_edc: float
    loss_edp: float
    ms: float
    forward_ms: float = 0.0
    loss_ms: float = 0.0
    backward_ms: float = 0.0


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    best_iteration: int = -1
    best_loss: float = math.inf
    t60: float = 0.0
    length: int = 0
    sample_rate: int = 0
    target_metrics: dict | None = None
    fitted_metrics: dict | None = None
    metric_deltas: dict | None = None

    @property
    def losses(self):
        return np.array([r.loss_total for r in self.records])

    def best_record(self):
        return self.records[self.best_iteration]

    def timing_fractions(self):
        fw = sum(r.forward_ms for r in self.records)
        lo = sum(r.loss_ms for r in self.records)
        bw = sum(r.backward_ms for r in self.records)
        total = fw + lo + bw or 1.0
        return {"forward": fw / total, "loss": lo / total, "backward_update": bw / total}

    def to_dict(self):
        out = asdict(self)
        out.pop("records")
        out["iterations"] = len(self.records)
        out["initial_loss"] = self.records[0].loss_total if self.records else None
        out["best_edc_loss"] = self.best_record().loss_edc if self.records else None
        out["best_edp_loss"] = self.best_record().loss_edp if self.records else None
        out["timing_fractions"] = self.timing_fractions()
        out["mean_iteration_ms"] = float(np.mean([r.ms for r in self.records])) if self.records else None
        return out

    def write_log(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for r in self.records:
                writer.writerow([r.iteration, repr(r.loss_total), repr(r.loss_edc),
                                 repr(r.loss_edp), f"{r.ms:.3f}"])


# -------------------------------------------------------------------- fit


def fit_length(target, config):
    """Number of samples the loss looks at: ceil(T60 * fs), capped by the target."""
    t60 = config.t60 if config.t60 is not None else estimate_t60(target)
    length = int(math.ceil(t60 * target.sample_rate - 1e-9))
    return t60, max(2, min(length, len(target)))


def evaluate(params, loss, Q):
    """Forward + loss + gradients for one parameter set."""
    tape = ad.Tape()
    leaves = leaves_on(tape, params)
    h, _ = render_vars(leaves, len(loss), Q)
    total, l_edc, l_edp = loss(h)
    tape.backward(total)
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    return (float(total.value), float(l_edc.value), float(l_edp.value)), grads, h.value


def fit(target, config=None, init=None, on_iteration=None, compute_report_metrics=True):
    """Learn every FDN parameter for ``target`` (an onset-trimmed, unit-norm Rir).

    Returns ``(best_params, report)`` where ``best_params`` are the proxies
    with the lowest composite loss seen.
    """
    config = config or TrainConfig()
    t60, length = fit_length(target, config)
    loss = CompositeLoss(target.samples[:length], config.loss_config(target.sample_rate))
    params = init.copy() if init is not None else init_params(config.seed, config.N)
    report = TrainReport(t60=t60, length=length, sample_rate=target.sample_rate)
    state = AdamState()
    best = params.copy()
    log.info("fitting %d samples (T60 %.3f s), N=%d, Q=%d", length, t60, config.N, config.Q)

    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        tape = ad.Tape()
        leaves = leaves_on(tape, params)
        h, _ = render_vars(leaves, length, config.Q)
        t1 = time.perf_counter()
        total, l_edc, l_edp = loss(h)
        t2 = time.perf_counter()
        value = float(total.value)
        if not math.isfinite(value):
            raise DivergenceError(it, value)
        tape.backward(total)
        grads = {name: leaf.grad for name, leaf in leaves.items()}
        new, state = adam_step(params.arrays(), grads, state, config)
        t3 = time.perf_counter()

        rec = IterationRecord(it, value, float(l_edc.value), float(l_edp.value),
                              (t3 - t0) * 1e3, (t1 - t0) * 1e3, (t2 - t1) * 1e3,
                              (t3 - t2) * 1e3)
        report.records.append(rec)
        if value < report.best_loss:
            report.best_loss = value
            report.best_iteration = it
            best = params.copy()
        if on_iteration is not None:
            on_iteration(rec)
        params = UnconstrainedParams(**new)

    log.info("best loss %.4g at iteration %d", report.best_loss, report.best_iteration)
    if compute_report_metrics:
        attach_metrics(report, target, best, config.Q)
    return best, report


def attach_metrics(report, target, params, Q):
    h = render_constrained(constrain(params, Q), len(target))
    tm, _ = compute_metrics(target, strict=False)
    fm, _ = compute_metrics(h, target.sample_rate, strict=False)
    report.target_metrics = tm.to_dict()
    report.fitted_metrics = fm.to_dict()
    report.metric_deltas = metric_deltas(target.samples, h, target.sample_rate,
                                         strict=False).to_dict()
