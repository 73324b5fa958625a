"""Differentiable SISO feedback delay network.

The network is

    y[n] = c . s[n] + d u[n]
    x[n] = A s[n] + b u[n]          (input to the delay lines)
    s_i[n] = x_i delayed by m_i     (fractional, via an FIR kernel)

with ``A = U diag(gamma)``, ``U`` orthogonal.  Parameters are learned through
unconstrained proxies and mapped with :func:`constrain_vars`.

Delay line ``i`` keeps a ``Q``-sample buffer.  Its fractional delay kernel is
the inverse ``K = 2Q`` point DFT of a conjugate-symmetric linear-phase
response; applied to the zero-padded buffer it reproduces the frequency-domain
delay exactly.  Lines are read before they are written, so tap 0 of a kernel
always multiplies an empty slot and ``s[n]`` never depends on ``x[n]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import backend
from .errors import ContractError, ShapeError

DEFAULT_N = 6
DEFAULT_Q = 1024


@dataclass
class UnconstrainedParams:
    """Free optimisation variables (proxies)."""

    b: np.ndarray
    c: np.ndarray
    d: float
    W: np.ndarray
    gamma: np.ndarray
    m: np.ndarray

    FIELDS = ("b", "c", "d", "W", "gamma", "m")

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.d = float(self.d)
        self.W = np.asarray(self.W, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        n = len(self.b)
        if n < 1:
            raise ShapeError("need at least one delay line")
        for name in ("c", "gamma", "m"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} must have shape ({n},)")
        if self.W.shape != (n, n):
            raise ShapeError(f"W must have shape ({n}, {n})")

    @property
    def n_lines(self):
        return len(self.b)

    def arrays(self):
        return {name: np.asarray(getattr(self, name), dtype=np.float64) for name in self.FIELDS}

    def copy(self):
        return UnconstrainedParams(**{k: np.array(v) for k, v in self.arrays().items()})

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())

    def to_dict(self):
        out = {k: v.tolist() for k, v in self.arrays().items()}
        out["d"] = float(self.d)
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data[k] for k in cls.FIELDS})


@dataclass
class ConstrainedParams:
    """Physical FDN parameters."""

    b: np.ndarray
    c: np.ndarray
    d: float
    U: np.ndarray
    gamma: np.ndarray  # diagonal of the absorption matrix
    m: np.ndarray  # delays in (fractional) samples
    Q: int = DEFAULT_Q
    A: np.ndarray = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.d = float(self.d)
        self.U = np.asarray(self.U, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.m = np.asarray(self.m, dtype=np.float64)
        self.Q = int(self.Q)
        if self.A is None:
            self.A = self.U * self.gamma[None, :]
        self.A = np.asarray(self.A, dtype=np.float64)

    @property
    def n_lines(self):
        return len(self.b)

    def integer_delays(self):
        return bool(np.all(self.m == np.round(self.m)))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# ----------------------------------------------------------- constraint maps


def strict_upper(n):
    return np.triu(np.ones((n, n)), k=1)


def constrain_vars(leaves, Q=DEFAULT_Q):
    """Map proxy Vars to constrained Vars on the same tape.

    ``leaves`` is a dict with keys b, c, d, W, gamma, m.  Returns a dict with
    keys b, c, d, U, gamma, A, m.
    """
    n = leaves["b"].value.shape[0]
    for name, var in leaves.items():
        if not np.all(np.isfinite(var.value)):
            raise ContractError(f"non-finite proxy {name!r}")
    w_tr = leaves["W"] * strict_upper(n)
    U = ad.matrix_exp(w_tr - ad.transpose(w_tr))
    gamma = ad.sigmoid(leaves["gamma"])
    return {
        "b": ad.abs_(leaves["b"]),
        "c": ad.abs_(leaves["c"]),
        "d": ad.abs_(leaves["d"]),
        "U": U,
        "gamma": gamma,
        "A": U * ad.reshape(gamma, (1, n)),
        "m": ad.min_with_constant(ad.abs_(leaves["m"]), float(Q - 1)),
    }


def leaves_on(tape, p):
    return {name: tape.var(val, name=name) for name, val in p.arrays().items()}


def constrain(p, Q=DEFAULT_Q):
    """Numeric version of :func:`constrain_vars`."""
    if not p.is_finite():
        raise ContractError("unconstrained parameters must be finite")
    out = constrain_vars(leaves_on(ad.Tape(), p), Q)
    return ConstrainedParams(
        b=out["b"].value, c=out["c"].value, d=float(out["d"].value),
        U=out["U"].value, gamma=out["gamma"].value, m=out["m"].value,
        Q=Q, A=out["A"].value,
    )


def orthogonal_from_proxy(W):
    """U = exp(W_tr - W_tr^T) for a numeric matrix."""
    W = np.asarray(W, dtype=np.float64)
    tape = ad.Tape()
    w_tr = tape.var(W) * strict_upper(len(W))
    return ad.matrix_exp(w_tr - ad.transpose(w_tr)).value


# ------------------------------------------------------ fractional delays


def delay_response(m, K):
    """Conjugate-symmetric linear-phase response as a (re, im) Var pair.

    ``m`` is a Var of shape ``(...,)``; the result has shape ``(..., K)``.
    """
    half = K // 2
    bins = np.arange(half) * (2.0 * np.pi / K)
    mv = ad.reshape(m, m.value.shape + (1,))
    phase = mv * bins
    re_low = ad.cos(phase)
    im_low = -ad.sin(phase)
    nyq = ad.cos(mv * np.pi)
    mirror = np.arange(half - 1, 0, -1)
    re = ad.concat([re_low, nyq, ad.take(re_low, (Ellipsis, mirror))], axis=-1)
    im = ad.concat([im_low, nyq * 0.0, -ad.take(im_low, (Ellipsis, mirror))], axis=-1)
    return re, im


def delay_kernel(m, K):
    """FIR kernel of length ``K`` delaying by ``m`` fractional samples.

    Accepts a Var (returns a Var on the same tape) or numbers (returns an
    array).  Batched over any leading shape of ``m``.
    """
    if K < 2 or K % 2:
        raise ContractError(f"kernel length must be even, got {K}")
    if not isinstance(m, ad.Var):
        tape = ad.Tape()
        return delay_kernel(tape.var(m), K).value
    mv = m.value
    if np.any(mv < 0) or np.any(mv > K // 2 - 1):
        raise ContractError(f"delay must lie in [0, {K // 2 - 1}], got {mv}")
    re, im = delay_response(m, K)
    return ad.idft(re, im)


def delayed_read(kernel, history):
    """sum_j kernel[j] * history[j] where history[j] = x[n - j]."""
    if isinstance(kernel, ad.Var) or isinstance(history, ad.Var):
        return ad.dot(kernel, history)
    return float(np.dot(kernel, history))


def delayed_read_fft(m, buffer, K):
    """Frequency-domain delay of a buffer, read at the current time.

    ``buffer`` holds the last ``len(buffer) <= K/2`` samples, oldest first.
    The buffer is zero-padded to ``K``, transformed, multiplied by the delay
    response and transformed back; entry ``len(buffer)`` of the circular
    result is the sample that a read-before-write delay line returns now.
    """
    buffer = np.asarray(buffer, dtype=np.float64)
    q = len(buffer)
    tape = ad.Tape()
    re, im = delay_response(tape.var(np.asarray(m, dtype=np.float64)), K)
    spec = np.fft.fft(np.pad(buffer, (0, K - q))) * (re.value + 1j * im.value)
    return float(np.fft.ifft(spec).real[q])


class DelayLineBank:
    """Ring buffers of capacity ``Q`` with per-line FIR delay kernels.

    Streaming, tape-free inference path: call :meth:`read` then
    :meth:`write` once per sample.
    """

    def __init__(self, delays, Q=DEFAULT_Q):
        self.Q = int(Q)
        self.K = 2 * self.Q
        self.kernels = np.atleast_2d(delay_kernel(np.asarray(delays, dtype=np.float64), self.K))
        self.n_lines = self.kernels.shape[0]
        self.buffers = np.zeros((self.n_lines, self.Q))
        self.cursor = 0  # slot the next write goes to
        # taps 1..Q against history x[n-1], ..., x[n-Q]
        self._taps = self.kernels[:, 1 : self.Q + 1]

    def history(self):
        """Buffered samples, most recent first: column j-1 holds x[n-j]."""
        order = (self.cursor - 1 - np.arange(self.Q)) % self.Q
        return self.buffers[:, order]

    def read(self):
        return np.einsum("ij,ij->i", self._taps, self.history())

    def write(self, v):
        self.buffers[:, self.cursor] = v
        self.cursor = (self.cursor + 1) % self.Q


# ------------------------------------------------------------ rendering


def fdn_recursion(kernels, A, b, c, d, length, taps):
    """Tape op running the FDN on a unit impulse for ``length`` samples.

    Forward and adjoint recursions run in the compiled backend when present.
    """
    kv = np.ascontiguousarray(kernels.value)
    Av = np.ascontiguousarray(A.value)
    bv = np.ascontiguousarray(b.value)
    cv = np.ascontiguousarray(c.value)
    y, s, x = backend.fdn_forward(kv, Av, bv, cv, float(d.value), int(length), int(taps))
    nfft = 1 << int(np.ceil(np.log2(max(2, length + taps + 1))))

    def vjp(gy):
        gy = np.ascontiguousarray(gy, dtype=np.float64)
        gs, gx = backend.fdn_backward(kv, Av, cv, gy, int(taps))
        # gk[i, j] = sum_n gs_i[n] x_i[n - j]
        corr = np.fft.irfft(np.fft.rfft(gs, nfft) * np.conj(np.fft.rfft(x, nfft)), nfft)
        gk = np.zeros_like(kv)
        top = min(taps, nfft - 1)
        gk[:, 1 : top + 1] = corr[:, 1 : top + 1]
        return (gk, gx @ s.T, gx[:, 0].copy(), s @ gy, np.asarray(gy[0]))

    out = kernels.tape.record(y, (kernels, A, b, c, d), vjp, name="fdn")
    return out


def render_vars(leaves, length, Q=DEFAULT_Q):
    """Differentiable render; returns (impulse response Var, constrained Vars)."""
    if length < 1:
        raise ContractError("render length must be >= 1")
    cons = constrain_vars(leaves, Q)
    kernels = delay_kernel(cons["m"], 2 * Q)
    h = fdn_recursion(kernels, cons["A"], cons["b"], cons["c"], cons["d"], length, Q)
    return h, cons


def render_ir(p, length, Q=DEFAULT_Q):
    """Numeric impulse response of the FDN described by proxies ``p``."""
    h, _ = render_vars(leaves_on(ad.Tape(), p), length, Q)
    return h.value


def render_constrained(cp, length):
    """Tape-free render from physical parameters.

    Integer delays use plain ring buffers (exact, any length); fractional
    delays use the same kernels as training.
    """
    A = np.ascontiguousarray(cp.A)
    b = np.ascontiguousarray(cp.b)
    c = np.ascontiguousarray(cp.c)
    if cp.integer_delays():
        return backend.fdn_integer(np.round(cp.m).astype(np.int64), A, b, c, cp.d, int(length))
    kernels = np.ascontiguousarray(np.atleast_2d(delay_kernel(cp.m, 2 * cp.Q)))
    y, _, _ = backend.fdn_forward(kernels, A, b, c, cp.d, int(length), cp.Q)
    return y


def process(cp, u):
    """Run an arbitrary input signal through the network (streaming path)."""
    u = np.asarray(u, dtype=np.float64)
    bank = DelayLineBank(cp.m, cp.Q)
    y = np.empty(len(u))
    for n, un in enumerate(u):
        s = bank.read()
        y[n] = cp.c @ s + cp.d * un
        bank.write(cp.A @ s + cp.b * un)
    return y


def flops_per_sample(n):
    """Multiply-adds per output sample of an integer-delay FDN."""
    return 2 * n * n + 3 * n + 1


# ----------------------------------------------------------- initialisation


def init_params(seed=0, N=DEFAULT_N, psi=1024.0, alpha=1.1, beta=6.0):
    """Random proxies: Gaussian gains/matrix/absorption, Beta-distributed delays."""
    if psi <= 0 or alpha < 1 or beta <= alpha:
        raise ContractError("need psi > 0, alpha >= 1, beta > alpha")
    rng = np.random.default_rng(seed)
    std = np.sqrt(1.0 / N)
    return UnconstrainedParams(
        b=rng.normal(0.0, std, N),
        c=np.full(N, 1.0 / N),
        d=1.0,
        W=rng.normal(0.0, std, (N, N)),
        gamma=rng.normal(0.0, std, N),
        m=psi * rng.beta(alpha, beta, N),
    )
