"""Pure numpy implementations of the hot loops.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``FDNFIT_PURE_PYTHON=1``.

Array layout: per-line signals are ``(N, L)`` float64, kernels ``(N, K)``.
Line ``i`` reads ``s_i[n] = sum_{j=1..taps} kernel[i, j] * x_i[n - j]``; tap 0
would read the slot for ``x_i[n]``, which is written only after the read.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_CHUNK = 2048


def fdn_forward(kernels, A, b, c, d, length, taps):
    n_lines = kernels.shape[0]
    krev = np.ascontiguousarray(kernels[:, taps:0:-1])
    # xpad[:, taps + t] holds x[t]
    xpad = np.zeros((n_lines, taps + length))
    s = np.zeros((n_lines, length))
    y = np.zeros(length)
    for n in range(length):
        sn = np.einsum("ij,ij->i", krev, xpad[:, n : n + taps])
        s[:, n] = sn
        xn = A @ sn
        if n == 0:
            xn = xn + b
            y[n] = c @ sn + d
        else:
            y[n] = c @ sn
        xpad[:, taps + n] = xn
    return y, s, np.ascontiguousarray(xpad[:, taps:])


def fdn_backward(kernels, A, c, gy, taps):
    n_lines = kernels.shape[0]
    length = len(gy)
    kf = np.ascontiguousarray(kernels[:, 1 : taps + 1])
    # gspad[:, t] holds gs[t]; zeros beyond the end
    gspad = np.zeros((n_lines, length + taps + 1))
    gx = np.zeros((n_lines, length))
    At = np.ascontiguousarray(A.T)
    for t in range(length - 1, -1, -1):
        gxt = np.einsum("ij,ij->i", kf, gspad[:, t + 1 : t + 1 + taps])
        gx[:, t] = gxt
        gspad[:, t] = c * gy[t] + At @ gxt
    return np.ascontiguousarray(gspad[:, :length]), gx


def fdn_integer(delays, A, b, c, d, length):
    delays = np.asarray(delays, dtype=np.int64)
    n_lines = len(delays)
    pad = int(delays.max()) if n_lines else 0
    xpad = np.zeros((n_lines, pad + length))
    y = np.zeros(length)
    block = max(1, int(delays.min()))
    rows = np.arange(n_lines)[:, None]
    n0 = 0
    while n0 < length:
        B = min(block, length - n0)
        cols = pad + n0 - delays[:, None] + np.arange(B)[None, :]
        s = xpad[rows, cols]
        # delay 0 reads the not-yet-written slot
        s[delays == 0] = 0.0
        x = A @ s
        y[n0 : n0 + B] = c @ s
        if n0 == 0:
            x[:, 0] += b
            y[0] += d
        xpad[:, pad + n0 : pad + n0 + B] = x
        n0 += B
    return y


def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def soft_density(a, sigma, kappa, w):
    nu = len(w) // 2
    length = len(a)
    frames = sliding_window_view(np.pad(a, nu), len(w))
    out = np.empty(length)
    for lo in range(0, length, _CHUNK):
        hi = min(lo + _CHUNK, length)
        z = kappa[lo:hi, None] * (frames[lo:hi] - sigma[lo:hi, None])
        out[lo:hi] = _sig(z) @ w
    return out


def soft_density_vjp(a, sigma, kappa, w, g):
    nu = len(w) // 2
    length = len(a)
    width = len(w)
    frames = sliding_window_view(np.pad(a, nu), width)
    ga_pad = np.zeros(length + 2 * nu)
    gsigma = np.empty(length)
    for lo in range(0, length, _CHUNK):
        hi = min(lo + _CHUNK, length)
        kap = kappa[lo:hi, None]
        G = _sig(kap * (frames[lo:hi] - sigma[lo:hi, None]))
        coef = (g[lo:hi, None] * kap) * (G * (1.0 - G)) * w[None, :]
        gsigma[lo:hi] = -coef.sum(axis=1)
        # scatter each frame row back onto the padded signal
        for j in range(width):
            ga_pad[lo + j : hi + j] += coef[:, j]
    return ga_pad[nu : nu + length], gsigma
