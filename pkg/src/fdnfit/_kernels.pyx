# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def fdn_forward(const double[:, ::1] kernels, const double[:, ::1] A, const double[::1] b,
                const double[::1] c, double d, Py_ssize_t length, Py_ssize_t taps):
    cdef Py_ssize_t N = kernels.shape[0]
    cdef Py_ssize_t n, i, j, base
    cdef double acc, yn
    y_arr = np.zeros(length)
    s_arr = np.zeros((N, length))
    xpad_arr = np.zeros((N, taps + length))
    cdef double[::1] y = y_arr
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] xpad = xpad_arr
    cdef double[::1] sn = np.zeros(N)
    for n in range(length):
        yn = 0.0
        for i in range(N):
            acc = 0.0
            base = taps + n
            for j in range(1, taps + 1):
                acc += kernels[i, j] * xpad[i, base - j]
            sn[i] = acc
            s[i, n] = acc
            yn += c[i] * acc
        if n == 0:
            yn += d
        y[n] = yn
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += A[i, j] * sn[j]
            if n == 0:
                acc += b[i]
            xpad[i, taps + n] = acc
    return y_arr, s_arr, np.ascontiguousarray(xpad_arr[:, taps:])


def fdn_backward(const double[:, ::1] kernels, const double[:, ::1] A, const double[::1] c,
                 const double[::1] gy, Py_ssize_t taps):
    cdef Py_ssize_t N = kernels.shape[0]
    cdef Py_ssize_t length = gy.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double acc
    gspad_arr = np.zeros((N, length + taps + 1))
    gx_arr = np.zeros((N, length))
    cdef double[:, ::1] gspad = gspad_arr
    cdef double[:, ::1] gx = gx_arr
    for t in range(length - 1, -1, -1):
        for i in range(N):
            acc = 0.0
            for j in range(1, taps + 1):
                acc += kernels[i, j] * gspad[i, t + j]
            gx[i, t] = acc
        for i in range(N):
            acc = c[i] * gy[t]
            for j in range(N):
                acc += A[j, i] * gx[j, t]
            gspad[i, t] = acc
    return np.ascontiguousarray(gspad_arr[:, :length]), gx_arr


def fdn_integer(delays, const double[:, ::1] A, const double[::1] b, const double[::1] c,
                double d, Py_ssize_t length):
    cdef long[::1] m = np.ascontiguousarray(delays, dtype=np.int64).astype(np.int_)
    cdef Py_ssize_t N = m.shape[0]
    cdef Py_ssize_t pad = 0
    cdef Py_ssize_t n, i, j
    cdef double acc, yn
    for i in range(N):
        if m[i] > pad:
            pad = m[i]
    y_arr = np.zeros(length)
    xpad_arr = np.zeros((N, pad + length))
    cdef double[::1] y = y_arr
    cdef double[:, ::1] xpad = xpad_arr
    cdef double[::1] sn = np.zeros(N)
    for n in range(length):
        yn = 0.0
        for i in range(N):
            if m[i] == 0:
                sn[i] = 0.0
            else:
                sn[i] = xpad[i, pad + n - m[i]]
            yn += c[i] * sn[i]
        if n == 0:
            yn += d
        y[n] = yn
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += A[i, j] * sn[j]
            if n == 0:
                acc += b[i]
            xpad[i, pad + n] = acc
    return y_arr


cdef inline double _sig(double z) nogil:
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


def soft_density(const double[::1] a, const double[::1] sigma, const double[::1] kappa, const double[::1] w):
    cdef Py_ssize_t length = a.shape[0]
    cdef Py_ssize_t width = w.shape[0]
    cdef Py_ssize_t nu = width // 2
    cdef Py_ssize_t n, j, t
    cdef double acc, av
    out_arr = np.empty(length)
    cdef double[::1] out = out_arr
    for n in range(length):
        acc = 0.0
        for j in range(width):
            t = n - nu + j
            av = a[t] if 0 <= t < length else 0.0
            acc += w[j] * _sig(kappa[n] * (av - sigma[n]))
        out[n] = acc
    return out_arr


def soft_density_vjp(const double[::1] a, const double[::1] sigma, const double[::1] kappa,
                     const double[::1] w, const double[::1] g):
    cdef Py_ssize_t length = a.shape[0]
    cdef Py_ssize_t width = w.shape[0]
    cdef Py_ssize_t nu = width // 2
    cdef Py_ssize_t n, j, t
    cdef double av, G, coef, total
    ga_arr = np.zeros(length)
    gs_arr = np.empty(length)
    cdef double[::1] ga = ga_arr
    cdef double[::1] gs = gs_arr
    for n in range(length):
        total = 0.0
        for j in range(width):
            t = n - nu + j
            av = a[t] if 0 <= t < length else 0.0
            G = _sig(kappa[n] * (av - sigma[n]))
            coef = g[n] * kappa[n] * G * (1.0 - G) * w[j]
            total += coef
            if 0 <= t < length:
                ga[t] += coef
        gs[n] = -total
    return ga_arr, gs_arr
