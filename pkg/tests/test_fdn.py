from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdnfit import autodiff as ad, backend, fdn
from fdnfit.errors import ContractError, ShapeError
from fdnfit.fdn import ConstrainedParams, UnconstrainedParams
from fdnfit.losses import CompositeLoss, LossConfig


def proxies(N=3, b=1.0, c=1.0, d=1.0, W=0.0, gamma=0.0, m=5.0):
    full = lambda v: np.full(N, float(v))
    return UnconstrainedParams(b=full(b), c=full(c), d=d, W=np.full((N, N), float(W)),
                               gamma=full(gamma), m=full(m))


def ring_buffer_fdn(cp, length):
    """Independent integer-delay reference built on deques."""
    delays = [int(k) for k in np.round(cp.m)]
    lines = [deque([0.0] * max(k, 1), maxlen=max(k, 1)) for k in delays]
    y = np.zeros(length)
    for n in range(length):
        u = 1.0 if n == 0 else 0.0
        s = np.array([line[0] if k > 0 else 0.0 for line, k in zip(lines, delays)])
        y[n] = cp.c @ s + cp.d * u
        v = cp.A @ s + cp.b * u
        for line, k, vi in zip(lines, delays, v):
            if k > 0:
                line.append(vi)
    return y


def periodic_sinc_kernel(m, K):
    """Closed form of the kernel: DC, paired cosines, Nyquist."""
    n = np.arange(K)
    x = 2 * np.pi * (n - m) / K
    M = K // 2 - 1
    with np.errstate(invalid="ignore", divide="ignore"):
        pair = np.sin(M * x / 2) * np.cos((M + 1) * x / 2) / np.sin(x / 2)
    pair = np.where(np.isclose(np.sin(x / 2), 0), M, pair)
    return (1 + 2 * pair + np.cos(m * np.pi) * np.cos(np.pi * n)) / K


def random_cp(rng, N, Q, integer=True):
    p = fdn.init_params(int(rng.integers(1 << 30)), N)
    cp = fdn.constrain(p, Q)
    m = rng.integers(1, Q, N).astype(float) if integer else rng.uniform(0, Q - 1, N)
    return cp.replace(m=m)


# ------------------------------------------------------------- constrain


def test_constrain_identity_case():
    cp = fdn.constrain(proxies())
    np.testing.assert_allclose(cp.U, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(cp.gamma, 0.5)
    np.testing.assert_allclose(cp.b, 1.0)
    np.testing.assert_allclose(cp.c, 1.0)
    assert cp.d == 1.0
    np.testing.assert_allclose(cp.A, 0.5 * np.eye(3), atol=1e-15)


def test_constrain_delay_abs_and_clip():
    p = proxies(N=2)
    p.m = np.array([-5.0, 4096.0])
    np.testing.assert_allclose(fdn.constrain(p, 1024).m, [5.0, 1023.0])


def test_constrain_ignores_lower_triangle(rng):
    p = fdn.init_params(1)
    q = p.copy()
    q.W = q.W + np.tril(rng.normal(size=q.W.shape))
    np.testing.assert_array_equal(fdn.constrain(p).U, fdn.constrain(q).U)


def test_constrain_rejects_non_finite():
    p = proxies()
    p.gamma[1] = np.nan
    with pytest.raises(ContractError):
        fdn.constrain(p)


def test_param_shape_validation():
    with pytest.raises(ShapeError):
        UnconstrainedParams(b=np.ones(3), c=np.ones(2), d=1.0, W=np.zeros((3, 3)),
                            gamma=np.zeros(3), m=np.ones(3))
    with pytest.raises(ShapeError):
        UnconstrainedParams(b=np.ones(3), c=np.ones(3), d=1.0, W=np.zeros((2, 2)),
                            gamma=np.zeros(3), m=np.ones(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_constrained_invariants(seed, N):
    rng = np.random.default_rng(seed)
    p = UnconstrainedParams(b=rng.normal(size=N) * 3, c=rng.normal(size=N) * 3,
                            d=rng.normal() * 3, W=rng.normal(size=(N, N)) * 3,
                            gamma=rng.normal(size=N) * 5, m=rng.normal(size=N) * 2000)
    cp = fdn.constrain(p, 1024)
    assert np.all(cp.b >= 0) and np.all(cp.c >= 0) and cp.d >= 0
    assert np.abs(cp.U.T @ cp.U - np.eye(N)).max() <= 1e-6
    assert np.all((cp.gamma > 0) & (cp.gamma < 1))
    assert np.all((cp.m >= 0) & (cp.m <= 1023))


def test_orthogonality_100_matrices(rng):
    for _ in range(100):
        U = fdn.orthogonal_from_proxy(rng.normal(0, np.sqrt(1 / 6), (6, 6)))
        assert np.abs(U.T @ U - np.eye(6)).max() <= 1e-6


# ----------------------------------------------------------- delay kernel


def test_kernel_zero_delay():
    np.testing.assert_allclose(fdn.delay_kernel(0.0, 8), np.eye(8)[0], atol=1e-12)


@pytest.mark.parametrize("m", range(32))
def test_kernel_integer_is_one_hot(m):
    np.testing.assert_allclose(fdn.delay_kernel(float(m), 64), np.eye(64)[m], atol=1e-9)


def test_kernel_half_sample_matches_naive_idft():
    K, m = 8, 0.5
    k = np.arange(K)
    D = np.exp(-1j * m * 2 * np.pi * k / K)
    D[0] = 1
    D[K // 2] = np.cos(m * np.pi)
    D[K // 2 + 1:] = np.conj(D[1:K // 2][::-1])
    naive = np.array([np.sum(D * np.exp(2j * np.pi * k * n / K)) / K for n in range(K)])
    assert np.abs(naive.imag).max() < 1e-12
    got = fdn.delay_kernel(m, K)
    np.testing.assert_allclose(got, naive.real, atol=1e-12)
    assert got.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 63), st.sampled_from([128, 256]))
def test_kernel_matches_closed_form(m, K):
    _, residue = ad.idft(*fdn.delay_response(ad.Tape().var(np.array(m)), K), return_residue=True)
    assert residue <= 1e-9
    np.testing.assert_allclose(fdn.delay_kernel(m, K), periodic_sinc_kernel(m, K), atol=1e-9)


def test_kernel_batched(rng):
    m = rng.uniform(0, 31, 4)
    batched = fdn.delay_kernel(m, 64)
    for row, mi in zip(batched, m):
        np.testing.assert_allclose(row, fdn.delay_kernel(mi, 64), atol=1e-14)


@pytest.mark.parametrize("m,K", [(-0.1, 8), (4.0, 8), (1.0, 7)])
def test_kernel_preconditions(m, K):
    with pytest.raises(ContractError):
        fdn.delay_kernel(m, K)


# ----------------------------------------------------------- delayed read


def test_delayed_read_integer_and_identity(rng):
    history = np.zeros(16)
    history[5] = 1.0
    assert fdn.delayed_read(np.eye(16)[5], history) == 1.0
    h = rng.normal(size=16)
    assert fdn.delayed_read(fdn.delay_kernel(0.0, 16), h) == pytest.approx(h[0])


def test_delayed_read_half_sample():
    K = 64
    history = np.zeros(K)
    history[2] = 1.0
    expected = periodic_sinc_kernel(2.5, K)[2]
    assert fdn.delayed_read(fdn.delay_kernel(2.5, K), history) == pytest.approx(expected, abs=1e-12)
    # offset 0.5 from the peak of a periodic sinc with zero Nyquist weight
    assert expected == pytest.approx(np.sin(np.pi * 0.5 * (K - 2) / K) / (K * np.sin(np.pi * 0.5 / K))
                                     * 1.0, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 31))
def test_delayed_read_matches_frequency_domain(seed, m):
    Q, K = 32, 64
    buf = np.random.default_rng(seed).normal(size=Q)  # oldest first
    taps = fdn.delay_kernel(m, K)[1:Q + 1]
    direct = float(np.dot(taps, buf[::-1]))
    assert direct == pytest.approx(fdn.delayed_read_fft(m, buf, K), abs=1e-9)


# ---------------------------------------------------------------- render


def test_render_direct_gain_only():
    h = fdn.render_ir(proxies(b=0.0, d=0.7), 50, Q=16)
    np.testing.assert_allclose(h, np.r_[0.7, np.zeros(49)], atol=1e-15)


def test_render_first_sample_is_direct_gain(rng):
    p = fdn.init_params(5)
    p.d = -0.3
    assert fdn.render_ir(p, 10, Q=64)[0] == 0.3


def test_render_comb():
    cp = ConstrainedParams(b=[1.0], c=[1.0], d=0.0, U=[[1.0]], gamma=[0.5], m=[3.0], Q=16)
    expected = np.zeros(13)
    expected[[3, 6, 9, 12]] = [1, 0.5, 0.25, 0.125]
    np.testing.assert_allclose(fdn.render_constrained(cp, 13), expected, atol=1e-12)
    p = UnconstrainedParams(b=[1.0], c=[1.0], d=0.0, W=[[0.0]], gamma=[0.0], m=[3.0])
    np.testing.assert_allclose(fdn.render_ir(p, 13, Q=16), expected, atol=1e-12)


def test_render_decays(rng):
    p = fdn.init_params(7)
    h = fdn.render_ir(p, 16000, Q=1024)
    assert np.all(np.isfinite(h))
    frames = np.sum(h.reshape(-1, 1000) ** 2, axis=1)
    assert frames[-1] < 1e-3 * frames[:3].max()


def test_integer_render_matches_ring_buffer(rng):
    cp = random_cp(rng, 6, 64)
    np.testing.assert_allclose(fdn.render_constrained(cp, 4096), ring_buffer_fdn(cp, 4096), atol=1e-6)
    # the kernel path agrees too
    kernels = np.ascontiguousarray(fdn.delay_kernel(cp.m, 128))
    y, _, _ = backend.fdn_forward(kernels, cp.A, cp.b, cp.c, cp.d, 4096, 64)
    np.testing.assert_allclose(y, ring_buffer_fdn(cp, 4096), atol=1e-6)


def test_delay_zero_line_is_silent():
    cp = ConstrainedParams(b=[1.0, 1.0], c=[1.0, 1.0], d=0.0, U=np.eye(2), gamma=[0.5, 0.5],
                           m=[0.0, 2.0], Q=8)
    expected = np.zeros(8)
    expected[[2, 4, 6]] = [1, 0.5, 0.25]
    np.testing.assert_allclose(fdn.render_constrained(cp, 8), expected, atol=1e-12)
    np.testing.assert_allclose(ring_buffer_fdn(cp, 8), expected, atol=1e-12)
    np.testing.assert_allclose(fdn.render_constrained(cp.replace(m=np.array([0.0, 2.000001])), 8),
                               expected, atol=1e-5)


def test_streaming_process_matches_render(rng):
    cp = random_cp(rng, 4, 32, integer=False)
    u = np.zeros(300)
    u[0] = 1.0
    np.testing.assert_allclose(fdn.process(cp, u), fdn.render_constrained(cp, 300), atol=1e-12)
    # linear time-invariant: a delayed, scaled input gives a delayed, scaled output
    v = np.zeros(300)
    v[10] = -2.0
    np.testing.assert_allclose(fdn.process(cp, v)[10:], -2 * fdn.render_constrained(cp, 290), atol=1e-12)


def test_bank_history_order():
    bank = fdn.DelayLineBank([1.0], Q=4)
    for v in [1.0, 2.0, 3.0]:
        bank.write(v)
    np.testing.assert_array_equal(bank.history()[0], [3.0, 2.0, 1.0, 0.0])
    assert bank.read()[0] == pytest.approx(3.0)


@pytest.mark.skipif(backend.compiled is None, reason="compiled backend not built")
def test_backends_agree(rng):
    cp = random_cp(rng, 5, 64, integer=False)
    kernels = np.ascontiguousarray(fdn.delay_kernel(cp.m, 128))
    args = (kernels, cp.A, cp.b, cp.c, cp.d, 700, 64)
    for a, b in zip(backend.python.fdn_forward(*args), backend.compiled.fdn_forward(*args)):
        np.testing.assert_allclose(a, b, atol=1e-13)
    gy = rng.normal(size=700)
    for a, b in zip(backend.python.fdn_backward(kernels, cp.A, cp.c, gy, 64),
                    backend.compiled.fdn_backward(kernels, cp.A, cp.c, gy, 64)):
        np.testing.assert_allclose(a, b, atol=1e-12)
    delays = np.array([0, 3, 17, 40, 63])
    np.testing.assert_allclose(backend.python.fdn_integer(delays, cp.A, cp.b, cp.c, cp.d, 900),
                               backend.compiled.fdn_integer(delays, cp.A, cp.b, cp.c, cp.d, 900),
                               atol=1e-13)


# --------------------------------------------------------------- gradient


@pytest.mark.parametrize("offset", [-0.9, -0.6, -0.3, -0.05, 0.05, 0.3, 0.6, 0.9])
def test_delay_gradient_points_to_target(offset):
    L, t = 200, 50
    target = np.zeros(L)
    target[t] = 1.0
    loss = CompositeLoss(target, LossConfig(lam=0.0))
    p = UnconstrainedParams(b=[1.0], c=[1.0], d=0.0, W=[[0.0]], gamma=[-20.0], m=[t + offset])
    tape = ad.Tape()
    leaves = fdn.leaves_on(tape, p)
    h, _ = fdn.render_vars(leaves, L, 64)
    tape.backward(loss(h)[0])
    assert np.sign(leaves["m"].grad[0]) == np.sign(offset)


def test_all_degrees_of_freedom_receive_gradient():
    # delays drawn inside the 64-sample buffer so the clip branch is inactive
    p = fdn.init_params(3, N=3, psi=60)
    target = fdn.render_ir(fdn.init_params(11, N=3, psi=60), 512, Q=64)
    loss = CompositeLoss(target)
    tape = ad.Tape()
    leaves = fdn.leaves_on(tape, p)
    h, _ = fdn.render_vars(leaves, 512, 64)
    tape.backward(loss(h)[0])
    grads = np.concatenate([leaves[k].grad.ravel() for k in ("b", "c", "d", "gamma", "m")]
                           + [leaves["W"].grad[np.triu_indices(3, 1)]])
    assert len(grads) == 3 * 3 + 1 + 3 + 3
    assert np.all(grads != 0)
    np.testing.assert_array_equal(leaves["W"].grad[np.tril_indices(3)], 0.0)


def test_flops_per_sample():
    assert fdn.flops_per_sample(6) == 2 * 36 + 18 + 1
    # matvec A s (N^2), gains c.s and b u (2N), d u (1), plus N^2 adds and N line writes
    for n in range(1, 10):
        mults = n * n + 2 * n + 1
        adds = n * (n - 1) + n + (n - 1) + 1
        assert abs(fdn.flops_per_sample(n) - (mults + adds)) <= n + 1


# ------------------------------------------------------------------ init


def test_init_defaults():
    p = fdn.init_params(0)
    assert np.all((p.m > 0) & (p.m < 1024))
    np.testing.assert_allclose(p.c, 1 / 6)
    assert p.d == 1.0
    q = fdn.init_params(0)
    for k in UnconstrainedParams.FIELDS:
        np.testing.assert_array_equal(getattr(p, k), getattr(q, k))


def test_init_delay_mean():
    m = np.concatenate([fdn.init_params(s).m for s in range(2000)])
    expected = 1024 * 1.1 / 7.1
    assert expected == pytest.approx(158.6, abs=0.1)
    assert m.mean() == pytest.approx(expected, rel=0.03)


def test_init_statistics():
    ps = [fdn.init_params(s, N=8) for s in range(500)]
    W = np.stack([p.W for p in ps])
    assert W.std() == pytest.approx(np.sqrt(1 / 8), rel=0.03)
    assert abs(W.mean()) < 0.01


@pytest.mark.parametrize("kw", [dict(psi=0), dict(alpha=0.5), dict(alpha=3, beta=2)])
def test_init_preconditions(kw):
    with pytest.raises(ContractError):
        fdn.init_params(0, **kw)
