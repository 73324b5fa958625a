import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fdnfit import autodiff as ad, losses
from fdnfit.errors import ContractError, DegenerateInputError, ShapeError
from fdnfit.losses import CompositeLoss, LossConfig

W = losses.edp_window()


def erfc_series(x, terms=80):
    """1 - erf(x) with erf from its Maclaurin series."""
    s = sum((-1) ** k * x ** (2 * k + 1) / (math.factorial(k) * (2 * k + 1)) for k in range(terms))
    return 1 - 2 / math.sqrt(math.pi) * s


def brute_edp(h, w):
    nu = len(w) // 2
    pad = np.pad(np.asarray(h, float), nu)
    out = np.zeros(len(h))
    for n in range(len(h)):
        frame = pad[n:n + len(w)]
        sigma = math.sqrt(max(float(np.sum(w * frame ** 2)), 1e-12))
        out[n] = float(np.sum(w * (np.abs(frame) > sigma)))
    return out / erfc_series(1 / math.sqrt(2))


# -------------------------------------------------------------------- EDC


@pytest.mark.parametrize("h,expected", [
    ([1, 0, 0], [1, 0, 0]),
    ([1, 1], [2, 1]),
    ([0.5, -0.5, 0.5, -0.5], [1.0, 0.75, 0.5, 0.25]),
])
def test_edc_examples(h, expected):
    np.testing.assert_allclose(losses.edc(h), expected)
    tape = ad.Tape()
    np.testing.assert_allclose(losses.edc(tape.var(h)).value, expected)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-10, 10)))
def test_edc_monotone_nonnegative(h):
    e = losses.edc(h)
    assert np.all(e >= 0)
    assert np.all(np.diff(e) <= 1e-12)
    assert e[0] == pytest.approx(np.sum(h * h))


def test_edc_loss_examples(rng):
    h = rng.normal(size=50)
    assert losses.edc_loss(h, h) == 0.0
    assert losses.edc_loss(h, np.zeros(50)) == pytest.approx(1.0)
    assert losses.edc_loss([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)


def test_edc_loss_errors():
    with pytest.raises(DegenerateInputError):
        losses.edc_loss(np.zeros(4), np.ones(4))
    with pytest.raises(ShapeError):
        losses.edc_loss(np.ones(4), np.ones(5))
    with pytest.raises(ShapeError):
        losses.edc_loss(np.ones(1), np.ones(1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 100))
def test_edc_loss_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(size=n)
    assert losses.edc_loss(a, b) >= 0
    assert losses.edc_loss(a, a) == 0


# -------------------------------------------------------------------- EDP


def test_erfc_norm_matches_series():
    assert losses.ERFC_NORM == pytest.approx(erfc_series(1 / math.sqrt(2)), rel=1e-12)
    assert losses.ERFC_NORM == pytest.approx(0.317310507, abs=1e-9)


def test_window_shape():
    assert len(W) == 321
    assert W.sum() == pytest.approx(1.0)
    assert np.all(W >= 0)


def test_edp_white_noise_near_one(rng):
    eta = losses.edp(rng.normal(size=32000), W)
    steady = eta[1000:-1000]
    # the profile level is one; single frames scatter with binomial noise
    assert abs(steady.mean() - 1) <= 0.1
    p = losses.ERFC_NORM
    n_eff = 1 / np.sum(W**2)
    assert steady.std() == pytest.approx(np.sqrt(p * (1 - p) / n_eff) / p, rel=0.35)


def test_edp_lone_impulse_near_zero():
    h = np.zeros(4000)
    h[2000] = 1.0
    eta = losses.edp(h, W)
    assert np.all(eta[2000 - 160:2000 + 161] <= 0.2)


@pytest.mark.parametrize("kind", ["constant", "noise", "sparse"])
def test_edp_matches_brute_force(kind, rng):
    w = losses.edp_window(16000, 2.0)
    h = {"constant": np.full(300, 0.4),
         "noise": rng.normal(size=300),
         "sparse": np.where(rng.random(300) < 0.05, rng.normal(size=300), 0.0)}[kind]
    np.testing.assert_allclose(losses.edp(h, w), brute_edp(h, w), atol=1e-12)


def test_edp_even_window():
    with pytest.raises(ContractError):
        losses.edp(np.ones(10), np.ones(4) / 4)
    with pytest.raises(ContractError):
        losses.soft_edp(np.ones(10), np.ones(4) / 4, 100.0)


def test_soft_edp_of_silence():
    # sigma is floored at 1e-6, so kappa * sigma must stay small for g(0)
    eta = losses.soft_edp(np.zeros(1000), W, 1e2)
    np.testing.assert_allclose(eta, 0.5 / losses.ERFC_NORM, rtol=1e-3)
    assert eta[500] == pytest.approx(1.576, abs=1e-3)


def test_soft_edp_converges_to_edp(rng):
    h = rng.normal(size=16000)
    ref = losses.edp(h, W)
    devs = [np.abs(losses.soft_edp(h, W, k) - ref).max() for k in (1e2, 1e3, 1e4, 1e6)]
    assert all(a >= b for a, b in zip(devs, devs[1:]))
    assert devs[-1] <= 0.02


def test_soft_edp_gradient_flows_through_sigma(rng):
    w = losses.edp_window(16000, 0.5)
    h = rng.normal(size=40)
    kappa = np.full(40, 3.0)
    weights = rng.normal(size=40)

    def f(x):
        return float(np.dot(losses.soft_edp(x, w, kappa), weights))

    tape = ad.Tape()
    v = tape.var(h)
    tape.backward(ad.dot(losses.soft_edp(v, w, kappa), weights))
    from conftest import numeric_grad
    np.testing.assert_allclose(v.grad, numeric_grad(f, h, 1e-6), rtol=1e-4, atol=1e-8)


def test_kappa_schedule_endpoints():
    k = losses.kappa_schedule(9600)
    assert k[0] == 1e2 and k[-1] == pytest.approx(1e5)
    assert np.allclose(np.diff(k), np.diff(k)[0])


@pytest.mark.parametrize("kappa", [1e2, 1e4, 1e6])
def test_scaled_sigmoid_derivative_vanishes(kappa):
    x = np.r_[np.linspace(-1, -20 / kappa, 500), np.linspace(20 / kappa, 1, 500)]
    tape = ad.Tape()
    v = tape.var(x)
    tape.backward(ad.sum_(ad.sigmoid(v * kappa)))
    assert np.all(np.abs(v.grad) < 1e-6 * kappa)


# ------------------------------------------------------------- edp_loss


def test_edp_loss_identity(rng):
    h = rng.normal(size=2000)
    assert losses.edp_loss(h, h) == 0.0


def test_profile_mse_constant_offset(rng):
    eta = rng.random(500)
    assert losses.profile_mse(eta, eta + 0.1) == pytest.approx(0.01)


def test_edp_loss_noise_vs_comb(rng):
    n = 8000
    noise = rng.normal(size=n) * np.exp(-np.arange(n) / 3000)
    comb = np.zeros(n)
    comb[::400] = 0.7 ** np.arange(len(comb[::400]))
    cfg = LossConfig()
    w = cfg.window()
    k = losses.kappa_schedule(n)
    oracle = np.mean((losses.soft_edp(noise, w, k) - losses.soft_edp(comb, w, k)) ** 2)
    got = losses.edp_loss(noise, comb, cfg)
    assert got == pytest.approx(oracle, rel=1e-12)
    assert 0.05 <= got <= 1.0


# ------------------------------------------------------------ composite


def test_composite_identity_and_lambda_zero(rng):
    t = rng.normal(size=3000) * np.exp(-np.arange(3000) / 800)
    p = rng.normal(size=3000) * np.exp(-np.arange(3000) / 500)
    assert losses.composite_loss(t, t) == (0.0, 0.0, 0.0)
    total, l_edc, _ = losses.composite_loss(t, p, LossConfig(lam=0.0))
    assert total == l_edc == losses.edc_loss(t, p)
    total, l_edc, l_edp = losses.composite_loss(t, p)
    assert total == pytest.approx(l_edc + 0.1 * l_edp)
    assert l_edp == pytest.approx(losses.edp_loss(t, p))


def test_composite_tape_matches_numeric(rng):
    t = rng.normal(size=1000)
    p = rng.normal(size=1000) * 0.5
    loss = CompositeLoss(t)
    tape = ad.Tape()
    out = loss(tape.var(p))
    np.testing.assert_allclose([float(v.value) for v in out], loss(p), rtol=1e-12)


def test_composite_lambda_zero_has_no_edp_gradient(rng):
    t = rng.normal(size=600)
    p = rng.normal(size=600)
    tape = ad.Tape()
    v = tape.var(p)
    total, l_edc, _ = CompositeLoss(t, LossConfig(lam=0.0))(v)
    tape.backward(total)
    g0 = v.grad.copy()
    tape2 = ad.Tape()
    v2 = tape2.var(p)
    tape2.backward(losses.edc_loss(t, v2))
    np.testing.assert_allclose(g0, v2.grad, rtol=1e-12)


@pytest.mark.parametrize("kw", [dict(lam=-1), dict(kappa_start=0), dict(kappa_start=10, kappa_end=1),
                                dict(window_ms=0)])
def test_loss_config_validation(kw):
    with pytest.raises(ContractError):
        LossConfig(**kw)


def test_composite_length_mismatch(rng):
    with pytest.raises(ShapeError):
        CompositeLoss(rng.normal(size=10))(np.ones(11))
