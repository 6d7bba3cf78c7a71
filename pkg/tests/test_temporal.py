import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mvmn import autodiff as ad
from mvmn.temporal import (
    LSTMParams,
    PPParams,
    TimeSeriesInput,
    encode,
    intensity,
    log_density,
    log_density_from_activation,
    pp_loss,
    v_time,
)

from conftest import check_gradients


def _pp(v, omega, b):
    return PPParams(ad.Tensor(np.asarray(v, float)), ad.Tensor(np.asarray(omega, float)), ad.Tensor(np.asarray(b, float)))


def test_intensity_examples():
    pp = _pp([0.0, 0.0], 0.0, 0.0)
    assert intensity(np.zeros(2), 1.0, pp) == pytest.approx(1.0)
    pp = _pp([1.0, 0.0], 0.1, 0.0)
    assert intensity(np.array([0.5, 3.0]), 0.0, pp) == pytest.approx(np.exp(0.5))
    assert intensity(np.array([0.0, 0.0]), 5.0, pp) == pytest.approx(np.exp(0.5))


def _numeric_log_density(a, omega, dt):
    lam = lambda s: np.exp(a + omega * s)
    integral, _ = quad(lam, 0.0, dt, epsabs=1e-13, epsrel=1e-13)
    return np.log(lam(dt)) - integral


@pytest.mark.parametrize("omega", [-2.0, -0.3, -1e-9, 0.0, 1e-9, 1e-7, 0.5, 2.0])
@pytest.mark.parametrize("a,dt", [(-1.0, 0.7), (0.4, 2.5), (-3.0, 10.0), (0.0, 1e-3)])
def test_log_density_matches_quadrature(omega, a, dt):
    got = float(log_density_from_activation(np.array([a]), np.array(omega), np.array([dt])).data[0])
    assert got == pytest.approx(_numeric_log_density(a, omega, dt), abs=1e-6)


def test_log_density_at_zero_gap_is_activation():
    got = log_density_from_activation(np.array([0.3, -2.0]), np.array(1.5), np.zeros(2)).data
    np.testing.assert_allclose(got, [0.3, -2.0], atol=1e-15)


@pytest.mark.parametrize("a,omega", [(0.0, 0.5), (-1.0, 1.0), (1.0, 2.0)])
def test_density_integrates_to_one_for_positive_omega(a, omega):
    f = lambda t: np.exp(log_density_from_activation(np.array([a]), np.array(omega), np.array([t])).data[0])
    mass, _ = quad(f, 0.0, np.inf, limit=200)
    assert 0.999 <= mass <= 1.001


def test_density_example_value():
    pp = _pp([0.0], 1.0, 0.0)
    logf = float(log_density(ad.Tensor(np.zeros((1, 1))), np.array([1.0]), pp).data[0])
    assert logf == pytest.approx(2.0 - np.e, abs=1e-12)
    assert np.exp(logf) == pytest.approx(0.487589, abs=1e-6)


def test_intensity_example_with_bias_and_omega():
    # v.h = 0.5, b = -0.2, omega = 0.1, dt = 2
    pp = _pp([1.0], 0.1, -0.2)
    assert intensity(np.array([0.5]), 2.0, pp) == pytest.approx(np.exp(0.5), abs=1e-12)


def test_negative_gap_rejected():
    with pytest.raises(ValueError):
        log_density_from_activation(np.zeros(1), np.array(0.1), np.array([-1.0]))


def test_large_activation_stays_finite():
    out = log_density_from_activation(np.array([80.0, -80.0]), np.array(30.0), np.array([5.0, 5.0])).data
    assert np.all(np.isfinite(out))


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-2, 2),
    st.floats(-3, 1),
    st.floats(0, 5),
)
def test_log_density_gradient(omega, a, dt):
    err = check_gradients(
        lambda a, w: log_density_from_activation(a, w, np.array([dt])), [np.array([a]), np.array(omega)]
    )
    assert err < 1e-5


def test_log_density_gradient_near_zero_omega():
    for w in (0.0, 1e-9, -3e-6, 2e-5):
        err = check_gradients(
            lambda a, o: log_density_from_activation(a, o, np.array([0.5, 2.0, 7.0])),
            [np.array([0.2, -0.4, 0.1]), np.array(w)],
        )
        assert err < 1e-6


def test_v_time_is_tanh_of_product():
    h_m, h_n = np.array([0.5, -1.0]), np.array([2.0, 0.3])
    np.testing.assert_allclose(v_time(h_m, h_n).data, np.tanh(h_m * h_n))
    with pytest.raises(ad.ShapeError):
        v_time(np.ones(2), np.ones(3))


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeriesInput(np.array([1, 2]), np.array([3.0, 1.0]))
    with pytest.raises(ValueError):
        TimeSeriesInput(np.array([1]), np.array([3.0, 4.0]))


def _lstm(r, d=3, h=4):
    return LSTMParams(ad.Tensor(r.normal(size=(d, 4 * h))), ad.Tensor(r.normal(size=(h, 4 * h))), ad.Tensor(np.zeros(4 * h)))


def test_encode_length_and_empty():
    r = np.random.default_rng(0)
    emb = ad.Tensor(r.normal(size=(24, 3)))
    states = encode(TimeSeriesInput([1, 5, 9], [0.0, 1.0, 2.5]), emb, _lstm(r))
    assert len(states) == 3 and states[0].shape == (4,)
    with pytest.raises(ValueError):
        encode(TimeSeriesInput([], []), emb, _lstm(r))


def test_pp_loss_sums_both_users_and_skips_singletons():
    r = np.random.default_rng(1)
    pp = _pp(r.normal(size=4), 0.2, -0.5)
    sm = [ad.Tensor(r.normal(size=4)) for _ in range(3)]
    hours = np.array([0.0, 1.0, 4.0])
    single = float(pp_loss(sm, hours, sm[:1], hours[:1], pp).data)
    manual = -sum(
        float(log_density(sm[i], np.array(hours[i + 1] - hours[i]), pp).data) for i in range(2)
    )
    assert single == pytest.approx(manual, rel=1e-12)
    double = float(pp_loss(sm, hours, sm, hours, pp).data)
    assert double == pytest.approx(2 * manual, rel=1e-12)
