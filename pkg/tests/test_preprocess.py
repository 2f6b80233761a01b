import numpy as np
import pytest
from scipy import signal as sps

from lognokit.errors import InvalidCutoff, TooFewSamples
from lognokit.preprocess import butterworth_biquad, detrend, integrate_velocity, lowpass, velocity_from_acc


def ls_slope(y, t):
    return np.polyfit(t, y, 1)[0]


def test_detrend_removes_a_line():
    t = np.sort(np.random.default_rng(0).uniform(0, 3, 40))
    np.testing.assert_allclose(detrend(2 * t + 3, t), 0.0, atol=1e-9)
    np.testing.assert_allclose(detrend(np.full(17, 5.0)), 0.0, atol=1e-12)


def test_detrend_sine_matches_independent_fit():
    t = np.arange(100) / 100
    x = np.sin(2 * np.pi * t)
    slope, icpt = np.polyfit(t, x, 1)
    out = detrend(x, t)
    np.testing.assert_allclose(out, x - (slope * t + icpt), atol=1e-12)
    assert abs(ls_slope(out, t)) < 1e-9
    assert abs(out.mean()) < 1e-12


def test_detrend_columns_independently():
    t = np.arange(50) / 10
    x = np.column_stack([t, -3 * t + 1, np.cos(t)])
    out = detrend(x)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], detrend(x[:, j]), atol=1e-12)


def test_detrend_too_short():
    with pytest.raises(TooFewSamples):
        detrend([1.0])


def test_biquad_matches_scipy_butter():
    for rate, fc in [(100, 10), (100, 2.5), (400, 30), (50, 24)]:
        b, a = butterworth_biquad(rate, fc)
        b_ref, a_ref = sps.butter(2, fc, fs=rate)
        np.testing.assert_allclose(b, b_ref, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(a, a_ref, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("fc", [0.0, -1.0, 50.0, 60.0])
def test_invalid_cutoff(fc):
    with pytest.raises(InvalidCutoff):
        lowpass(np.zeros(10), 100.0, fc)


def test_lowpass_dc_gain():
    np.testing.assert_allclose(lowpass(np.full(300, 7.0), 100.0, 3.0), 7.0, atol=1e-6)


def _steady_amplitude(f, fc, rate=100.0):
    t = np.arange(2000) / rate
    y = lowpass(np.sin(2 * np.pi * f * t), rate, fc)
    mid = y[500:1500]
    return 0.5 * (mid.max() - mid.min())


def test_lowpass_half_power_point_after_two_passes():
    # |H(fc)|^2 = 1/2 for a Butterworth filter, and the forward-backward run squares it
    assert _steady_amplitude(10.0, 10.0) == pytest.approx(0.5, abs=0.05)


def test_lowpass_passband():
    assert _steady_amplitude(0.5, 10.0) >= 0.99


def test_lowpass_zero_phase():
    t = np.arange(1000) / 100
    x = np.sin(2 * np.pi * 1.0 * t)
    y = lowpass(x, 100.0, 10.0)
    lag = np.argmax(np.correlate(y[200:800], x[200:800], "full")) - 599
    assert lag == 0


def test_integrate_zero_and_constant():
    assert np.all(integrate_velocity(np.zeros((30, 3)), 100.0).v == 0)
    vp = integrate_velocity(np.tile([1.0, 0.0, 0.0], (101, 1)), 100.0)
    np.testing.assert_allclose(vp.v, 0.0, atol=1e-12)


def test_integrate_cosine_has_analytic_antiderivative():
    rate = 100.0
    t = np.arange(101) / rate
    A = 2.0
    acc = np.zeros((101, 3))
    acc[:, 0] = A * np.cos(2 * np.pi * t)
    vp = integrate_velocity(acc, rate)
    np.testing.assert_allclose(vp.v[:, 0], A / (2 * np.pi) * np.sin(2 * np.pi * t), atol=1e-3)
    np.testing.assert_allclose(vp.t, t, atol=1e-15)


def test_integrate_endpoints_are_exactly_zero():
    rng = np.random.default_rng(7)
    vp = integrate_velocity(rng.normal(size=(77, 3)), 50.0)
    assert np.all(vp.v[0] == 0) and np.all(vp.v[-1] == 0)
    np.testing.assert_allclose(vp.speed, np.linalg.norm(vp.v, axis=1), atol=1e-12)


def test_integrate_rejects_bad_input():
    with pytest.raises(TooFewSamples):
        integrate_velocity(np.zeros((1, 3)), 100.0)
    a = np.zeros((5, 3))
    a[2, 1] = np.inf
    with pytest.raises(ValueError):
        integrate_velocity(a, 100.0)


def test_velocity_from_acc_skips_stages():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(200, 3))
    raw = velocity_from_acc(a, 100.0, cutoff_hz=None, remove_drift=False)
    np.testing.assert_array_equal(raw.v, integrate_velocity(a, 100.0).v)
    full = velocity_from_acc(a, 100.0)
    np.testing.assert_allclose(full.v, integrate_velocity(lowpass(detrend(a), 100.0, 10.0), 100.0).v)
