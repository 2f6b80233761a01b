import math

import numpy as np
import pytest
from scipy import integrate, stats

from lognokit.errors import DegenerateInput, IllConditioned, NoPeak, ZeroSignal
from lognokit.siglognormal import (
    SNR_CAP_DB,
    ExtractConfig,
    LognormalComponent3D,
    SigmaLognormalModel,
    component_velocities,
    compute_snr,
    cumulative_fraction,
    estimate_component,
    extract_model,
    fit_angles,
    lognormal_speed,
    principal_frame,
    refine_model,
    refine_params,
    synthesize_velocity,
)

from conftest import separated_model

REF = LognormalComponent3D(D=1.0, t0=0.0, mu=-1.0, sigma=0.3)


def grid(t_end, rate=100.0):
    return np.arange(int(round(t_end * rate)) + 1) / rate


# closed forms

def test_speed_matches_scipy_lognormal_pdf():
    c = LognormalComponent3D(D=0.7, t0=0.2, mu=-1.2, sigma=0.35)
    t = np.linspace(0.21, 3.0, 400)
    ref = c.D * stats.lognorm.pdf(t - c.t0, s=c.sigma, scale=math.exp(c.mu))
    np.testing.assert_allclose(lognormal_speed(c, t), ref, rtol=1e-12)
    assert lognormal_speed(c, 0.2) == 0.0 and lognormal_speed(c, -5.0) == 0.0


def test_fraction_matches_scipy_lognormal_cdf():
    c = LognormalComponent3D(D=0.7, t0=0.2, mu=-1.2, sigma=0.35)
    t = np.linspace(0.0, 3.0, 400)
    ref = np.where(t > c.t0, stats.lognorm.cdf(np.maximum(t - c.t0, 1e-300), s=c.sigma, scale=math.exp(c.mu)), 0)
    np.testing.assert_allclose(cumulative_fraction(c, t), ref, atol=1e-14)


def test_reference_peak_location_and_value():
    assert REF.peak_time == pytest.approx(math.exp(-1.09), rel=1e-12)
    assert REF.peak_time == pytest.approx(0.3362, abs=1e-4)
    assert REF.peak_speed == pytest.approx(3.7812, abs=1e-4)
    t = np.linspace(0.001, 2.0, 200_001)
    s = lognormal_speed(REF, t)
    assert abs(t[np.argmax(s)] - REF.peak_time) <= t[1] - t[0]
    assert s.max() == pytest.approx(REF.peak_speed, rel=1e-8)


@pytest.mark.parametrize("sigma", [0.1, 0.3, 0.5])
def test_area_is_D(sigma):
    c = LognormalComponent3D(D=0.8, t0=0.1, mu=-0.5, sigma=sigma)
    area, _ = integrate.quad(lambda x: lognormal_speed(c, x), c.t0, c.t0 + 20, limit=200, points=[c.peak_time])
    assert area == pytest.approx(c.D, abs=1e-6)


def test_fraction_limits_and_median():
    c = LognormalComponent3D(D=1.0, t0=0.3, mu=-0.8, sigma=0.4)
    assert cumulative_fraction(c, c.t0 + math.exp(c.mu)) == pytest.approx(0.5, abs=1e-12)
    assert cumulative_fraction(c, c.t0 + math.exp(c.mu + 8 * c.sigma)) >= 1 - 1e-9
    assert cumulative_fraction(c, c.t0) == 0.0


def test_fraction_is_the_integral_of_speed():
    c = LognormalComponent3D(D=1.3, t0=0.0, mu=-1.0, sigma=0.25)
    t = np.linspace(0.0, 3.0, 30_001)
    cum = integrate.cumulative_trapezoid(lognormal_speed(c, t), t, initial=0.0) / c.D
    np.testing.assert_allclose(cum, cumulative_fraction(c, t), atol=1e-6)


def test_support_contains_98_percent():
    lo, hi = REF.support()
    assert cumulative_fraction(REF, lo) == pytest.approx(0.01, abs=1e-12)
    assert cumulative_fraction(REF, hi) == pytest.approx(0.99, abs=1e-12)


def test_normalization_keeps_the_sweep():
    c = LognormalComponent3D(D=1.0, t0=0.0, mu=-1.0, sigma=0.3, theta_s=3.0, theta_e=3.5, phi_s=2.0, phi_e=-0.3)
    n = c.normalized()
    assert -math.pi < n.theta_s <= math.pi and -math.pi < n.theta_e <= math.pi
    assert n.phi_s == pytest.approx(math.pi / 2)
    t = grid(1.5)
    flat = LognormalComponent3D(1.0, 0.0, -1.0, 0.3, 3.0, 3.5, 0.2, 0.2)
    np.testing.assert_allclose(component_velocities(flat.as_array(), t),
                               component_velocities(flat.normalized().as_array(), t), atol=1e-12)


# synthesis

def test_empty_model_is_silent():
    assert np.all(synthesize_velocity(SigmaLognormalModel(), grid(1.0)) == 0)


def test_fixed_x_direction_gives_pure_speed():
    t = grid(2.0)
    v = synthesize_velocity(SigmaLognormalModel((REF,)), t)
    np.testing.assert_allclose(v[:, 0], lognormal_speed(REF, t), rtol=0, atol=0)
    assert np.all(v[:, 1:] == 0)


def test_path_length_is_D_for_any_direction():
    c = LognormalComponent3D(0.42, 0.1, -1.2, 0.3, 0.4, 2.1, -0.3, 0.6)
    t = grid(3.0)
    v = synthesize_velocity(SigmaLognormalModel((c,)), t)
    assert integrate.trapezoid(np.linalg.norm(v, axis=1), t) == pytest.approx(c.D, abs=1e-4)


def test_direction_follows_the_fraction():
    c = LognormalComponent3D(1.0, 0.0, -1.0, 0.3, -0.5, 1.0, 0.1, -0.4)
    t = np.array([c.t0 + math.exp(c.mu)])  # F = 0.5
    u = component_velocities(c.as_array(), t)[0, 0] / lognormal_speed(c, t[0])
    th, ph = 0.25, -0.15
    np.testing.assert_allclose(u, [math.cos(ph) * math.cos(th), math.cos(ph) * math.sin(th), math.sin(ph)], atol=1e-12)


def test_azimuth_takes_the_shorter_arc():
    c = LognormalComponent3D(1.0, 0.0, -1.0, 0.3, 3.0, -3.0)
    t = np.array([c.t0 + math.exp(c.mu)])
    u = component_velocities(c.as_array(), t)[0, 0]
    assert u[0] < 0  # passes through pi, not through zero


def test_model_frame_rotates_the_output():
    rng = np.random.default_rng(0)
    m = separated_model(rng, 2)
    R = stats.special_ortho_group.rvs(3, random_state=1)
    t = grid(2.0)
    rotated = SigmaLognormalModel(m.components, R)
    np.testing.assert_allclose(synthesize_velocity(rotated, t), synthesize_velocity(m, t) @ R.T, atol=1e-12)


def test_model_sorts_and_serializes():
    a = LognormalComponent3D(1.0, 0.5, -1, 0.3)
    b = LognormalComponent3D(2.0, 0.1, -1, 0.3)
    m = SigmaLognormalModel((a, b))
    assert [c.t0 for c in m.components] == [0.1, 0.5]
    back = SigmaLognormalModel.from_dict(m.to_dict())
    assert back.components == m.components
    np.testing.assert_array_equal(back.frame, m.frame)


# SNR

def test_snr_definitions():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(300, 3))
    assert compute_snr(s, s) == SNR_CAP_DB
    assert compute_snr(s, np.zeros_like(s)) == pytest.approx(0.0, abs=1e-12)
    n = rng.normal(size=s.shape)
    n *= math.sqrt(0.01 * np.sum(s ** 2) / np.sum(n ** 2))
    assert compute_snr(s + n, s) == pytest.approx(20.0 + 10 * math.log10(np.sum((s + n) ** 2) / np.sum(s ** 2)), abs=1e-9)
    assert abs(compute_snr(s + n, s) - 20.0) < 0.1


def test_snr_errors():
    with pytest.raises(ZeroSignal):
        compute_snr(np.zeros((5, 3)), np.ones((5, 3)))
    with pytest.raises(ValueError):
        compute_snr(np.ones((5, 3)), np.ones((4, 3)))
    with pytest.raises(ValueError):
        compute_snr(np.ones((1, 3)), np.ones((1, 3)))


# estimation

def test_estimate_single_stroke_within_ten_percent():
    c = LognormalComponent3D(D=1.0, t0=0.2, mu=-1.0, sigma=0.25)
    t = grid(2.0)
    est = estimate_component(lognormal_speed(c, t), t)
    for name in ("D", "t0", "mu", "sigma"):
        truth, got = getattr(c, name), getattr(est, name)
        assert abs(got - truth) <= 0.1 * abs(truth), name
    assert est.theta_s == est.theta_e == est.phi_s == est.phi_e == 0.0


def test_estimate_picks_the_taller_stroke():
    t = grid(4.0)
    small = LognormalComponent3D(0.5, 0.1, -1.0, 0.25)
    big = LognormalComponent3D(1.0, 2.0, -1.0, 0.25)
    est = estimate_component(lognormal_speed(small, t) + lognormal_speed(big, t), t)
    assert abs(est.t0 - big.t0) < 0.1


def test_estimate_errors():
    t = grid(1.0)
    with pytest.raises(NoPeak):
        estimate_component(np.zeros_like(t), t)
    ramp = t.copy()  # peak at the last sample, no right half-max crossing
    with pytest.raises(IllConditioned):
        estimate_component(ramp, t)


def test_fit_angles_recovers_a_sweep():
    c = LognormalComponent3D(1.0, 0.1, -1.0, 0.25, 0.3, 1.3, -0.2, 0.4)
    t = grid(2.0)
    v = component_velocities(c.as_array(), t)[0]
    est = fit_angles(LognormalComponent3D(c.D, c.t0, c.mu, c.sigma), v, t)
    assert est.theta_s == pytest.approx(0.3, abs=1e-6)
    assert est.theta_e == pytest.approx(1.3, abs=1e-6)
    assert est.phi_s == pytest.approx(-0.2, abs=1e-6)
    assert est.phi_e == pytest.approx(0.4, abs=1e-6)


# refinement

def test_refine_recovers_from_five_percent_perturbation():
    c = LognormalComponent3D(0.3, 0.1, -1.1, 0.28, 0.2, 0.9, 0.1, -0.2)
    t = grid(2.0)
    v = synthesize_velocity(SigmaLognormalModel((c,)), t)
    bad = LognormalComponent3D.from_array(c.as_array() * 1.05)
    res = refine_model(SigmaLognormalModel((bad,)), v, t, iters=30)
    assert res.objective <= 0.1 * res.initial_objective


def test_refine_is_a_noop_at_the_optimum():
    c = LognormalComponent3D(0.3, 0.1, -1.1, 0.28, 0.2, 0.9, 0.1, -0.2)
    t = grid(2.0)
    v = synthesize_velocity(SigmaLognormalModel((c,)), t)
    res = refine_model(SigmaLognormalModel((c,)), v, t, iters=5)
    assert res.initial_objective == 0.0
    assert all(abs(a - b) < 1e-12 for a, b in zip(res.history, res.history[1:])) or len(res.history) == 1
    np.testing.assert_allclose(res.model.params(), c.as_array()[None, :], atol=1e-12)


def test_refine_objective_never_increases():
    rng = np.random.default_rng(3)
    t = grid(3.0)
    for _ in range(100):
        m = separated_model(rng, int(rng.integers(1, 4)))
        v = synthesize_velocity(m, t) + rng.normal(0, 0.02, (t.size, 3))
        start = m.params() * rng.uniform(0.85, 1.15, size=m.params().shape)
        res = refine_params(start, v, t, iters=10)
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))
        assert res.objective <= res.initial_objective


def test_refine_respects_invariant_projection():
    t = grid(2.0)
    c = LognormalComponent3D(0.3, 0.1, -1.1, 0.28)
    v = synthesize_velocity(SigmaLognormalModel((c,)), t)
    start = c.as_array()[None, :].copy()
    start[0, 3] = -0.5
    start[0, 0] = -1.0
    res = refine_params(start, v, t, iters=3)
    p = res.model.params()[0]
    assert p[3] >= 1e-3 and p[0] >= 1e-9


def test_refine_rejects_empty_model():
    with pytest.raises(ValueError):
        refine_model(SigmaLognormalModel(), np.zeros((5, 3)), grid(0.04))


# extraction

def test_three_separated_strokes_round_trip():
    rng = np.random.default_rng(4)
    m = separated_model(rng, 3)
    t = grid(2.5)
    v = synthesize_velocity(m, t)
    res = extract_model(v, t)
    assert res.n_components == 3
    assert res.snr_db >= 30
    assert [c.t0 for c in res.model.components] == sorted(c.t0 for c in res.model.components)
    np.testing.assert_allclose(res.v_rec, synthesize_velocity(res.model, t), atol=1e-9)
    assert compute_snr(v, res.v_rec) == pytest.approx(res.snr_db, abs=1e-9)


def test_snr_trace_increases():
    rng = np.random.default_rng(5)
    m = separated_model(rng, 4, gap=0.3)
    t = grid(2.5)
    v = synthesize_velocity(m, t) + rng.normal(0, 0.01, (t.size, 3))
    res = extract_model(v, t)
    assert all(b > a for a, b in zip(res.snr_trace, res.snr_trace[1:]))
    assert res.snr_db <= SNR_CAP_DB
    assert res.n_components == len(res.model)


def test_component_limit():
    rng = np.random.default_rng(6)
    t = grid(3.0)
    v = rng.normal(size=(t.size, 3))
    res = extract_model(v, t, ExtractConfig(max_components=2))
    assert res.n_components <= 2


def test_degenerate_inputs():
    t = grid(1.0)
    with pytest.raises(DegenerateInput):
        extract_model(np.zeros((t.size, 3)), t)
    with pytest.raises(DegenerateInput):
        extract_model(np.ones((30, 3)), grid(0.29))
    bad = np.ones((t.size, 3))
    bad[3, 1] = np.nan
    with pytest.raises(DegenerateInput):
        extract_model(bad, t)
    with pytest.raises(ValueError):
        extract_model(np.ones((t.size, 2)), t)


def test_principal_frame_is_a_rotation():
    rng = np.random.default_rng(7)
    E = principal_frame(rng.normal(size=(200, 3)) * [3, 1, 0.2])
    np.testing.assert_allclose(E.T @ E, np.eye(3), atol=1e-12)
    assert np.linalg.det(E) == pytest.approx(1.0, abs=1e-12)
