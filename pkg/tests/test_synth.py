import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from lognokit.errors import InvalidConfig
from lognokit.ingest import Scenario, TARGET_CLASSES
from lognokit.preprocess import integrate_velocity
from lognokit.siglognormal import synthesize_velocity
from lognokit.synth import (
    DEMO_HEALTHY,
    DEMO_PATIENT,
    SynthCohortConfig,
    add_noise,
    cohort_labels,
    draw_movement,
    gesture_windows,
    l2_sequence,
    synth_cohort,
)

NOISELESS = SynthCohortConfig(n_subjects=5, movements_per_subject=2, noise_snr_db=math.inf)


def rel_rms(v, ref):
    return math.sqrt(np.mean(np.sum((v - ref) ** 2, axis=1)) / np.mean(np.sum(ref ** 2, axis=1)))


def test_same_seed_same_logs():
    a = synth_cohort(replace(NOISELESS, noise_snr_db=20.0, drift_slope=0.01))
    b = synth_cohort(replace(NOISELESS, noise_snr_db=20.0, drift_slope=0.01))
    for x, y in zip(a.logs, b.logs):
        assert np.array_equal(x.channels(), y.channels()) and np.array_equal(x.t, y.t)
    c = synth_cohort(replace(NOISELESS, noise_snr_db=20.0, seed=1))
    assert not np.array_equal(a.logs[0].acc, c.logs[0].acc)


def test_noiseless_round_trip_through_integration():
    # central differences then trapezoids lose O(h^2); 400 Hz gets under 1e-3
    co = synth_cohort(replace(NOISELESS, rate_hz=400.0))
    for log, m in zip(co.logs, co.models):
        v = integrate_velocity(log.acc, log.rate_hz).v
        assert rel_rms(v, synthesize_velocity(m, log.t)) < 1e-3


def test_noiseless_round_trip_at_100_hz():
    co = synth_cohort(NOISELESS)
    for log, m in zip(co.logs, co.models):
        v = integrate_velocity(log.acc, log.rate_hz).v
        assert rel_rms(v, synthesize_velocity(m, log.t)) < 2e-2


def test_generated_movements_are_at_rest_at_both_ends():
    co = synth_cohort(NOISELESS)
    for log, m in zip(co.logs, co.models):
        v = synthesize_velocity(m, log.t)
        peak = np.abs(v).max()
        assert np.abs(v[0]).max() < 1e-6 * peak
        assert np.abs(v[-1]).max() < 1e-3 * peak


def test_balanced_strokes_return_home():
    rng = np.random.default_rng(0)
    for k in range(2, 9):
        m, d = draw_movement(rng, k, duration_s=4.0)
        t = np.arange(int(d * 2000) + 1) / 2000
        disp = trapezoid(synthesize_velocity(m, t), t, axis=0)
        assert len(m) == k
        assert np.linalg.norm(disp) < 1e-2 * sum(c.D for c in m.components)


def test_generator_means_follow_the_configuration():
    cfg = SynthCohortConfig(n_subjects=50, movements_per_subject=4, components_mean=17.3, components_std=4.7,
                            duration_mean_s=4.1, duration_std_s=1.0, seed=3)
    ks, ds = [], []
    co = synth_cohort(replace(cfg, noise_snr_db=math.inf))
    for log, m in zip(co.logs, co.models):
        ks.append(len(m))
        ds.append(log.duration_s)
    assert len(ks) == 200
    assert abs(np.mean(ks) - 17.3) <= 0.05 * 17.3
    assert abs(np.mean(ds) - 4.1) <= 0.05 * 4.1


def test_noise_level_is_as_requested():
    rng = np.random.default_rng(1)
    sig = rng.normal(size=(20000, 3))
    noisy = add_noise(sig, 10.0, rng)
    measured = 10 * math.log10(np.mean(sig ** 2) / np.mean((noisy - sig) ** 2))
    assert measured == pytest.approx(10.0, abs=0.1)
    assert np.array_equal(add_noise(sig, math.inf, rng), sig)


@pytest.mark.parametrize("bad", [
    dict(n_subjects=0), dict(movements_per_subject=0), dict(noise_snr_db=float("nan")),
    dict(noise_snr_db=-math.inf), dict(components_mean=0.5), dict(duration_std_s=-1.0), dict(rate_hz=0.0),
])
def test_invalid_configs(bad):
    with pytest.raises(InvalidConfig):
        synth_cohort(replace(NOISELESS, **bad))


def test_labels_cover_each_log():
    co = synth_cohort(replace(NOISELESS, n_subjects=1, movements_per_subject=4))
    labs = cohort_labels(co)
    assert [lab[0].cls for lab in labs] == list(TARGET_CLASSES)
    assert all(lab[0].start_s == log.t[0] and lab[0].end_s == log.t[-1] for lab, log in zip(labs, co.logs))


def test_demo_cohorts_share_the_layout():
    assert DEMO_HEALTHY.cohort.value == "Healthy" and DEMO_PATIENT.cohort.value == "Patient"
    assert (DEMO_HEALTHY.duration_mean_s, DEMO_HEALTHY.components_mean) == (4.1, 17.3)
    assert (DEMO_PATIENT.duration_mean_s, DEMO_PATIENT.components_mean) == (4.9, 17.6)


def test_gesture_windows_are_balanced():
    logs, classes = gesture_windows(n_per_class=5, seed=1)
    assert len(logs) == 20
    assert sorted(c.value for c in classes) == sorted([c.value for c in TARGET_CLASSES] * 5)
    assert all(len(log) == 400 for log in logs)


def test_l2_sequence_plants_targets():
    sq = l2_sequence(np.random.default_rng(2))
    assert len(sq.target_times) == 3 and sq.log.meta.scenario is Scenario.L2
    speed = np.linalg.norm(sq.velocity, axis=1)
    rate = sq.log.rate_hz
    for tp in sq.target_times:
        assert speed[int(round(tp * rate))] == pytest.approx(speed.max(), rel=0.05)
    assert len(sq.labels) == 3
