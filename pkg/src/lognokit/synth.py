"""Synthetic recordings with known ground truth.

Movements are drawn as Sigma-Lognormal models, synthesized to velocity,
differentiated to acceleration and degraded with white noise and linear
drift. Component strokes come in out-and-back pairs, so every movement
returns to its starting point as the protocol's joint movements do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidConfig
from .ingest import (
    Cohort,
    Label,
    MovementClass,
    Scenario,
    SensorLog,
    SessionMeta,
    TARGET_CLASSES,
    Wrist,
    wrap_angle,
)
from .siglognormal import LognormalComponent3D, SigmaLognormalModel, component_velocities

# stroke parameter ranges
SIGMA_RANGE = (0.15, 0.35)
MU_RANGE = (-1.6, -0.7)
D_RANGE = (0.05, 0.25)
TAIL_Z = 4.5  # stroke considered finished at exp(mu + TAIL_Z * sigma) after t0
EDGE_S = 0.05

# per-class Euler offsets (roll, pitch, yaw, rad) and the axis the arm mostly moves along
CLASS_POSE = {
    MovementClass.M1_SHOULDER_EXT_FLEX: ((0.0, 0.6, 0.0), (0.0, 1.0, 0.0)),
    MovementClass.M2_SHOULDER_ADD_ABD: ((0.6, 0.0, 0.2), (1.0, 0.0, 0.0)),
    MovementClass.M3_SHOULDER_ROTATION: ((0.0, -0.3, 0.8), (0.0, 0.0, 1.0)),
    MovementClass.M4_ELBOW_FLEX_EXT: ((-0.5, 0.3, -0.4), (0.7, 0.7, 0.0)),
    MovementClass.NON_TARGET: ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
}


def _stroke(rng, t0, mu=None, sigma=None, D=None, heading=None):
    sigma = rng.uniform(*SIGMA_RANGE) if sigma is None else sigma
    mu = rng.uniform(*MU_RANGE) if mu is None else mu
    D = rng.uniform(*D_RANGE) if D is None else D
    theta_s = rng.uniform(-math.pi, math.pi) if heading is None else heading
    theta_e = theta_s + rng.uniform(-0.6, 0.6)
    phi_s = rng.uniform(-0.5, 0.5)
    phi_e = float(np.clip(phi_s + rng.uniform(-0.3, 0.3), -1.2, 1.2))
    return [D, t0, mu, sigma, theta_s, theta_e, phi_s, phi_e]


def _return_of(p):
    # reversed heading, mirrored elevation: displacement is exactly negated
    D, t0, mu, sigma, ts, te, ps, pe = p
    return [D, t0, mu, sigma, ts + math.pi, te + math.pi, -ps, -pe]


def stroke_span(mu, sigma) -> float:
    return math.exp(mu + TAIL_Z * sigma)


def draw_movement(rng: np.random.Generator, n_components: int, duration_s: float | None = None,
                  min_sep_s: float | None = None, balanced: bool = True):
    """Draw one movement model.

    With ``min_sep_s`` the stroke onsets are at least that far apart and the
    duration follows from them; otherwise onsets are uniform over
    ``duration_s``. Returns ``(model, duration_s)``.
    """
    k = int(n_components)
    if k < 1:
        raise InvalidConfig("a movement needs at least one component")
    base = []
    if balanced:
        n_out = k // 2 if k > 1 else 1
        outs = [_stroke(rng, 0.0) for _ in range(n_out)]
        rets = [_return_of(p) for p in outs]
        if k == 1:
            rets = []
        elif k % 2 == 1:
            # split the last return stroke in two halves
            half = list(rets[-1])
            half[0] *= 0.5
            rets[-1] = half
            rets.append(list(half))
        base = outs + rets
        for p in base[n_out:]:
            p[2] = rng.uniform(*MU_RANGE)
            p[3] = rng.uniform(*SIGMA_RANGE)
        order = rng.permutation(len(base))
        base = [base[i] for i in order]
    else:
        base = [_stroke(rng, 0.0) for _ in range(k)]

    if min_sep_s is not None:
        t0 = EDGE_S
        for p in base:
            p[1] = t0
            t0 += min_sep_s + rng.uniform(0.0, 0.3)
        end = max(p[1] + stroke_span(p[2], p[3]) for p in base)
        duration_s = end + EDGE_S
    else:
        if duration_s is None:
            raise InvalidConfig("duration_s is required without min_sep_s")
        for p in base:
            span = stroke_span(p[2], p[3])
            room = duration_s - 2 * EDGE_S
            if span > room:
                # shorten the stroke so it fits
                p[2] = math.log(room * 0.9) - TAIL_Z * p[3]
                span = stroke_span(p[2], p[3])
            p[1] = rng.uniform(EDGE_S, EDGE_S + room - span)
    comps = tuple(LognormalComponent3D.from_array(p).normalized() for p in base)
    return SigmaLognormalModel(comps), float(duration_s)


def time_grid(duration_s: float, rate_hz: float) -> np.ndarray:
    n = int(round(duration_s * rate_hz)) + 1
    return np.arange(n) / rate_hz


def add_noise(signal: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """White Gaussian noise scaled to ``snr_db`` relative to the signal power."""
    if math.isinf(snr_db) and snr_db > 0:
        return signal.copy()
    power = float(np.mean(signal ** 2))
    sd = math.sqrt(power / 10 ** (snr_db / 10.0))
    return signal + rng.normal(0.0, sd, size=signal.shape)


def movement_log(model: SigmaLognormalModel, duration_s: float, rate_hz: float = 100.0,
                 noise_snr_db: float = math.inf, drift_slope: float = 0.0,
                 cls: MovementClass = MovementClass.M1_SHOULDER_EXT_FLEX,
                 rng: np.random.Generator | None = None, meta: SessionMeta | None = None,
                 t_offset: float = 0.0, pose_jitter: float = 0.15) -> SensorLog:
    """Render a model as a sensor log (acc, gyro, mag, euler channels)."""
    rng = np.random.default_rng(0) if rng is None else rng
    t = time_grid(duration_s, rate_hz)
    v = component_velocities(model.params(), t).sum(axis=0) @ model.frame.T
    acc = np.gradient(v, 1.0 / rate_hz, axis=0)
    acc = add_noise(acc, noise_snr_db, rng)
    if drift_slope:
        d = rng.normal(size=3)
        acc = acc + drift_slope * t[:, None] * (d / np.linalg.norm(d))

    euler = class_euler(v, cls, rate_hz, rng, pose_jitter=pose_jitter)
    gyro = np.gradient(np.unwrap(euler, axis=0), 1.0 / rate_hz, axis=0)
    mag = np.tile([20.0, 0.0, -40.0], (t.size, 1))
    return SensorLog(t=t + t_offset, acc=acc, gyro=gyro, mag=mag, euler=euler, rate_hz=rate_hz,
                     meta=meta or SessionMeta())


def class_euler(v: np.ndarray, cls: MovementClass, rate_hz: float, rng: np.random.Generator,
                pose_jitter: float = 0.15, noise: float = 0.02) -> np.ndarray:
    """Attitude channels: a class-typical pose swung along the class axis by
    the distance travelled."""
    offset, axis = CLASS_POSE[cls]
    h = 1.0 / rate_hz
    path = np.concatenate([[0.0], np.cumsum(0.5 * (np.linalg.norm(v[1:], axis=1) + np.linalg.norm(v[:-1], axis=1)) * h)])
    total = path[-1] if path[-1] > 0 else 1.0
    swing = np.sin(np.pi * path / total)  # out and back
    pose = np.array(offset) + rng.normal(0.0, pose_jitter, 3)
    amp = 0.8 * (1.0 + rng.normal(0.0, 0.15))
    e = pose[None, :] + amp * swing[:, None] * np.array(axis)[None, :]
    e = e + rng.normal(0.0, noise, e.shape)
    return wrap_angle(e)


@dataclass(frozen=True)
class SynthCohortConfig:
    n_subjects: int = 10
    movements_per_subject: int = 4
    duration_mean_s: float = 4.1
    duration_std_s: float = 1.0
    components_mean: float = 17.3
    components_std: float = 4.7
    noise_snr_db: float = 24.0
    noise_snr_std_db: float = 0.0
    drift_slope: float = 0.0
    seed: int = 0
    cohort: Cohort = Cohort.HEALTHY
    scenario: Scenario = Scenario.L1
    rate_hz: float = 100.0
    min_sep_s: float | None = None
    min_duration_s: float = 1.0

    def validate(self):
        if self.n_subjects < 1 or self.movements_per_subject < 1:
            raise InvalidConfig("subject and movement counts must be positive")
        if self.duration_std_s < 0 or self.components_std < 0 or self.noise_snr_std_db < 0:
            raise InvalidConfig("spreads must be non-negative")
        if self.components_mean < 1:
            raise InvalidConfig("components_mean must be at least 1")
        if self.duration_mean_s < 0.5:
            raise InvalidConfig("duration_mean_s must be at least 0.5 s")
        if math.isnan(self.noise_snr_db) or self.noise_snr_db == -math.inf:
            raise InvalidConfig("noise_snr_db must be finite, or +inf for noiseless")
        if not self.rate_hz > 0:
            raise InvalidConfig("rate_hz must be positive")
        if self.min_sep_s is not None and self.min_sep_s <= 0:
            raise InvalidConfig("min_sep_s must be positive")


class SynthCohort(NamedTuple):
    logs: list
    models: list
    classes: list


def synth_cohort(cfg: SynthCohortConfig) -> SynthCohort:
    """Generate ``n_subjects * movements_per_subject`` single-movement logs.

    Durations, component counts and per-movement noise levels are Gaussian
    draws clamped to valid ranges. Movement classes cycle through M1..M4.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    logs, models, classes = [], [], []
    for s in range(cfg.n_subjects):
        subject = f"{cfg.cohort.value[0]}{s + 1:03d}"
        wrist = Wrist.RIGHT if s % 2 == 0 else Wrist.LEFT
        for m in range(cfg.movements_per_subject):
            k = max(1, int(round(rng.normal(cfg.components_mean, cfg.components_std))))
            if cfg.min_sep_s is None:
                d = max(cfg.min_duration_s, rng.normal(cfg.duration_mean_s, cfg.duration_std_s))
                model, d = draw_movement(rng, k, duration_s=d)
            else:
                model, d = draw_movement(rng, k, min_sep_s=cfg.min_sep_s)
            snr = cfg.noise_snr_db
            if cfg.noise_snr_std_db and math.isfinite(snr):
                snr = rng.normal(snr, cfg.noise_snr_std_db)
            cls = TARGET_CLASSES[m % len(TARGET_CLASSES)]
            meta = SessionMeta(subject_id=subject, cohort=cfg.cohort, wrist=wrist,
                               scenario=cfg.scenario, session_index=1)
            logs.append(movement_log(model, d, cfg.rate_hz, snr, cfg.drift_slope, cls, rng, meta))
            models.append(model)
            classes.append(cls)
    return SynthCohort(logs, models, classes)


def cohort_labels(cohort: SynthCohort) -> list[list[Label]]:
    """Ground-truth label file contents: each log is one labelled movement."""
    return [[Label(float(log.t[0]), float(log.t[-1]), cls)] for log, cls in zip(cohort.logs, cohort.classes)]


# demonstration cohorts: typical healthy and patient durations and stroke counts.
# Noise is added to the acceleration, and integration plus low-pass filtering
# suppress most of it, so these levels sit far below the velocity-domain SNR
# the extractor reports (about 23 dB healthy, 20.5 dB patient).
DEMO_HEALTHY = SynthCohortConfig(
    duration_mean_s=4.1, duration_std_s=1.0, components_mean=17.3, components_std=4.7,
    noise_snr_db=6.0, cohort=Cohort.HEALTHY, seed=1,
)
DEMO_PATIENT = SynthCohortConfig(
    duration_mean_s=4.9, duration_std_s=0.8, components_mean=17.6, components_std=4.5,
    noise_snr_db=-1.0, cohort=Cohort.PATIENT, seed=2,
)


# ---------------------------------------------------------------------------
# classification and spotting benchmarks

def gesture_windows(n_per_class: int = 100, window_s: float = 4.0, rate_hz: float = 100.0,
                    pose_jitter: float = 0.8, noise_snr_db: float = 20.0, seed: int = 0,
                    n_subjects: int = 10):
    """Fixed-length windows of the four target movements.

    Each class has its own typical wrist attitude and swing axis; ``pose_jitter``
    (rad) spreads the per-window attitude and so controls class overlap.
    Returns ``(logs, classes)`` in a shuffled order.
    """
    rng = np.random.default_rng(seed)
    jobs = [(cls, i) for cls in TARGET_CLASSES for i in range(n_per_class)]
    order = rng.permutation(len(jobs))
    logs, classes = [], []
    for j in order:
        cls, i = jobs[j]
        subject = f"G{i % n_subjects + 1:03d}"
        model, _ = draw_movement(rng, int(rng.integers(2, 7)), duration_s=window_s)
        meta = SessionMeta(subject_id=subject, scenario=Scenario.L1)
        log = movement_log(model, window_s, rate_hz, noise_snr_db, cls=cls, rng=rng, meta=meta,
                           pose_jitter=pose_jitter)
        logs.append(log.slice(0, int(round(window_s * rate_hz))))
        classes.append(cls)
    return logs, classes


class SpottingSequence(NamedTuple):
    log: SensorLog
    velocity: np.ndarray
    target_times: list
    labels: list


def l2_sequence(rng: np.random.Generator, n_targets: int = 3, duration_s: float = 30.0,
                rate_hz: float = 100.0, distractor_ratio: float = 0.5, target_clearance_s: float = 0.3,
                noise_snr_db: float = math.inf) -> SpottingSequence:
    """A continuous L2 recording: ``n_targets`` planted target strokes among
    distractor motion whose peak speed is ``distractor_ratio`` of the targets'.

    ``target_times`` are the planted peak-speed instants.
    """
    edge = 2.5  # keeps spotted windows around targets unclamped
    targets = []
    while len(targets) < n_targets:
        tp = float(rng.uniform(edge, duration_s - edge))
        if all(abs(tp - q) >= 3.0 for q in targets):
            targets.append(tp)
    targets.sort()

    params, labels = [], []
    peak = None
    for i, tp in enumerate(targets):
        p = _stroke(rng, 0.0)
        c = LognormalComponent3D.from_array(p)
        p[1] = tp - c.peak_time + c.t0
        c = LognormalComponent3D.from_array(p)
        peak = c.peak_speed if peak is None else peak
        p[0] *= peak / c.peak_speed  # every target peaks at the same speed
        params.append(p)
        lo, hi = LognormalComponent3D.from_array(p).support()
        labels.append(Label(lo, hi, TARGET_CLASSES[i % len(TARGET_CLASSES)]))

    # distractors tile the gaps back to back, each starting as the previous one fades
    t = EDGE_S
    while t < duration_s - edge:
        p = _stroke(rng, 0.0)
        c = LognormalComponent3D.from_array(p)
        lo, hi = c.support()
        p[1] = t - (lo - c.t0)
        p[0] *= distractor_ratio * rng.uniform(0.8, 1.0) * peak / c.peak_speed
        c = LognormalComponent3D.from_array(p)
        lo, hi = c.support()
        if hi < duration_s - EDGE_S and all(hi < q - target_clearance_s or lo > q + target_clearance_s
                                            for q in targets):
            params.append(p)
        t += (hi - lo) * rng.uniform(0.8, 1.0)

    model = SigmaLognormalModel(tuple(LognormalComponent3D.from_array(p).normalized() for p in params))
    tg = time_grid(duration_s, rate_hz)
    v = component_velocities(model.params(), tg).sum(axis=0)
    acc = add_noise(np.gradient(v, 1.0 / rate_hz, axis=0), noise_snr_db, rng)
    euler = class_euler(v, MovementClass.NON_TARGET, rate_hz, rng)
    gyro = np.gradient(np.unwrap(euler, axis=0), 1.0 / rate_hz, axis=0)
    log = SensorLog(t=tg, acc=acc, gyro=gyro, mag=np.zeros_like(acc), euler=euler, rate_hz=rate_hz,
                    meta=SessionMeta(scenario=Scenario.L2))
    return SpottingSequence(log, v, targets, sorted(labels, key=lambda lab: lab.start_s))
