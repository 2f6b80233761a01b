"""3D Sigma-Lognormal velocity model: synthesis, extraction and scoring.

A movement's velocity is modelled as a sum of lognormal-speed strokes::

    v(t) = sum_i L_i(t) * u(theta_i(t), phi_i(t))

where ``L_i`` is the lognormal speed profile of stroke ``i`` and its
direction ``u`` moves linearly in azimuth/elevation with the fraction of
the stroke's distance already covered.

Extraction fits the model greedily in a canonical frame (principal axes of
the observed velocity) so that results do not depend on how the sensor
frame happens to be oriented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np
from scipy.special import erf

from .errors import DegenerateInput, IllConditioned, NoPeak, ZeroSignal
from .ingest import wrap_angle
from .segmentation import local_maxima

SNR_CAP_DB = 100.0
SQRT_2PI = math.sqrt(2.0 * math.pi)
HALF_MAX_LOG_WIDTH = math.sqrt(2.0 * math.log(2.0))
N_PARAMS = 8
MIN_SIGMA = 1e-3
MIN_D = 1e-9
MAX_SIGMA = 3.0
MU_RANGE = (-8.0, 4.0)
_Z01 = NormalDist().inv_cdf(0.01)


@dataclass(frozen=True)
class LognormalComponent3D:
    D: float
    t0: float
    mu: float
    sigma: float
    theta_s: float = 0.0
    theta_e: float = 0.0
    phi_s: float = 0.0
    phi_e: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.D, self.t0, self.mu, self.sigma,
                         self.theta_s, self.theta_e, self.phi_s, self.phi_e])

    @classmethod
    def from_array(cls, p) -> "LognormalComponent3D":
        return cls(*(float(x) for x in p))

    def normalized(self) -> "LognormalComponent3D":
        """Azimuths mapped into (-pi, pi] (the sweep is unchanged), elevations
        clipped to [-pi/2, pi/2]."""
        ts = _wrap(self.theta_s)
        te = _wrap(ts + _wrap(self.theta_e - self.theta_s))
        half = math.pi / 2
        return replace(self, theta_s=ts, theta_e=te,
                       phi_s=min(max(self.phi_s, -half), half),
                       phi_e=min(max(self.phi_e, -half), half))

    @property
    def peak_time(self) -> float:
        return self.t0 + math.exp(self.mu - self.sigma ** 2)

    @property
    def peak_speed(self) -> float:
        return self.D / (self.sigma * SQRT_2PI) * math.exp(self.sigma ** 2 / 2 - self.mu)

    def support(self, lo: float = 0.01, hi: float = 0.99) -> tuple[float, float]:
        """Times at which the covered-distance fraction equals ``lo`` and ``hi``."""
        nd = NormalDist()
        return (self.t0 + math.exp(self.mu + self.sigma * nd.inv_cdf(lo)),
                self.t0 + math.exp(self.mu + self.sigma * nd.inv_cdf(hi)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("D", "t0", "mu", "sigma", "theta_s", "theta_e", "phi_s", "phi_e")}


def _wrap(x: float) -> float:
    return x - 2 * math.pi * math.ceil((x - math.pi) / (2 * math.pi))


@dataclass(frozen=True, eq=False)
class SigmaLognormalModel:
    """Components sorted by ``t0``; ``frame`` maps model axes to sensor axes
    (columns are the model's x, y, z axes in sensor coordinates)."""

    components: tuple[LognormalComponent3D, ...] = ()
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        comps = tuple(sorted(self.components, key=lambda c: c.t0))
        object.__setattr__(self, "components", comps)
        f = np.array(self.frame, dtype=float).reshape(3, 3)
        f.setflags(write=False)
        object.__setattr__(self, "frame", f)

    def __len__(self):
        return len(self.components)

    def params(self) -> np.ndarray:
        if not self.components:
            return np.zeros((0, N_PARAMS))
        return np.vstack([c.as_array() for c in self.components])

    @classmethod
    def from_params(cls, P, frame=None) -> "SigmaLognormalModel":
        comps = tuple(LognormalComponent3D.from_array(p) for p in np.atleast_2d(P) if len(p))
        return cls(comps, np.eye(3) if frame is None else frame)

    def to_dict(self) -> dict:
        return {"frame": self.frame.tolist(), "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d) -> "SigmaLognormalModel":
        if isinstance(d, list):  # bare component array
            d = {"components": d}
        comps = tuple(LognormalComponent3D(**c) for c in d["components"])
        return cls(comps, d.get("frame", np.eye(3)))


# ---------------------------------------------------------------------------
# closed forms

def lognormal_speed(c: LognormalComponent3D, t):
    """Speed profile of one stroke; zero for ``t <= t0``."""
    t = np.asarray(t, dtype=float)
    dt = t - c.t0
    pos = dt > 0
    safe = np.where(pos, dt, 1.0)
    z = (np.log(safe) - c.mu) / c.sigma
    out = np.where(pos, c.D / (c.sigma * SQRT_2PI * safe) * np.exp(-0.5 * z * z), 0.0)
    return float(out) if out.ndim == 0 else out


def cumulative_fraction(c: LognormalComponent3D, t):
    """Fraction of the stroke distance covered by time ``t``."""
    t = np.asarray(t, dtype=float)
    dt = t - c.t0
    pos = dt > 0
    safe = np.where(pos, dt, 1.0)
    out = np.where(pos, 0.5 * (1.0 + erf((np.log(safe) - c.mu) / (c.sigma * math.sqrt(2.0)))), 0.0)
    return float(out) if out.ndim == 0 else out


def _profiles(P: np.ndarray, t: np.ndarray):
    """Speed and covered fraction for each row of the parameter array ``P``."""
    D, t0, mu, sigma = (P[:, k:k + 1] for k in range(4))
    dt = t[None, :] - t0
    pos = dt > 0
    safe = np.where(pos, dt, 1.0)
    z = (np.log(safe) - mu) / sigma
    speed = np.where(pos, D / (sigma * SQRT_2PI * safe) * np.exp(-0.5 * z * z), 0.0)
    frac = np.where(pos, 0.5 * (1.0 + erf(z / math.sqrt(2.0))), 0.0)
    return speed, frac


def component_velocities(P: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Velocity contribution of each parameter row, shape ``(k, n, 3)``.

    Azimuth moves along the shorter arc between its start and end values.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    t = np.asarray(t, dtype=float)
    if P.shape[0] == 0:
        return np.zeros((0, t.size, 3))
    speed, frac = _profiles(P, t)
    return _directed(P, speed, frac)


def _directed(P: np.ndarray, speed: np.ndarray, frac: np.ndarray) -> np.ndarray:
    ts = P[:, 4:5]
    sweep = P[:, 5:6] - ts
    sweep = sweep - 2 * np.pi * np.ceil((sweep - np.pi) / (2 * np.pi))
    theta = ts + sweep * frac
    phi = P[:, 6:7] + (P[:, 7:8] - P[:, 6:7]) * frac
    cphi = np.cos(phi)
    return np.stack([speed * cphi * np.cos(theta), speed * cphi * np.sin(theta), speed * np.sin(phi)], axis=-1)


def _perturbed_velocities(P: np.ndarray, h: np.ndarray, t: np.ndarray, speed, frac, contrib):
    """Velocities of every single-parameter forward perturbation of ``P``.

    Row ``i * 8 + j`` has parameter ``j`` of stroke ``i`` raised by
    ``h[i, j]``. The speed profile is linear in ``D`` and does not depend on
    the angles, so only the timing perturbations need a fresh profile.
    """
    k = P.shape[0]
    out = np.empty((k, N_PARAMS) + contrib.shape[1:])
    out[:, 0] = contrib * ((P[:, 0] + h[:, 0]) / P[:, 0])[:, None, None]
    timing = np.repeat(P, 3, axis=0)
    timing[np.arange(3 * k), np.tile([1, 2, 3], k)] += h[:, 1:4].reshape(-1)
    sp, fr = _profiles(timing, t)
    out[:, 1:4] = _directed(timing, sp, fr).reshape((k, 3) + contrib.shape[1:])
    angles = np.repeat(P, 4, axis=0)
    angles[np.arange(4 * k), np.tile([4, 5, 6, 7], k)] += h[:, 4:].reshape(-1)
    out[:, 4:] = _directed(angles, np.repeat(speed, 4, axis=0),
                           np.repeat(frac, 4, axis=0)).reshape((k, 4) + contrib.shape[1:])
    return out.reshape((k * N_PARAMS,) + contrib.shape[1:])


def synthesize_velocity(m: SigmaLognormalModel, t_grid) -> np.ndarray:
    """Model velocity on ``t_grid`` in sensor coordinates, shape ``(n, 3)``."""
    t = np.asarray(t_grid, dtype=float)
    v = component_velocities(m.params(), t).sum(axis=0) if len(m) else np.zeros((t.size, 3))
    return v @ m.frame.T


def compute_snr(v_obs, v_rec) -> float:
    """Reconstruction SNR in dB, capped at :data:`SNR_CAP_DB`."""
    a = np.asarray(v_obs, dtype=float)
    b = np.asarray(v_rec, dtype=float)
    if a.shape != b.shape:
        raise ValueError("observed and reconstructed signals differ in shape")
    if a.shape[0] < 2:
        raise ValueError("SNR needs at least 2 samples")
    sig = float(np.sum(a * a))
    if sig == 0:
        raise ZeroSignal("observed signal has zero energy")
    res = float(np.sum((a - b) ** 2))
    if res < 1e-20 * sig:
        return SNR_CAP_DB
    return min(10.0 * math.log10(sig / res), SNR_CAP_DB)


# ---------------------------------------------------------------------------
# initial estimates

def _crossing(t, r, i_peak, level, step):
    i = i_peak
    n = r.size
    while 0 <= i + step < n:
        j = i + step
        if r[j] < level:
            # linear interpolation between j (below) and i (above)
            w = (r[i] - level) / (r[i] - r[j])
            return t[i] + w * (t[j] - t[i])
        i = j
    return None


def _timing_from_points(t0, t_m, t_a, v_m):
    x_m = np.log(t_m - t0)
    sigma = np.abs(np.log(t_a - t0) - x_m) / HALF_MAX_LOG_WIDTH
    mu = x_m + sigma ** 2
    D = v_m * sigma * SQRT_2PI * np.exp(mu - sigma ** 2 / 2)
    return D, mu, sigma


def estimate_component(speed_residual, t_grid, n_coarse: int = 24, n_fine: int = 16,
                       peak_index: int | None = None) -> LognormalComponent3D:
    """Initial timing and amplitude of the dominant stroke in a speed signal.

    Uses the peak ``(t_m, v_m)`` and its half-maximum crossings
    ``t_a < t_m < t_b``. For each candidate ``t0`` left of ``t_a``, the peak
    and left half-max crossing fix ``sigma`` and ``mu`` in closed form and the
    peak value fixes ``D``; the candidate with the smallest squared error on
    ``[t_a, t_b]`` wins. A finer grid is then searched around the best coarse
    candidate. Angles are left at zero.

    ``peak_index`` selects a peak other than the global maximum.
    """
    r = np.asarray(speed_residual, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if r.size == 0 or not np.max(r) > 0:
        raise NoPeak("residual has no positive maximum")
    i_m = int(np.argmax(r)) if peak_index is None else int(peak_index)
    v_m = float(r[i_m])
    t_m = float(t[i_m])
    # refine the peak with a parabola through the three samples around it
    if 0 < i_m < r.size - 1:
        y0, y1, y2 = r[i_m - 1], r[i_m], r[i_m + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            t_m = float(t[i_m] + off * (t[i_m + 1] - t[i_m]))
            v_m = float(y1 - 0.25 * (y0 - y2) * off)
    t_a = _crossing(t, r, i_m, 0.5 * v_m, -1)
    t_b = _crossing(t, r, i_m, 0.5 * v_m, +1)
    if t_a is None or t_b is None or not t_a < t_m < t_b:
        raise IllConditioned("half-maximum crossings not found around the peak")

    width = 2.0 * (t_b - t_a)
    win = (t >= t_a) & (t <= t_b)
    tw, rw = t[win], r[win]

    def score(cands):
        D, mu, sigma = _timing_from_points(cands, t_m, t_a, v_m)
        P = np.column_stack([D, cands, mu, np.maximum(sigma, MIN_SIGMA)])
        speed, _ = _profiles(P, tw)
        return ((speed - rw[None, :]) ** 2).sum(axis=1), D, mu, sigma

    coarse = t_a - width * np.arange(1, n_coarse + 1) / n_coarse
    err, *_ = score(coarse)
    best = int(np.argmin(err))
    step = width / n_coarse
    fine = coarse[best] + step * np.linspace(-1, 1, 2 * n_fine + 1)
    fine = fine[fine < t_a - 1e-9 * max(1.0, abs(t_a))]
    cands = np.concatenate([coarse, fine])
    err, D, mu, sigma = score(cands)
    k = int(np.argmin(err))
    return LognormalComponent3D(D=float(D[k]), t0=float(cands[k]), mu=float(mu[k]),
                                sigma=float(max(sigma[k], MIN_SIGMA)))


def fit_angles(c: LognormalComponent3D, v_resid, t_grid) -> LognormalComponent3D:
    """Fit start/end azimuth and elevation of ``c`` to a residual velocity.

    Direction samples over the stroke's 1%-99% support are regressed on the
    covered fraction, weighted by the stroke's speed.
    """
    t = np.asarray(t_grid, dtype=float)
    v = np.asarray(v_resid, dtype=float)
    lo, hi = c.support()
    mag = np.linalg.norm(v, axis=1)
    sel = (t >= lo) & (t <= hi)
    if not np.any(sel) or not mag[sel].max() > 0:
        return c
    # directions of near-zero residual samples are meaningless; drop them
    sel &= mag >= 0.1 * mag[sel].max()
    w = lognormal_speed(c, t[sel])
    if not w.sum() > 0:
        return c
    vs = v[sel]
    F = cumulative_fraction(c, t[sel])
    ref = math.atan2(float(w @ vs[:, 1]), float(w @ vs[:, 0]))
    theta = ref + wrap_angle(np.arctan2(vs[:, 1], vs[:, 0]) - ref)
    phi = np.arcsin(np.clip(vs[:, 2] / mag[sel], -1.0, 1.0))

    def line(y):
        # weighted least squares y ~ a + b F
        sw = w.sum()
        fm = (w @ F) / sw
        ym = (w @ y) / sw
        sff = w @ (F - fm) ** 2
        if sw <= 0 or sff < 1e-12 * sw:
            return ym, ym
        b = (w @ ((F - fm) * (y - ym))) / sff
        a = ym - b * fm
        return a, a + b

    ts, te = line(theta)
    ps, pe = line(phi)
    return replace(c, theta_s=float(ts), theta_e=float(te), phi_s=float(ps), phi_e=float(pe)).normalized()


# ---------------------------------------------------------------------------
# nonlinear refinement

@dataclass
class RefineResult:
    model: SigmaLognormalModel
    objective: float
    initial_objective: float
    iterations: int
    singular: bool = False
    history: list = field(default_factory=list, repr=False)


DEFAULT_LOWER = np.array([MIN_D, -np.inf, MU_RANGE[0], MIN_SIGMA, -np.inf, -np.inf, -np.pi / 2, -np.pi / 2])
DEFAULT_UPPER = np.array([np.inf, np.inf, MU_RANGE[1], MAX_SIGMA, np.inf, np.inf, np.pi / 2, np.pi / 2])


def _project(P: np.ndarray, lower=DEFAULT_LOWER, upper=DEFAULT_UPPER) -> np.ndarray:
    return np.clip(P, lower, upper)


def _fd_steps(P: np.ndarray) -> np.ndarray:
    h = 1e-6 * np.maximum(np.abs(P), 1.0)
    h[:, 0] = 1e-6 * P[:, 0]
    return h


def refine_params(P, v_obs, t, iters: int = 30, active=None, fixed=None, bounds=None,
                  lam0: float = 1e-3, lam_up: float = 10.0, lam_max: float = 1e9,
                  rtol: float = 1e-4, margin_s: float = 0.1) -> RefineResult:
    """Damped Gauss-Newton (Levenberg-Marquardt) on a parameter array.

    Only rows listed in ``active`` move; the others, plus the optional
    ``fixed`` velocity, are held constant. Jacobian columns come from
    forward differences of single-stroke syntheses. A step is accepted only
    if it lowers the objective. ``bounds`` is an optional ``(lower, upper)``
    pair of per-parameter limits (length 8 each); parameters are clipped
    back into them after every step.

    The fit only looks at samples where the active strokes carry weight
    (five log-time spreads either side, plus ``margin_s``), so the reported
    objective covers that window.
    """
    lower, upper = (DEFAULT_LOWER, DEFAULT_UPPER) if bounds is None else bounds
    lower = np.maximum(lower, DEFAULT_LOWER)
    upper = np.minimum(upper, DEFAULT_UPPER)
    P = _project(np.atleast_2d(np.asarray(P, dtype=float)), lower, upper)
    v_obs = np.asarray(v_obs, dtype=float)
    t = np.asarray(t, dtype=float)
    k = P.shape[0]
    act = np.arange(k) if active is None else np.asarray(sorted(set(int(i) for i in active)), dtype=int)
    inactive = np.setdiff1d(np.arange(k), act)
    base = np.zeros_like(v_obs) if fixed is None else np.asarray(fixed, dtype=float)
    if act.size:
        lo = np.min(P[act, 1] + np.exp(P[act, 2] - 5 * P[act, 3])) - margin_s
        hi = np.max(P[act, 1] + np.exp(P[act, 2] + 5 * P[act, 3])) + margin_s
        win = (t >= lo) & (t <= hi)
        if win.sum() >= 2:
            t, v_obs, base = t[win], v_obs[win], base[win]
    if inactive.size:
        base = base + component_velocities(P[inactive], t).sum(axis=0)
    target = v_obs - base

    Pa = P[act]
    speed, frac = _profiles(Pa, t)
    contrib = _directed(Pa, speed, frac)
    resid = target - contrib.sum(axis=0)
    obj = float(np.sum(resid ** 2))
    obj0 = obj
    history = [obj]
    lam = lam0
    singular = False
    n_act = Pa.shape[0]
    it = 0
    if n_act == 0:
        return RefineResult(SigmaLognormalModel.from_params(P), obj, obj0, 0, False, history)

    for it in range(1, iters + 1):
        h = _fd_steps(Pa)
        flat_h = h.reshape(-1)
        dcontrib = _perturbed_velocities(Pa, h, t, speed, frac, contrib) - np.repeat(contrib, N_PARAMS, axis=0)
        J = (dcontrib / flat_h[:, None, None]).reshape(flat_h.size, -1)  # (p, n*3)
        A = J @ J.T
        g = J @ resid.reshape(-1)
        dA = np.diag(A).copy()
        dA = np.maximum(dA, 1e-12 * max(float(dA.max()), 1e-300))
        accepted = False
        while lam <= lam_max:
            try:
                step = np.linalg.solve(A + lam * np.diag(dA), g)
            except np.linalg.LinAlgError:
                lam *= lam_up
                continue
            Pn = _project(Pa + step.reshape(n_act, N_PARAMS), lower, upper)
            sn, fn = _profiles(Pn, t)
            cn = _directed(Pn, sn, fn)
            rn = target - cn.sum(axis=0)
            on = float(np.sum(rn ** 2))
            if on < obj:
                accepted = True
                break
            lam *= lam_up
        if not accepted:
            singular = True
            break
        rel = (obj - on) / obj if obj > 0 else 0.0
        Pa, contrib, resid, obj, speed, frac = Pn, cn, rn, on, sn, fn
        history.append(obj)
        lam = max(lam / lam_up, 1e-12)
        if rel < rtol or obj == 0:
            break

    P = P.copy()
    P[act] = Pa
    return RefineResult(SigmaLognormalModel.from_params(P), obj, obj0, it, singular, history)


def refine_model(m: SigmaLognormalModel, v_obs, t_grid, iters: int = 30) -> RefineResult:
    """Jointly refine every component of ``m`` against ``v_obs``.

    ``v_obs`` is in sensor coordinates; the model keeps its frame. The result
    carries the best model found, the objective trace, and a ``singular``
    flag set when damping was exhausted without descent.
    """
    if len(m) == 0:
        raise ValueError("cannot refine an empty model")
    local = np.asarray(v_obs, dtype=float) @ m.frame
    res = refine_params(m.params(), local, t_grid, iters=iters)
    res.model = SigmaLognormalModel(res.model.components, m.frame)
    return res


# ---------------------------------------------------------------------------
# extraction

@dataclass(frozen=True)
class ExtractConfig:
    target_snr_db: float = 25.0
    max_components: int = 40
    min_peak_fraction: float = 0.02
    refine_iters: int = 30
    final_iters: int = 0
    canonical_frame: bool = True
    local_refine: bool = True
    backfit_passes: int = 1
    n_starts: int = 3
    fallback_starts: bool = True
    prune_tries: int = 3


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    model: SigmaLognormalModel
    v_rec: np.ndarray
    snr_db: float
    n_components: int
    duration_s: float
    snr_trace: tuple[float, ...] = ()


def principal_frame(v: np.ndarray) -> np.ndarray:
    """Right-handed rotation whose columns are the principal axes of ``v``.

    Axes are ordered by decreasing energy; each of the first two is signed so
    that the third moment of the projected velocity is non-negative.
    """
    M = v.T @ v
    w, E = np.linalg.eigh(M)
    E = E[:, ::-1]
    for j in range(2):
        s = float(np.sum((v @ E[:, j]) ** 3))
        if s < 0:
            E[:, j] = -E[:, j]
    E[:, 2] = np.cross(E[:, 0], E[:, 1])
    return E


def _supports(P: np.ndarray):
    nd = NormalDist()
    z_lo, z_hi = nd.inv_cdf(0.01), nd.inv_cdf(0.99)
    return P[:, 1] + np.exp(P[:, 2] + P[:, 3] * z_lo), P[:, 1] + np.exp(P[:, 2] + P[:, 3] * z_hi)


def _overlapping(P: np.ndarray, new: int) -> np.ndarray:
    lo, hi = _supports(P)
    return np.flatnonzero((lo <= hi[new]) & (hi >= lo[new]))


def _start_peaks(rspeed: np.ndarray, n: int) -> list[int]:
    """The tallest residual peaks, each at least half the global maximum."""
    i_max = int(np.argmax(rspeed))
    peaks = [i for i in local_maxima(rspeed) if i != i_max and rspeed[i] >= 0.5 * rspeed[i_max]]
    peaks.sort(key=lambda i: (-rspeed[i], i))
    return [i_max] + peaks[:max(n, 1) - 1]


def _try_candidate(P, i_peak, vl, rspeed, resid, t, config, bounds):
    try:
        c = estimate_component(rspeed, t, peak_index=i_peak)
    except (NoPeak, IllConditioned):
        return None
    c = fit_angles(c, resid, t)
    cand = np.vstack([P, c.as_array()])
    active = _overlapping(cand, cand.shape[0] - 1) if config.local_refine else None
    res = refine_params(cand, vl, t, iters=config.refine_iters, active=active, bounds=bounds)
    cand = res.model.params()
    rec = component_velocities(cand, t).sum(axis=0)
    return cand, rec, compute_snr(vl, rec)


def _backfit_one(P, j, vl, t, snr, config, bounds):
    """Re-estimate stroke ``j`` from the residual it leaves behind.

    Returns ``(P, rec, snr)`` if the new stroke improves the SNR, else None.
    """
    others = np.delete(P, j, axis=0)
    resid = vl - component_velocities(others, t).sum(axis=0)
    lo, hi = LognormalComponent3D.from_array(P[j]).support()
    rspeed = np.where((t >= lo) & (t <= hi), np.linalg.norm(resid, axis=1), 0.0)
    try:
        c = estimate_component(rspeed, t)
    except (NoPeak, IllConditioned):
        return None
    c = fit_angles(c, resid, t)
    cand = np.vstack([others, c.as_array()])
    new = cand.shape[0] - 1
    active = _overlapping(cand, new) if config.local_refine else None
    res = refine_params(cand, vl, t, iters=config.refine_iters, active=active, bounds=bounds)
    cand = res.model.params()
    rec = component_velocities(cand, t).sum(axis=0)
    cand_snr = compute_snr(vl, rec)
    if cand_snr > snr:
        return cand, rec, cand_snr
    return None


def _prune(P, rec, snr, vl, t, config, bounds):
    """Drop strokes the model can do without.

    Weakest first (up to ``prune_tries`` of them), each stroke is removed and
    the strokes overlapping it are re-fitted; the removal stands if the
    target SNR is still met.
    """
    if snr < config.target_snr_db:
        return P, rec, snr
    tested = np.zeros(P.shape[0], dtype=bool)
    tries = 0
    while P.shape[0] > 1 and not tested.all() and tries < config.prune_tries:
        tries += 1
        j = int(np.flatnonzero(~tested)[np.argmin(P[~tested, 0])])
        tested[j] = True
        lo, hi = _supports(P)
        active = np.delete((lo <= hi[j]) & (hi >= lo[j]), j)
        trial = np.delete(P, j, axis=0)
        if active.any():
            trial = refine_params(trial, vl, t, iters=config.refine_iters, bounds=bounds,
                                  active=np.flatnonzero(active) if config.local_refine else None).model.params()
        r2 = component_velocities(trial, t).sum(axis=0)
        s2 = compute_snr(vl, r2)
        if s2 >= config.target_snr_db:
            P, rec, snr = trial, r2, s2
            tested = np.delete(tested, j)
    return P, rec, snr


def _extraction_bounds(t, speed):
    """Plausibility limits for strokes of one movement.

    No stroke may carry much more distance than the whole path, nor have a
    time scale beyond the span where the movement is active. This rules out
    pairs of huge opposing strokes that cancel each other.
    """
    h = float(np.median(np.diff(t)))
    path = float(np.sum(0.5 * (speed[1:] + speed[:-1])) * h)
    active = np.flatnonzero(speed >= 0.01 * speed.max())
    t_first, t_last = float(t[active[0]]), float(t[active[-1]])
    extent = max(t_last - t_first, 10 * h)
    lower = DEFAULT_LOWER.copy()
    upper = DEFAULT_UPPER.copy()
    upper[0] = 2.0 * path
    lower[1] = t_first - extent
    upper[1] = t_last
    upper[2] = math.log(t_last - lower[1])
    return lower, upper


def extract_model(v_obs, t_grid, config: ExtractConfig = ExtractConfig()) -> ReconstructionResult:
    """Greedy Sigma-Lognormal decomposition of an observed 3D velocity.

    Each round estimates a stroke on the residual speed, fits its direction,
    refines it together with the strokes it overlaps, and keeps it only if
    the SNR improves. Extraction stops at the target SNR, when the residual
    peak falls below ``min_peak_fraction`` of the original peak, or at
    ``max_components``.

    Raises
    ------
    DegenerateInput
        Shorter than 0.5 s, non-finite, or identically zero.
    """
    v = np.asarray(v_obs, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] != t.shape[0]:
        raise ValueError("v_obs must have shape (len(t_grid), 3)")
    duration = float(t[-1] - t[0]) if t.size else 0.0
    if duration < 0.5 - 1e-9:
        raise DegenerateInput(f"movement lasts {duration:.3f} s, need at least 0.5 s")
    if not np.all(np.isfinite(v)):
        raise DegenerateInput("velocity contains non-finite values")
    if not np.any(v != 0):
        raise DegenerateInput("velocity is identically zero")

    frame = principal_frame(v) if config.canonical_frame else np.eye(3)
    vl = v @ frame
    speed0 = np.linalg.norm(vl, axis=1)
    peak0 = float(speed0.max())
    bounds = _extraction_bounds(t, speed0)
    P = np.zeros((0, N_PARAMS))
    rec = np.zeros_like(vl)
    snr = compute_snr(vl, rec)
    trace = []
    while P.shape[0] < config.max_components and snr < config.target_snr_db:
        resid = vl - rec
        rspeed = np.linalg.norm(resid, axis=1)
        if rspeed.max() < config.min_peak_fraction * peak0:
            break
        best = None
        for i_peak in _start_peaks(rspeed, config.n_starts):
            out = _try_candidate(P, i_peak, vl, rspeed, resid, t, config, bounds)
            if out is not None and (best is None or out[2] > best[2]):
                best = out
            if config.fallback_starts and best is not None and best[2] > snr:
                break
        if best is None or not best[2] > snr:
            break
        cand, cand_rec, cand_snr = best
        P, rec, snr = cand, cand_rec, cand_snr
        trace.append(snr)

    # tidy-up of a model that meets the target; pointless on a noise floor
    for _ in range(config.backfit_passes if snr >= config.target_snr_db else 0):
        improved = False
        for j in range(P.shape[0]):
            out = _backfit_one(P, j, vl, t, snr, config, bounds)
            if out is not None:
                P, rec, snr = out
                trace.append(snr)
                improved = True
        if not improved:
            break

    if config.final_iters and P.shape[0]:
        res = refine_params(P, vl, t, iters=config.final_iters, bounds=bounds)
        P2 = res.model.params()
        rec2 = component_velocities(P2, t).sum(axis=0)
        snr2 = compute_snr(vl, rec2)
        if snr2 > snr:
            P, rec, snr = P2, rec2, snr2
            trace.append(snr)

    if config.prune_tries:
        P, rec, snr = _prune(P, rec, snr, vl, t, config, bounds)

    comps = tuple(LognormalComponent3D.from_array(p).normalized() for p in P)
    model = SigmaLognormalModel(comps, frame)
    return ReconstructionResult(
        model=model,
        v_rec=rec @ frame.T,
        snr_db=snr,
        n_components=len(model),
        duration_s=duration,
        snr_trace=tuple(trace),
    )
