"""Drift removal, smoothing and velocity reconstruction.

The per-segment chain is ``detrend -> lowpass -> integrate_velocity``; see
:func:`velocity_from_acc`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import filtfilt

from .errors import InvalidCutoff, TooFewSamples

DEFAULT_CUTOFF_HZ = 10.0


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    t: np.ndarray
    v: np.ndarray
    speed: np.ndarray

    def __len__(self):
        return self.t.shape[0]


def detrend(signal, t=None) -> np.ndarray:
    """Subtract the least-squares line from ``signal`` (column-wise for 2-D input).

    ``t`` defaults to the sample index, which gives the same result as real
    time on a uniform grid.
    """
    x = np.asarray(signal, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples("detrend needs at least 2 samples")
    tt = np.arange(n, dtype=float) if t is None else np.asarray(t, dtype=float)
    tc = tt - tt.mean()
    denom = float(tc @ tc)
    if denom == 0:
        raise TooFewSamples("time grid is degenerate")
    xm = x.mean(axis=0)
    slope = np.tensordot(tc, x - xm, axes=(0, 0)) / denom
    shape = (n,) + (1,) * (x.ndim - 1)
    return x - xm - tc.reshape(shape) * slope


def butterworth_biquad(rate_hz: float, cutoff_hz: float):
    """Second-order Butterworth low-pass coefficients ``(b, a)`` via the
    bilinear transform with frequency prewarping."""
    if not (0 < cutoff_hz < rate_hz / 2):
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz must lie in (0, {rate_hz / 2}) Hz")
    k = math.tan(math.pi * cutoff_hz / rate_hz)
    q = math.sqrt(2.0)
    norm = 1.0 / (1.0 + q * k + k * k)
    b0 = k * k * norm
    b = np.array([b0, 2 * b0, b0])
    a = np.array([1.0, 2 * (k * k - 1) * norm, (1 - q * k + k * k) * norm])
    return b, a


def lowpass(signal, rate_hz: float, cutoff_hz: float = DEFAULT_CUTOFF_HZ) -> np.ndarray:
    """Zero-phase low-pass: the Butterworth biquad run forward then backward.

    Edges are handled by odd extension, so a constant passes unchanged.
    """
    b, a = butterworth_biquad(rate_hz, cutoff_hz)
    x = np.asarray(signal, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples("lowpass needs at least 2 samples")
    padlen = min(3 * max(len(a), len(b)), n - 1)
    return filtfilt(b, a, x, axis=0, padtype="odd", padlen=padlen)


def integrate_velocity(acc, rate_hz: float) -> VelocityProfile:
    """Integrate acceleration to velocity under a zero-velocity boundary.

    The trapezoidal integral starts at zero; the straight line through its
    endpoints is then removed so the velocity also ends at exactly zero.
    """
    a = np.asarray(acc, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    n = a.shape[0]
    if n < 2:
        raise TooFewSamples("integration needs at least 2 samples")
    if not np.all(np.isfinite(a)):
        raise ValueError("acceleration must be finite")
    h = 1.0 / rate_hz
    v = np.zeros_like(a)
    v[1:] = np.cumsum(0.5 * (a[1:] + a[:-1]) * h, axis=0)
    frac = np.arange(n, dtype=float) / (n - 1)
    v -= frac[:, None] * v[-1]
    v[-1] = 0.0
    t = np.arange(n) * h
    return VelocityProfile(t=t, v=v, speed=np.linalg.norm(v, axis=1))


def velocity_from_acc(acc, rate_hz: float, cutoff_hz: float | None = DEFAULT_CUTOFF_HZ,
                      remove_drift: bool = True) -> VelocityProfile:
    """Run the full conditioning chain on one movement segment.

    ``cutoff_hz=None`` skips the low-pass stage.
    """
    a = np.asarray(acc, dtype=float)
    if remove_drift:
        a = detrend(a)
    if cutoff_hz is not None:
        a = lowpass(a, rate_hz, cutoff_hz)
    return integrate_velocity(a, rate_hz)
