"""Candidate movement segments: fixed windows and spotted speed peaks."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import WindowLongerThanLog
from .ingest import MovementClass

DEFAULT_WINDOW_S = 4.0
DEFAULT_K_SIGMA = 2.0
DEFAULT_MIN_SEP_S = 1.0
DEFAULT_HALF_WIDTH_S = 2.0


class SegmentSource(str, Enum):
    WINDOW = "Window"
    SPOTTED = "Spotted"


@dataclass(frozen=True)
class Segment:
    """Half-open sample range ``[start, end)`` of a log."""

    start: int
    end: int
    source: SegmentSource = SegmentSource.WINDOW
    label: MovementClass | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid segment [{self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)

    def with_label(self, label: MovementClass) -> "Segment":
        return Segment(self.start, self.end, self.source, label)


def window_segments(log_len: int, window_s: float = DEFAULT_WINDOW_S,
                    rate_hz: float = 100.0) -> list[Segment]:
    """Tile ``log_len`` samples with consecutive non-overlapping windows.

    A trailing remainder is kept only if it is at least half a window long.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    w = int(round(window_s * rate_hz))
    if w < 1 or w > log_len:
        raise WindowLongerThanLog(f"window of {w} samples exceeds log of {log_len}")
    n_full = log_len // w
    segs = [Segment(i * w, (i + 1) * w, SegmentSource.WINDOW) for i in range(n_full)]
    rem = log_len - n_full * w
    if rem > 0 and 2 * rem >= w:
        segs.append(Segment(n_full * w, log_len, SegmentSource.WINDOW))
    return segs


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of interior local maxima; a plateau reports its first sample."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        return np.zeros(0, dtype=int)
    d = np.diff(x)
    idx = []
    i = 1
    n = x.size
    while i < n - 1:
        if d[i - 1] > 0:
            j = i
            while j < n - 1 and d[j] == 0:
                j += 1
            if j < n - 1 and d[j] < 0:
                idx.append(i)
            i = j + 1 if j > i else i + 1
        else:
            i += 1
    return np.array(idx, dtype=int)


def spot_gestures(speed, rate_hz: float = 100.0, k_sigma: float = DEFAULT_K_SIGMA,
                  min_sep_s: float = DEFAULT_MIN_SEP_S,
                  half_width_s: float = DEFAULT_HALF_WIDTH_S) -> list[Segment]:
    """Pick prominent speed peaks as gesture candidates.

    Peaks must exceed ``mean + k_sigma * std`` of the whole signal. Of any two
    peaks closer than ``min_sep_s`` only the taller survives (ties go to the
    earlier one). Each survivor ``p`` becomes ``[p - w, p + w)`` with
    ``w = round(half_width_s * rate_hz)``, clamped to the signal.
    """
    if min_sep_s <= 0:
        raise ValueError("min_sep_s must be positive")
    s = np.asarray(speed, dtype=float)
    n = s.size
    if n == 0:
        return []
    theta = s.mean() + k_sigma * s.std()
    peaks = local_maxima(s)
    peaks = peaks[s[peaks] > theta]
    if peaks.size == 0:
        return []

    sep = min_sep_s * rate_hz
    order = sorted(peaks.tolist(), key=lambda p: (-s[p], p))
    kept: list[int] = []
    for p in order:
        if all(abs(p - q) >= sep for q in kept):
            kept.append(p)

    w = int(round(half_width_s * rate_hz))
    segs = []
    for p in sorted(kept):
        start = max(0, p - w)
        end = min(n, p + w) if w > 0 else p + 1
        segs.append(Segment(start, max(end, start + 1), SegmentSource.SPOTTED))
    return segs
