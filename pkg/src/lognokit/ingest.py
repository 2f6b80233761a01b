"""Reading, validating, resampling and aligning wearable sensor logs.

A log is a CSV document with one inertial sample per line::

    t,ax,ay,az,gx,gy,gz,mx,my,mz,roll,pitch,yaw

Session metadata lives next to it in ``<logname>.meta.json`` and ground
truth labels in ``<logname>.labels.csv`` (``start_s,end_s,class``).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    FlatSignal,
    InsufficientOverlap,
    MalformedHeader,
    MalformedRow,
    NonFiniteValue,
    NonMonotonicTime,
    TooFewSamples,
)

COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "roll", "pitch", "yaw")
COLUMNS_NO_MAG = tuple(c for c in COLUMNS if c not in ("mx", "my", "mz"))
STANDARD_GRAVITY = 9.80665
DEFAULT_RATE_HZ = 100.0


class Cohort(str, Enum):
    HEALTHY = "Healthy"
    PATIENT = "Patient"


class Wrist(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"


class Scenario(str, Enum):
    L1 = "L1"
    L2 = "L2"


class MovementClass(str, Enum):
    """The four protocol movements plus the L2-only distractor class.

    Values are the codes used in label files.
    """

    M1_SHOULDER_EXT_FLEX = "M1"
    M2_SHOULDER_ADD_ABD = "M2"
    M3_SHOULDER_ROTATION = "M3"
    M4_ELBOW_FLEX_EXT = "M4"
    NON_TARGET = "NONE"

    @property
    def index(self) -> int:
        return _CLASS_ORDER.index(self)

    @property
    def is_target(self) -> bool:
        return self is not MovementClass.NON_TARGET

    @classmethod
    def from_index(cls, i: int) -> "MovementClass":
        return _CLASS_ORDER[i]


_CLASS_ORDER = tuple(MovementClass)
TARGET_CLASSES = _CLASS_ORDER[:4]


def allowed_classes(scenario: Scenario) -> tuple[MovementClass, ...]:
    return _CLASS_ORDER if scenario is Scenario.L2 else TARGET_CLASSES


@dataclass(frozen=True)
class SessionMeta:
    subject_id: str = "anonymous"
    cohort: Cohort = Cohort.HEALTHY
    wrist: Wrist = Wrist.RIGHT
    scenario: Scenario = Scenario.L1
    session_index: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cohort", Cohort(self.cohort))
        object.__setattr__(self, "wrist", Wrist(self.wrist))
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if int(self.session_index) < 1:
            raise ValueError("session_index must be a positive integer")
        object.__setattr__(self, "session_index", int(self.session_index))

    def to_dict(self) -> dict:
        return {
            "subject_id": self.subject_id,
            "cohort": self.cohort.value,
            "wrist": self.wrist.value,
            "scenario": self.scenario.value,
            "session_index": self.session_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionMeta":
        try:
            return cls(
                subject_id=str(d["subject_id"]),
                cohort=d["cohort"],
                wrist=d["wrist"],
                scenario=d["scenario"],
                session_index=d["session_index"],
            )
        except KeyError as exc:
            raise ValueError(f"metadata is missing key {exc.args[0]!r}") from None


@dataclass(frozen=True)
class ImuSample:
    t: float
    acc: tuple[float, float, float]
    gyro: tuple[float, float, float]
    mag: tuple[float, float, float]
    euler: tuple[float, float, float]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SensorLog:
    """A time-ordered inertial recording stored column-wise.

    ``acc``, ``gyro``, ``mag`` and ``euler`` have shape ``(n, 3)``; ``t`` has
    shape ``(n,)``. Arrays are read-only.
    """

    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray
    euler: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ
    meta: SessionMeta = field(default_factory=SessionMeta)

    def __post_init__(self):
        t = _frozen(self.t)
        object.__setattr__(self, "t", t)
        for name in ("acc", "gyro", "mag", "euler"):
            a = _frozen(getattr(self, name)).reshape(-1, 3)
            if a.shape[0] != t.shape[0]:
                raise ValueError(f"{name} has {a.shape[0]} rows, expected {t.shape[0]}")
            object.__setattr__(self, name, a)
        if not self.rate_hz > 0:
            raise ValueError("rate_hz must be positive")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(
            float(self.t[i]),
            tuple(self.acc[i]),
            tuple(self.gyro[i]),
            tuple(self.mag[i]),
            tuple(self.euler[i]),
        )

    @property
    def samples(self) -> Iterator[ImuSample]:
        return (self[i] for i in range(len(self)))

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self) else 0.0

    def channels(self) -> np.ndarray:
        """All 12 value channels side by side, in CSV column order."""
        return np.hstack([self.acc, self.gyro, self.mag, self.euler])

    def slice(self, start: int, end: int) -> "SensorLog":
        return replace(
            self,
            t=self.t[start:end],
            acc=self.acc[start:end],
            gyro=self.gyro[start:end],
            mag=self.mag[start:end],
            euler=self.euler[start:end],
        )

    @classmethod
    def from_channels(cls, t, values, rate_hz=DEFAULT_RATE_HZ, meta=None) -> "SensorLog":
        values = np.asarray(values, dtype=float)
        return cls(
            t=t,
            acc=values[:, 0:3],
            gyro=values[:, 3:6],
            mag=values[:, 6:9],
            euler=values[:, 9:12],
            rate_hz=rate_hz,
            meta=meta or SessionMeta(),
        )


def parse_log(text: str, meta: SessionMeta | None = None, *, rate_hz: float = DEFAULT_RATE_HZ,
              acc_unit: str = "m/s2") -> SensorLog:
    """Parse a sensor CSV document.

    Magnetometer columns may be absent, in which case they are zero-filled.
    With ``acc_unit="g"`` acceleration is converted to m/s^2.

    Raises
    ------
    MalformedHeader
        The header is not the expected column list.
    MalformedRow
        A row has the wrong number of fields or a non-numeric field.
    NonFiniteValue
        A field is NaN or infinite.
    NonMonotonicTime
        A timestamp is not strictly greater than the previous one, or negative.
    """
    if acc_unit not in ("m/s2", "g"):
        raise ValueError(f"unknown acceleration unit {acc_unit!r}")
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise MalformedHeader("empty document") from None
    if header == COLUMNS:
        has_mag = True
    elif header == COLUMNS_NO_MAG:
        has_mag = False
    else:
        raise MalformedHeader(f"expected header {','.join(COLUMNS)!r}, got {','.join(header)!r}")

    ncol = len(header)
    rows = []
    prev_t = -math.inf
    for row_no, fields in enumerate(reader, start=1):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != ncol:
            raise MalformedRow(row_no, f"expected {ncol} fields, got {len(fields)}")
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise MalformedRow(row_no, "non-numeric field") from None
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteValue(row_no, "non-finite value")
        t = values[0]
        if t < 0 or t <= prev_t:
            raise NonMonotonicTime(row_no, f"t={t!r} does not follow {prev_t!r}")
        prev_t = t
        rows.append(values)

    data = np.array(rows, dtype=float).reshape(-1, ncol)
    if not has_mag:
        data = np.hstack([data[:, :7], np.zeros((data.shape[0], 3)), data[:, 7:]])
    if acc_unit == "g":
        data[:, 1:4] *= STANDARD_GRAVITY
    return SensorLog.from_channels(data[:, 0], data[:, 1:], rate_hz=rate_hz, meta=meta)


def read_log(path, *, rate_hz=DEFAULT_RATE_HZ, acc_unit="m/s2") -> SensorLog:
    """Read ``path`` and its metadata sidecar (defaults are used if absent)."""
    path = Path(path)
    meta_path = meta_path_for(path)
    meta = read_meta(meta_path) if meta_path.exists() else SessionMeta(subject_id=path.stem)
    return parse_log(path.read_text(encoding="utf-8"), meta, rate_hz=rate_hz, acc_unit=acc_unit)


def meta_path_for(log_path) -> Path:
    p = Path(log_path)
    return p.with_name(p.stem + ".meta.json")


def labels_path_for(log_path) -> Path:
    p = Path(log_path)
    return p.with_name(p.stem + ".labels.csv")


def read_meta(path) -> SessionMeta:
    return SessionMeta.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Label:
    start_s: float
    end_s: float
    cls: MovementClass


def parse_labels(text: str) -> list[Label]:
    """Parse a ``start_s,end_s,class`` ground-truth file."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(h.strip() for h in next(reader, ()))
    if header != ("start_s", "end_s", "class"):
        raise MalformedHeader(f"expected header 'start_s,end_s,class', got {','.join(header)!r}")
    labels = []
    for row_no, fields in enumerate(reader, start=1):
        if not fields:
            continue
        if len(fields) != 3:
            raise MalformedRow(row_no, "expected 3 fields")
        try:
            start, end = float(fields[0]), float(fields[1])
            cls = MovementClass(fields[2].strip())
        except ValueError:
            raise MalformedRow(row_no, "unparseable label") from None
        if not (math.isfinite(start) and math.isfinite(end)):
            raise NonFiniteValue(row_no, "non-finite bound")
        if end <= start:
            raise MalformedRow(row_no, "end_s must exceed start_s")
        labels.append(Label(start, end, cls))
    return labels


def read_labels(path) -> list[Label]:
    return parse_labels(Path(path).read_text(encoding="utf-8"))


def format_labels(labels: Sequence[Label]) -> str:
    lines = ["start_s,end_s,class"]
    lines += [f"{lab.start_s!r},{lab.end_s!r},{lab.cls.value}" for lab in labels]
    return "\n".join(lines) + "\n"


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    return x - 2 * np.pi * np.ceil((x - np.pi) / (2 * np.pi))


def resample_uniform(log: SensorLog, rate_hz: float) -> SensorLog:
    """Linearly interpolate every channel onto the grid ``k / rate_hz``.

    The grid covers the input span without extrapolating. Euler angles are
    unwrapped before interpolation so that a yaw crossing +-pi does not sweep
    through zero.
    """
    if len(log) < 2:
        raise TooFewSamples("resampling needs at least 2 samples")
    if not rate_hz > 0:
        raise ValueError("rate_hz must be positive")
    t = log.t
    k0 = math.ceil(t[0] * rate_hz - 1e-9)
    k1 = math.floor(t[-1] * rate_hz + 1e-9)
    grid = np.arange(k0, k1 + 1) / rate_hz
    grid = np.clip(grid, t[0], t[-1])

    def interp(cols):
        return np.column_stack([np.interp(grid, t, cols[:, j]) for j in range(cols.shape[1])])

    euler = wrap_angle(interp(np.unwrap(log.euler, axis=0)))
    return replace(
        log,
        t=grid,
        acc=interp(log.acc),
        gyro=interp(log.gyro),
        mag=interp(log.mag),
        euler=euler,
        rate_hz=float(rate_hz),
    )


def synchronize_pair(a: SensorLog, b: SensorLog, max_lag_s: float = 2.0,
                     min_overlap_s: float = 1.0):
    """Align two simultaneously recorded logs by acceleration magnitude.

    The lag is the integer-sample shift maximizing the normalized
    cross-correlation of ``|acc|``; a positive lag means events appear later
    in ``b``. Returns ``(a_cropped, b_cropped, lag_s)`` where ``b`` has been
    moved onto ``a``'s time base and both cover only their common span.
    """
    if abs(a.rate_hz - b.rate_hz) > 1e-9 * a.rate_hz:
        raise ValueError("logs must share a sampling rate; resample first")
    h = 1.0 / a.rate_hz
    ma = np.linalg.norm(a.acc, axis=1)
    mb = np.linalg.norm(b.acc, axis=1)
    if len(a) < 2 or len(b) < 2 or np.ptp(ma) == 0 or np.ptp(mb) == 0:
        raise FlatSignal("acceleration magnitude has zero variance")

    base = int(round((a.t[0] - b.t[0]) / h))  # b index aligned with a[0] at zero lag
    max_lag = int(math.floor(max_lag_s / h + 1e-9))
    min_overlap = int(math.ceil(min_overlap_s / h)) + 1
    best_lag, best_r = None, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        off = base + lag  # a[i] pairs with b[i + off]
        i0 = max(0, -off)
        i1 = min(len(a), len(b) - off)
        if i1 - i0 <= min_overlap:
            continue
        x = ma[i0:i1] - ma[i0:i1].mean()
        y = mb[i0 + off:i1 + off] - mb[i0 + off:i1 + off].mean()
        den = math.sqrt(float(x @ x) * float(y @ y))
        if den == 0:
            continue
        r = float(x @ y) / den
        if r > best_r + 1e-12:
            best_lag, best_r = lag, r
    if best_lag is None:
        raise InsufficientOverlap(f"no lag within +-{max_lag_s} s leaves {min_overlap_s} s of overlap")

    lag_s = best_lag * h
    off = base + best_lag
    i0 = max(0, -off)
    i1 = min(len(a), len(b) - off)
    a_out = a.slice(i0, i1)
    b_out = b.slice(i0 + off, i1 + off)
    b_out = replace(b_out, t=a_out.t.copy())
    return a_out, b_out, lag_s
