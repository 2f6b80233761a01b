"""Writers for logs, reports, tables and speed plots."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import COLUMNS, SensorLog, meta_path_for
from .segmentation import Segment
from .siglognormal import ReconstructionResult, SigmaLognormalModel, component_velocities
from .stats import CohortStats


def serialize_log(log: SensorLog) -> str:
    """CSV text that :func:`~lognokit.ingest.parse_log` reads back unchanged.

    Floats are written with ``repr`` so every value survives the round trip.
    """
    lines = [",".join(COLUMNS)]
    data = np.column_stack([log.t, log.acc, log.gyro, log.mag, log.euler])
    for row in data.tolist():
        lines.append(",".join(repr(x) for x in row))
    return "\n".join(lines) + "\n"


def write_log(log: SensorLog, path) -> Path:
    """Write ``log`` as CSV plus its ``.meta.json`` sidecar."""
    path = Path(path)
    path.write_text(serialize_log(log))
    meta_path_for(path).write_text(json.dumps(log.meta.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


@dataclass(frozen=True)
class AnalysisReport:
    """Kinematic summary of one movement."""

    log: str
    index: int
    subject_id: str
    cohort: str
    movement_class: str
    start_s: float
    end_s: float
    duration_s: float
    n_components: int
    snr_db: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_result(cls, result: ReconstructionResult, *, log: str, index: int, subject_id: str,
                    cohort: str, movement_class: str, start_s: float, end_s: float) -> "AnalysisReport":
        return cls(log=log, index=index, subject_id=subject_id, cohort=cohort,
                   movement_class=movement_class, start_s=float(start_s), end_s=float(end_s),
                   duration_s=float(result.duration_s), n_components=int(result.n_components),
                   snr_db=float(result.snr_db))


PER_MOVEMENT_FIELDS = ("log", "index", "subject_id", "cohort", "movement_class", "start_s", "end_s",
                       "duration_s", "n_components", "snr_db")


def per_movement_csv(reports: Iterable[AnalysisReport]) -> str:
    lines = [",".join(PER_MOVEMENT_FIELDS)]
    for r in reports:
        d = r.to_dict()
        lines.append(",".join(repr(d[f]) if isinstance(d[f], float) else str(d[f]) for f in PER_MOVEMENT_FIELDS))
    return "\n".join(lines) + "\n"


COHORT_ROWS = (
    ("Number of samples", "n_samples", None),
    ("Duration [s]", "duration_mean", "duration_std"),
    ("Number of Lognormals", "n_logn_mean", "n_logn_std"),
    ("SNR [dB]", "snr_mean", "snr_std"),
)


def cohort_table_csv(stats: Mapping[str, CohortStats]) -> str:
    """One row per quantity, a mean and a std column per cohort."""
    names = list(stats)
    header = ["metric"] + [f"{n}_{s}" for n in names for s in ("mean", "std")]
    lines = [",".join(header)]
    for label, mean_key, std_key in COHORT_ROWS:
        row = [label]
        for n in names:
            st = stats[n].to_dict()
            row.append(repr(st[mean_key]) if std_key else str(st[mean_key]))
            row.append(repr(st[std_key]) if std_key else "")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def format_cohort_table(stats: Mapping[str, CohortStats]) -> str:
    """Human-readable ``mean ± std`` table."""
    names = list(stats)
    width = max(len(r[0]) for r in COHORT_ROWS) + 2
    out = ["".ljust(width) + "".join(n.rjust(16) for n in names)]
    for label, mean_key, std_key in COHORT_ROWS:
        cells = []
        for n in names:
            st = stats[n].to_dict()
            cells.append((f"{st[mean_key]:.1f} ± {st[std_key]:.1f}" if std_key else str(st[mean_key])).rjust(16))
        out.append(label.ljust(width) + "".join(cells))
    return "\n".join(out) + "\n"


def segments_csv(segments: Sequence[Segment], rate_hz: float) -> str:
    lines = ["start_s,end_s,source,label"]
    for s in segments:
        label = s.label.value if s.label is not None else ""
        lines.append(f"{s.start / rate_hz!r},{s.end / rate_hz!r},{s.source.value},{label}")
    return "\n".join(lines) + "\n"


def model_json(model: SigmaLognormalModel) -> str:
    return json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n"


def reconstruction_csv(t, v_obs, v_rec) -> str:
    lines = ["t,vx,vy,vz,vrx,vry,vrz"]
    for row in np.column_stack([t, v_obs, v_rec]).tolist():
        lines.append(",".join(repr(x) for x in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG

def _polyline(xs, ys, sx, sy, style: str) -> str:
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" {style} points="{pts}"/>'


def speed_svg(t, v_obs, result: ReconstructionResult, title: str = "",
              width: int = 640, height: int = 240) -> str:
    """Observed speed, reconstructed speed and the component speeds."""
    t = np.asarray(t, dtype=float)
    obs = np.linalg.norm(np.asarray(v_obs, dtype=float), axis=1)
    rec = np.linalg.norm(result.v_rec, axis=1)
    comps = np.linalg.norm(component_velocities(result.model.params(), t), axis=2)
    top = max(float(obs.max()), float(rec.max()), 1e-12) * 1.05
    pad = 30
    t_lo, t_hi = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

    def sx(x):
        return pad + (x - t_lo) / (t_hi - t_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - y / top * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12" font-family="sans-serif">'
        f'{_escape(title)} SNR {result.snr_db:.1f} dB, {result.n_components} lognormals</text>',
    ]
    for c in comps:
        parts.append(_polyline(t, c, sx, sy, 'stroke="#9ab" stroke-width="0.8"'))
    parts.append(_polyline(t, obs, sx, sy, 'stroke="black" stroke-width="1.5"'))
    parts.append(_polyline(t, rec, sx, sy, 'stroke="#d33" stroke-width="1.2" stroke-dasharray="4 2"'))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
