"""End-to-end analysis of a directory of sensor logs.

ingest -> resample -> segment (label files, or windows/spotting plus the
SVM) -> velocity -> Sigma-Lognormal extraction -> cohort report.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .classify import SvmModel, extract_features, predict
from .errors import InvalidConfig, LognokitError, PipelineError
from .ingest import (
    Cohort,
    Label,
    Scenario,
    SensorLog,
    labels_path_for,
    meta_path_for,
    read_labels,
    read_log,
    read_meta,
    resample_uniform,
)
from .outputs import AnalysisReport, cohort_table_csv, per_movement_csv, speed_svg
from .preprocess import velocity_from_acc
from .segmentation import (
    DEFAULT_HALF_WIDTH_S,
    DEFAULT_K_SIGMA,
    DEFAULT_MIN_SEP_S,
    DEFAULT_WINDOW_S,
    Segment,
    SegmentSource,
    spot_gestures,
    window_segments,
)
from .siglognormal import ExtractConfig, extract_model
from .stats import CohortStats, cohort_stats, mann_whitney_u

REPORT_VERSION = 1
RANK_METRICS = ("snr_db", "duration_s", "n_components")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scenario: str = ""  # empty: every scenario
    labels: str = "given"  # given | classify
    segmentation: str = "window"  # window | spot, used with labels = classify
    model: str = ""  # SVM JSON, required with labels = classify
    rate_hz: float = 100.0
    acc_unit: str = "m/s2"
    cutoff_hz: float | None = 10.0
    detrend: bool = True
    window_s: float = DEFAULT_WINDOW_S
    k_sigma: float = DEFAULT_K_SIGMA
    min_sep_s: float = DEFAULT_MIN_SEP_S
    half_width_s: float = DEFAULT_HALF_WIDTH_S
    target_snr_db: float = 25.0
    max_components: int = 40
    plots: bool = True
    workers: int = 1

    def validate(self) -> "PipelineConfig":
        if self.labels not in ("given", "classify"):
            raise InvalidConfig(f"labels must be 'given' or 'classify', not {self.labels!r}")
        if self.segmentation not in ("window", "spot"):
            raise InvalidConfig(f"segmentation must be 'window' or 'spot', not {self.segmentation!r}")
        if self.scenario and self.scenario not in (s.value for s in Scenario):
            raise InvalidConfig(f"unknown scenario {self.scenario!r}")
        if self.acc_unit not in ("m/s2", "g"):
            raise InvalidConfig(f"acc_unit must be 'm/s2' or 'g', not {self.acc_unit!r}")
        if not self.rate_hz > 0:
            raise InvalidConfig("rate_hz must be positive")
        if self.workers < 1:
            raise InvalidConfig("workers must be at least 1")
        return self

    @property
    def extract(self) -> ExtractConfig:
        return ExtractConfig(target_snr_db=self.target_snr_db, max_components=self.max_components)


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    if typ is bool or typ == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"{name}: expected a boolean, got {raw!r}")
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        if typ == "float | None":
            return None if raw.lower() in ("none", "off", "") else float(raw)
    except ValueError:
        raise InvalidConfig(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {line_no}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InvalidConfig(f"line {line_no}: unknown key {key!r}")
        values[key] = _coerce(key, known[key], raw)
    return replace(base or PipelineConfig(), **values).validate()


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------

def discover_logs(input_dir) -> list[Path]:
    d = Path(input_dir)
    if not d.is_dir():
        raise PipelineError([f"{d}: not a directory"])
    logs = sorted(p for p in d.glob("*.csv") if not p.name.endswith(".labels.csv"))
    if not logs:
        raise PipelineError([f"{d}: 0 logs found (expected *.csv sensor logs)"])
    return logs


def label_segments(labels: list[Label], n: int, rate_hz: float) -> list[Segment]:
    """Target-class label intervals as segments, clipped to the log."""
    segs = []
    for lab in labels:
        if not lab.cls.is_target:
            continue
        start = max(0, int(round(lab.start_s * rate_hz)))
        end = min(n, int(round(lab.end_s * rate_hz)))
        if end > start:
            segs.append(Segment(start, end, SegmentSource.WINDOW, lab.cls))
    return segs


def candidate_segments(log: SensorLog, cfg: PipelineConfig) -> list[Segment]:
    """Fixed windows, or peaks of the conditioned speed when ``segmentation = spot``."""
    if cfg.segmentation == "window":
        return window_segments(len(log.t), cfg.window_s, log.rate_hz)
    vp = velocity_from_acc(log.acc, log.rate_hz, cfg.cutoff_hz, cfg.detrend)
    return spot_gestures(vp.speed, log.rate_hz, cfg.k_sigma, cfg.min_sep_s, cfg.half_width_s)


def classified_segments(log: SensorLog, cfg: PipelineConfig, model: SvmModel) -> list[Segment]:
    out = []
    for s in candidate_segments(log, cfg):
        cls = predict(model, extract_features(log, s))
        if cls.is_target:
            out.append(s.with_label(cls))
    return out


@dataclass(frozen=True)
class _Job:
    name: str
    index: int
    subject_id: str
    cohort: str
    cls: str
    start: int
    end: int
    rate_hz: float
    acc: np.ndarray


def _analyse(job: _Job, cfg: PipelineConfig):
    vp = velocity_from_acc(job.acc, job.rate_hz, cfg.cutoff_hz, cfg.detrend)
    result = extract_model(vp.v, vp.t, cfg.extract)
    report = AnalysisReport.from_result(
        result, log=job.name, index=job.index, subject_id=job.subject_id, cohort=job.cohort,
        movement_class=job.cls, start_s=job.start / job.rate_hz, end_s=job.end / job.rate_hz)
    return report, vp, result


def _safe_analyse(args):
    job, cfg = args
    try:
        return _analyse(job, cfg), None
    except LognokitError as exc:
        return None, f"{job.name} movement {job.index} [{job.start / job.rate_hz:.2f} s]: {exc}"


@dataclass
class PipelineResult:
    reports: list
    report: dict
    out_dir: Path | None


def run_pipeline(config: PipelineConfig | str | Path, input_dir, out_dir=None) -> PipelineResult:
    """Analyse every log in ``input_dir`` and write the report bundle to ``out_dir``.

    Problems with individual files or movements are collected; if any occur,
    :class:`PipelineError` lists them all once every log has been tried.
    """
    cfg = config if isinstance(config, PipelineConfig) else load_config(config)
    cfg.validate()
    problems: list[str] = []
    model = None
    if cfg.labels == "classify":
        if not cfg.model:
            raise PipelineError(["labels = classify needs a model file"])
        try:
            model = SvmModel.from_json(Path(cfg.model).read_text(encoding="utf-8"))
        except (OSError, ValueError, LognokitError) as exc:
            raise PipelineError([f"{cfg.model}: {exc}"]) from None

    jobs: list[_Job] = []
    for path in discover_logs(input_dir):
        try:
            meta = read_meta(meta_path_for(path))
        except (OSError, ValueError) as exc:
            problems.append(f"{path.name}: metadata: {exc}")
            continue
        if cfg.scenario and meta.scenario.value != cfg.scenario:
            continue
        try:
            log = read_log(path, rate_hz=cfg.rate_hz, acc_unit=cfg.acc_unit)
            log = resample_uniform(log, cfg.rate_hz)
            if cfg.labels == "given":
                segs = label_segments(read_labels(labels_path_for(path)), len(log.t), cfg.rate_hz)
            else:
                segs = classified_segments(log, cfg, model)
        except OSError as exc:
            problems.append(f"{path.name}: {exc}")
            continue
        except LognokitError as exc:
            problems.append(f"{path.name}: {exc}")
            continue
        for i, s in enumerate(segs):
            jobs.append(_Job(path.stem, i, meta.subject_id, meta.cohort.value,
                             s.label.value if s.label else "", s.start, s.end, cfg.rate_hz,
                             np.array(log.acc[s.start:s.end])))

    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_safe_analyse, [(j, cfg) for j in jobs]))
    else:
        outcomes = [_safe_analyse((j, cfg)) for j in jobs]

    done = []
    for out, err in outcomes:
        if err is not None:
            problems.append(err)
        else:
            done.append(out)
    if problems:
        raise PipelineError(problems)
    if not done:
        raise PipelineError(["no movements found in the input logs"])

    reports = [r for r, _, _ in done]
    report = build_report(reports, cfg)
    out = None
    if out_dir is not None:
        out = write_bundle(out_dir, report, reports, done if cfg.plots else [])
    return PipelineResult(reports, report, out)


def build_report(reports: list[AnalysisReport], cfg: PipelineConfig) -> dict:
    by_cohort: dict[str, list[AnalysisReport]] = {}
    for r in reports:
        by_cohort.setdefault(r.cohort, []).append(r)
    cohorts = {c: cohort_stats(rs).to_dict() for c, rs in sorted(by_cohort.items()) if len(rs) >= 2}
    rank_tests = {}
    h, p = by_cohort.get(Cohort.HEALTHY.value, []), by_cohort.get(Cohort.PATIENT.value, [])
    if h and p:
        for metric in RANK_METRICS:
            res = mann_whitney_u([getattr(r, metric) for r in h], [getattr(r, metric) for r in p])
            rank_tests[metric] = dict(res.to_dict(), a=Cohort.HEALTHY.value, b=Cohort.PATIENT.value)
    cfg_dict = {k: v for k, v in asdict(cfg).items() if k not in ("workers", "model")}
    return {
        "version": REPORT_VERSION,
        "generator": f"lognokit {__version__}",
        "config": cfg_dict,
        "cohorts": cohorts,
        "rank_tests": rank_tests,
        "movements": [r.to_dict() for r in reports],
    }


def write_bundle(out_dir, report: dict, reports: list[AnalysisReport], plotted) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    stats = {c: CohortStats(**d) for c, d in report["cohorts"].items()}
    (out / "cohort_table.csv").write_text(cohort_table_csv(stats))
    (out / "per_movement.csv").write_text(per_movement_csv(reports))
    if plotted:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for r, vp, res in plotted:
            title = f"{r.log} #{r.index} {r.movement_class}"
            (plots / f"{r.log}_{r.index:02d}.svg").write_text(speed_svg(vp.t, vp.v, res, title))
    return out
