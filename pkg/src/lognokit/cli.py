"""Command-line entry point: ``lognokit <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path


from . import __version__
from .classify import SvmConfig, SvmModel, cross_validate, extract_features, predict, train_svm
from .errors import LognokitError, PipelineError
from .ingest import Cohort, Scenario, format_labels, labels_path_for, read_labels, read_log, resample_uniform
from .outputs import (
    format_cohort_table,
    model_json,
    reconstruction_csv,
    segments_csv,
    speed_svg,
    write_log,
)
from .pipeline import PipelineConfig, candidate_segments, discover_logs, label_segments, load_config, run_pipeline
from .preprocess import velocity_from_acc
from .segmentation import Segment, SegmentSource
from .siglognormal import ExtractConfig, extract_model
from .stats import CohortStats
from .synth import DEMO_HEALTHY, DEMO_PATIENT, cohort_labels, synth_cohort


def _pipeline_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    over = {}
    for key in ("seed", "scenario", "labels", "segmentation", "model", "acc_unit", "cutoff_hz",
                "window_s", "k_sigma", "min_sep_s", "half_width_s", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if getattr(args, "no_detrend", False):
        over["detrend"] = False
    if getattr(args, "no_cutoff", False):
        over["cutoff_hz"] = None
    if getattr(args, "spot", False):
        over["segmentation"] = "spot"
    return replace(cfg, **over).validate()


def _out_dir(args, default: str | None = None) -> Path | None:
    d = args.out_dir or default
    if d is None:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(path, cfg: PipelineConfig):
    return resample_uniform(read_log(path, rate_hz=cfg.rate_hz, acc_unit=cfg.acc_unit), cfg.rate_hz)


def _log_paths(inputs) -> list[Path]:
    paths = []
    for x in inputs:
        p = Path(x)
        paths.extend(discover_logs(p) if p.is_dir() else [p])
    return paths


def _labelled_examples(paths, cfg: PipelineConfig, labels_file=None):
    feats, labels, groups = [], [], []
    for path in paths:
        log = _load(path, cfg)
        labs = read_labels(labels_file if labels_file else labels_path_for(path))
        for lab in labs:
            start = max(0, int(round(lab.start_s * cfg.rate_hz)))
            end = min(len(log.t), int(round(lab.end_s * cfg.rate_hz)))
            if end - start < 2:
                continue
            feats.append(extract_features(log, Segment(start, end, SegmentSource.WINDOW)))
            labels.append(lab.cls)
            groups.append(log.meta.subject_id)
    return feats, labels, groups


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    cfg = _pipeline_config(args)
    for path in _log_paths(args.inputs):
        log = read_log(path, rate_hz=cfg.rate_hz, acc_unit=cfg.acc_unit)
        m = log.meta
        print(f"{path.name}: {len(log)} samples, {log.duration_s:.2f} s, subject {m.subject_id}, "
              f"{m.cohort.value}, {m.wrist.value} wrist, {m.scenario.value}")
        out = _out_dir(args)
        if out is not None:
            write_log(resample_uniform(log, cfg.rate_hz), out / path.name)
    return 0


def cmd_synth(args) -> int:
    out = _out_dir(args, "synth")
    if args.demo:
        bases = [DEMO_HEALTHY, DEMO_PATIENT]
    else:
        bases = [DEMO_HEALTHY if Cohort(args.cohort) is Cohort.HEALTHY else DEMO_PATIENT]
    n = 0
    for base in bases:
        over = {"seed": base.seed + args.seed if args.seed is not None else base.seed}
        if args.n_subjects is not None:
            over["n_subjects"] = args.n_subjects
        if args.movements is not None:
            over["movements_per_subject"] = args.movements
        if args.noise_snr_db is not None:
            over["noise_snr_db"] = args.noise_snr_db
        cfg = replace(base, **over)
        cohort = synth_cohort(cfg)
        for i, (log, labels) in enumerate(zip(cohort.logs, cohort_labels(cohort))):
            name = f"{log.meta.subject_id}_m{i % cfg.movements_per_subject + 1:02d}.csv"
            write_log(log, out / name)
            labels_path_for(out / name).write_text(format_labels(labels))
            n += 1
    print(f"wrote {n} logs to {out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _pipeline_config(args)
    out = _out_dir(args)
    for path in _log_paths(args.inputs):
        log = _load(path, cfg)
        text = segments_csv(candidate_segments(log, cfg), log.rate_hz)
        if out is None:
            sys.stdout.write(text)
        else:
            (out / f"{path.stem}.segments.csv").write_text(text)
    return 0


def _svm_config(args) -> SvmConfig:
    return SvmConfig(C=args.C) if getattr(args, "C", None) is not None else SvmConfig()


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    paths = _log_paths(args.inputs)
    if args.labels_file and len(paths) != 1:
        raise LognokitError("--labels names one label file, so give exactly one log")
    feats, labels, _ = _labelled_examples(paths, cfg, args.labels_file)
    model = train_svm(feats, labels, _svm_config(args))
    out = Path(args.out) if args.out else (_out_dir(args, ".") / "model.json")
    out.write_text(model.to_json())
    print(f"trained on {len(feats)} examples, {len(model.classes)} classes -> {out}")
    return 0


def cmd_predict(args) -> int:
    cfg = _pipeline_config(args)
    model = SvmModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    print("log,start_s,end_s,source,class")
    for path in _log_paths(args.inputs):
        log = _load(path, cfg)
        for s in candidate_segments(log, cfg):
            cls = predict(model, extract_features(log, s))
            print(f"{path.stem},{s.start / log.rate_hz!r},{s.end / log.rate_hz!r},{s.source.value},{cls.value}")
    return 0


def cmd_cv(args) -> int:
    cfg = _pipeline_config(args)
    feats, labels, groups = _labelled_examples(_log_paths(args.inputs), cfg)
    rep = cross_validate(feats, labels, k=args.folds, config=_svm_config(args), seed=cfg.seed,
                         groups=groups if args.per_subject else None)
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_extract(args) -> int:
    cfg = _pipeline_config(args)
    out = _out_dir(args)
    ecfg = ExtractConfig(target_snr_db=cfg.target_snr_db, max_components=cfg.max_components)
    for path in _log_paths(args.inputs):
        log = _load(path, cfg)
        if args.whole:
            segs = [Segment(0, len(log.t))]
        else:
            segs = label_segments(read_labels(labels_path_for(path)), len(log.t), cfg.rate_hz)
        for i, s in enumerate(segs):
            vp = velocity_from_acc(log.acc[s.start:s.end], log.rate_hz, cfg.cutoff_hz, cfg.detrend)
            res = extract_model(vp.v, vp.t, ecfg)
            print(f"{path.stem} #{i}: {res.duration_s:.2f} s, {res.n_components} lognormals, "
                  f"SNR {res.snr_db:.2f} dB")
            if out is not None:
                stem = f"{path.stem}_{i:02d}"
                (out / f"{stem}.model.json").write_text(model_json(res.model))
                (out / f"{stem}.reconstruction.csv").write_text(reconstruction_csv(vp.t, vp.v, res.v_rec))
                (out / f"{stem}.svg").write_text(speed_svg(vp.t, vp.v, res, f"{path.stem} #{i}"))
    return 0


def cmd_report(args) -> int:
    p = Path(args.report)
    if p.is_dir():
        p = p / "report.json"
    report = json.loads(p.read_text(encoding="utf-8"))
    stats = {c: CohortStats(**d) for c, d in report["cohorts"].items()}
    sys.stdout.write(format_cohort_table(stats))
    for metric, rt in sorted(report.get("rank_tests", {}).items()):
        print(f"Mann-Whitney {metric}: U = {rt['u_statistic']:.1f}, p = {rt['p_two_sided']:.3g} ({rt['method']})")
    return 0


def cmd_run(args) -> int:
    cfg = _pipeline_config(args)
    out = Path(args.out_dir or "lognokit-out")  # created only once the run succeeds
    result = run_pipeline(cfg, args.input_dir, out)
    stats = {c: CohortStats(**d) for c, d in result.report["cohorts"].items()}
    sys.stdout.write(format_cohort_table(stats))
    print(f"{len(result.reports)} movements -> {out / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")

    prep = argparse.ArgumentParser(add_help=False)
    prep.add_argument("--acc-unit", choices=("m/s2", "g"))
    prep.add_argument("--cutoff-hz", type=float)
    prep.add_argument("--no-cutoff", action="store_true", help="skip the low-pass stage")
    prep.add_argument("--no-detrend", action="store_true")

    seg = argparse.ArgumentParser(add_help=False)
    seg.add_argument("--window-s", type=float)
    seg.add_argument("--spot", action="store_true", help="spot gestures instead of fixed windows")
    seg.add_argument("--k-sigma", type=float)
    seg.add_argument("--min-sep-s", type=float)
    seg.add_argument("--half-width-s", type=float)

    parser = argparse.ArgumentParser(prog="lognokit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lognokit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common, prep], help="validate logs, optionally rewrite them resampled")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cohort with labels")
    p.add_argument("--demo", action="store_true", help="both demonstration cohorts")
    p.add_argument("--cohort", choices=[c.value for c in Cohort], default=Cohort.HEALTHY.value)
    p.add_argument("--n-subjects", type=int)
    p.add_argument("--movements", type=int, help="movements per subject")
    p.add_argument("--noise-snr-db", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", parents=[common, prep, seg], help="window or spot candidate segments")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", parents=[common, prep], help="train the SVM on labelled logs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--labels", dest="labels_file",
                   help="label CSV for a single log (default: the .labels.csv sidecar)")
    p.add_argument("--out", help="model file (default: <out-dir>/model.json)")
    p.add_argument("-C", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common, prep, seg], help="classify segments with a trained model")
    p.add_argument("model")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", parents=[common, prep], help="k-fold cross-validation of the SVM")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--per-subject", action="store_true", help="keep each subject within one fold")
    p.add_argument("-C", type=float)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("extract", parents=[common, prep], help="Sigma-Lognormal decomposition of movements")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--whole", action="store_true", help="treat each log as one movement")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("report", parents=[common], help="print the cohort table of a report")
    p.add_argument("report", help="report.json or the directory holding it")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common, prep, seg], help="full pipeline over a directory")
    p.add_argument("input_dir")
    p.add_argument("--scenario", choices=[s.value for s in Scenario])
    p.add_argument("--labels", choices=("given", "classify"))
    p.add_argument("--model", help="SVM model for --labels classify")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except (LognokitError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
