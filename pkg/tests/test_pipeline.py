import json
from dataclasses import replace

import pytest

from lognokit.cli import main
from lognokit.errors import InvalidConfig, PipelineError
from lognokit.ingest import Cohort, Scenario, format_labels, labels_path_for
from lognokit.outputs import write_log
from lognokit.pipeline import PipelineConfig, build_report, discover_logs, parse_config, run_pipeline
from lognokit.synth import SynthCohortConfig, cohort_labels, synth_cohort

SMALL = SynthCohortConfig(n_subjects=2, movements_per_subject=2, duration_mean_s=2.0, duration_std_s=0.2,
                          components_mean=4, components_std=1, noise_snr_db=25.0)


def write_cohort(d, cfg):
    co = synth_cohort(cfg)
    for i, (log, labels) in enumerate(zip(co.logs, cohort_labels(co))):
        path = d / f"{log.meta.subject_id}_m{i % cfg.movements_per_subject + 1:02d}.csv"
        write_log(log, path)
        labels_path_for(path).write_text(format_labels(labels))
    return co


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("logs")
    write_cohort(d, replace(SMALL, cohort=Cohort.HEALTHY, seed=1))
    write_cohort(d, replace(SMALL, cohort=Cohort.PATIENT, seed=2))
    return d


@pytest.fixture(scope="module")
def bundle(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    return run_pipeline(PipelineConfig(), dataset, out)


def test_bundle_contents(bundle):
    out = bundle.out_dir
    report = json.loads((out / "report.json").read_text())
    assert set(report) >= {"version", "cohorts", "rank_tests", "movements"}
    assert set(report["cohorts"]) == {"Healthy", "Patient"}
    assert report["cohorts"]["Healthy"]["n_samples"] == 4
    assert set(report["rank_tests"]) == {"snr_db", "duration_s", "n_components"}
    assert len(report["movements"]) == 8
    assert len(list((out / "plots").glob("*.svg"))) == 8
    assert (out / "cohort_table.csv").read_text().startswith("metric,Healthy_mean")
    assert len((out / "per_movement.csv").read_text().splitlines()) == 9


def test_report_is_reproducible(dataset, bundle, tmp_path):
    again = run_pipeline(PipelineConfig(), dataset, tmp_path)
    assert (tmp_path / "report.json").read_bytes() == (bundle.out_dir / "report.json").read_bytes()
    assert again.report == bundle.report


def test_parallel_workers_give_the_same_report(dataset, bundle):
    par = run_pipeline(PipelineConfig(workers=2, plots=False), dataset)
    assert par.report["movements"] == bundle.report["movements"]


def test_empty_directory(tmp_path):
    with pytest.raises(PipelineError) as info:
        run_pipeline(PipelineConfig(), tmp_path)
    assert "0 logs found" in str(info.value)


def test_scenario_filter(dataset):
    with pytest.raises(PipelineError) as info:
        run_pipeline(PipelineConfig(scenario="L2"), dataset)
    assert "no movements" in str(info.value)
    res = run_pipeline(PipelineConfig(scenario=Scenario.L1.value, labels="given", plots=False), dataset)
    assert len(res.reports) == 8


def test_problems_are_collected_per_file(dataset, tmp_path):
    for p in dataset.iterdir():
        (tmp_path / p.name).write_bytes(p.read_bytes())
    bad = sorted(tmp_path.glob("H001_m01.csv"))[0]
    lines = bad.read_text().splitlines()
    lines[5] = lines[4]
    bad.write_text("\n".join(lines) + "\n")
    (tmp_path / "P002_m02.labels.csv").unlink()
    with pytest.raises(PipelineError) as info:
        run_pipeline(PipelineConfig(), tmp_path)
    problems = info.value.problems
    assert len(problems) == 2
    assert any("H001_m01.csv" in p and "row 5" in p for p in problems)
    assert any("P002_m02.csv" in p for p in problems)


def test_classified_run_needs_a_model(dataset):
    with pytest.raises(PipelineError):
        run_pipeline(PipelineConfig(labels="classify"), dataset)


def test_config_text_format():
    cfg = parse_config("# demo\nseed = 3\nlabels = classify  # svm\ncutoff-hz = none\ndetrend = off\n")
    assert (cfg.seed, cfg.labels, cfg.cutoff_hz, cfg.detrend) == (3, "classify", None, False)
    for bad in ("nonsense = 1", "seed 3", "seed = x", "labels = maybe", "detrend = perhaps", "workers = 0"):
        with pytest.raises(InvalidConfig):
            parse_config(bad)


def test_build_report_skips_single_movement_cohorts(bundle):
    one = [r for r in bundle.reports if r.cohort == "Healthy"][:1]
    rep = build_report(one + [r for r in bundle.reports if r.cohort == "Patient"], PipelineConfig())
    assert set(rep["cohorts"]) == {"Patient"} and set(rep["rank_tests"]) == set(rep["rank_tests"])


def test_discover_ignores_label_files(dataset):
    names = [p.name for p in discover_logs(dataset)]
    assert len(names) == 8 and not any(n.endswith(".labels.csv") for n in names)


# command line

def test_cli_run_twice_is_byte_identical(dataset, tmp_path, capsys):
    assert main(["run", str(dataset), "--out-dir", str(tmp_path / "a"), "--seed", "7"]) == 0
    assert main(["run", str(dataset), "--out-dir", str(tmp_path / "b"), "--seed", "7"]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert "Number of Lognormals" in capsys.readouterr().out


def test_cli_report_and_errors(bundle, tmp_path, capsys):
    assert main(["report", str(bundle.out_dir)]) == 0
    out = capsys.readouterr().out
    assert "SNR [dB]" in out and "Mann-Whitney snr_db" in out
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["run", str(empty), "--out-dir", str(tmp_path / "out")]) == 1
    assert "0 logs found" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_train_predict_cv(dataset, tmp_path, capsys):
    model = tmp_path / "svm.json"
    assert main(["train", str(dataset), "--out", str(model)]) == 0
    capsys.readouterr()
    assert main(["predict", str(model), str(dataset / "H001_m01.csv"), "--window-s", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 2 and all(line.startswith("H001_m01") for line in lines[1:])
    assert main(["cv", str(dataset), "--folds", "2"]) == 0
    cv = json.loads(capsys.readouterr().out)
    assert 0.0 <= cv["mean_accuracy"] <= 1.0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"labels = classify\nmodel = {model}\nplots = false\nwindow_s = 1.0\n")
    assert main(["run", str(dataset), "--config", str(cfg), "--out-dir", str(tmp_path / "c")]) == 0


def test_cli_synth_segment_extract(tmp_path, capsys):
    d = tmp_path / "syn"
    assert main(["synth", "--cohort", "Patient", "--n-subjects", "1", "--movements", "1", "--out-dir", str(d)]) == 0
    log = d / "P001_m01.csv"
    assert log.exists() and labels_path_for(log).exists()
    capsys.readouterr()
    assert main(["segment", str(log), "--window-s", "1.0"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("0.0,1.0,Window")
    assert main(["extract", str(log), "--out-dir", str(tmp_path / "ex")]) == 0
    assert sorted(p.suffix for p in (tmp_path / "ex").iterdir()) == [".csv", ".json", ".svg"]
