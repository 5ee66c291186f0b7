import json

import pytest

from cogload.cli import main

FAST = ["--set", "epochs=3", "--set", "hidden_sizes=[8,8]", "--set", "synth_windows_per_subject=6"]


@pytest.fixture
def cohort_dir(tmp_path):
    assert main(["synth", "--out", str(tmp_path), *FAST]) == 0
    return tmp_path


def test_loso_writes_report_and_plot_series(cohort_dir):
    out = cohort_dir / "loso"
    assert main(["loso", "--features", str(cohort_dir / "features.csv"), "--out", str(out), *FAST]) == 0
    assert {p.name for p in out.iterdir()} == {"report.json", "loss_curves.csv", "scatter.csv"}
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["run"]["epochs"] == 3
    assert report["config"]["run"]["filter_order"] == 4  # defaults materialised
    assert len(report["folds"]) == 9


def test_rerun_is_byte_identical(cohort_dir):
    args = ["loso", "--features", str(cohort_dir / "features.csv"), *FAST]
    assert main([*args, "--out", str(cohort_dir / "a")]) == 0
    assert main([*args, "--out", str(cohort_dir / "b")]) == 0
    assert (cohort_dir / "a" / "report.json").read_bytes() == (cohort_dir / "b" / "report.json").read_bytes()


def test_report_subcommand(cohort_dir, capsys):
    main(["loso", "--features", str(cohort_dir / "features.csv"), "--out", str(cohort_dir / "l"), *FAST])
    capsys.readouterr()
    assert main(["report", "--report", str(cohort_dir / "l" / "report.json"), "--out", str(cohort_dir / "l")]) == 0
    assert "pooled" in capsys.readouterr().out
    assert "centroids" in json.loads((cohort_dir / "l" / "summary.json").read_text())["scatter"]


def test_missing_config_prints_usage(tmp_path, capsys):
    code = main(["loso", "--config", str(tmp_path / "nope.json"), "--features", "x.csv", "--out", str(tmp_path)])
    assert code == 1
    assert "usage" in capsys.readouterr().err


def test_usage_error_exits_one():
    with pytest.raises(SystemExit) as exc:
        main(["loso"])
    assert exc.value.code == 1


def test_data_error_exits_two(tmp_path):
    (tmp_path / "f.csv").write_text("wrong,header\n")
    assert main(["loso", "--features", str(tmp_path / "f.csv"), "--out", str(tmp_path)]) == 2


def test_incomplete_run_exits_three(cohort_dir, monkeypatch):
    import cogload.evaluation as ev
    from cogload.errors import NumericalError

    def broken(*args, **kwargs):
        raise NumericalError("diverged")

    monkeypatch.setattr(ev, "train", broken)
    out = cohort_dir / "bad"
    assert main(["loso", "--features", str(cohort_dir / "features.csv"), "--out", str(out), *FAST]) == 3
    assert json.loads((out / "report.json").read_text())["complete"] is False


def test_raw_ecg_path(tmp_path):
    run = ["--set", "synth_n_experts=1", "--set", "synth_n_novices=1"]
    assert main(["synth", "--kind", "study", "--duration", "30", "--out", str(tmp_path), *run]) == 0
    assert main(["features", "--ecg-dir", str(tmp_path / "ecg"), "--roster", str(tmp_path / "roster.csv"),
                 "--annotations", str(tmp_path / "annotations.csv"), "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "features.csv").read_text().splitlines()) == 1 + 2 * 5
    assert main(["train", "--features", str(tmp_path / "features.csv"), "--out", str(tmp_path / "m"),
                 "--set", "epochs=2", "--set", "hidden_sizes=[4]"]) == 0
    assert (tmp_path / "m" / "model.json").exists()


def test_detect(tmp_path):
    assert main(["synth", "--kind", "ecg", "--duration", "20", "--hr", "60", "--noise", "0", "--out",
                 str(tmp_path)]) == 0
    assert main(["detect", "--ecg", str(tmp_path / "ecg.csv"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "peaks.csv").read_text().count("\n") == (tmp_path / "true_peaks.csv").read_text().count("\n")
