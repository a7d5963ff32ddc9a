import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from richcf.cli import main

SMALL = ["--U", "40", "--M", "40", "--K", "2", "--alpha", "0.3", "--beta", "0.6"]


def files_of(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def test_synth_writes_instance_and_thresholds(tmp_path, capsys):
    assert main(["synth", *SMALL, "--seed", "2", "--out", str(tmp_path)]) == 0
    names = set(files_of(tmp_path))
    assert {"instance_observed.csv", "instance_truth.csv", "instance_clusters.csv",
            "thresholds.json", "manifest.json"} <= names
    th = json.loads((tmp_path / "thresholds.json").read_text())
    assert th["observed"] > 0 and "achieved_mu" in th
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "synth" and man["seed"] == 2
    assert man["config"]["U"] == 40 and "jobs" not in man["config"]
    assert "synth:" in capsys.readouterr().out


def test_run_then_report(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--algo", "ucr", "--cluster-size", "20", *SMALL,
                 "--out", str(run)]) == 0
    rep = json.loads((run / "report.json").read_text())
    assert rep["counts"]["test"] == rep["counts"]["wrong"] + rep["counts"]["correct"] \
        + rep["counts"]["unpredicted"]
    with open(run / "predictions.csv") as fh:
        assert sum(1 for _ in fh) == rep["counts"]["test"] + 1
    capsys.readouterr()
    assert main(["report", "--run-dir", str(run), "--out", str(tmp_path / "rep")]) == 0
    assert "matches stored report" in capsys.readouterr().out
    assert (tmp_path / "rep" / "report.json").read_bytes() == (run / "report.json").read_bytes()


def test_manifest_replay_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--algo", "hcor", *SMALL, "--seed", "9", "--out", str(a)]) == 0
    assert main(["run", "--config", str(a / "manifest.json"), "--jobs", "3",
                 "--out", str(b)]) == 0
    assert files_of(a) == files_of(b)


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# small instance\nU = 30\nM = 30\nK = 3\nseed = 4\nalpha = 0.5\n")
    out = tmp_path / "o"
    assert main(["synth", "--config", str(cfg), "--K", "2", "--out", str(out)]) == 0
    conf = json.loads((out / "manifest.json").read_text())["config"]
    assert (conf["U"], conf["K"], conf["seed"], conf["alpha"]) == (30, 2, 4, 0.5)


def test_ingest_csv_triples(tmp_path):
    data = tmp_path / "r.csv"
    data.write_text("user,item,rating\n0,0,5\n0,1,1\n1,1,4\n")
    out = tmp_path / "o"
    assert main(["ingest", "--data", str(data), "--format", "csv-triples",
                 "--levels", "5", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary == {"users": 2, "items": 2, "ratings": 3, "levels": 5}


def test_sweep_grid(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--param", "alpha", "--from", "0.005", "--to", "0.1",
                 "--steps", "10", "--trials", "20", "--U", "24", "--M", "24",
                 "--K", "2", "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 200
    with open(out / "sweep_summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert len(summary) == 10
    assert float(summary[0]["value"]) == 0.005 and float(summary[-1]["value"]) == 0.1


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RICHCF_OUT", str(tmp_path / "env"))
    assert main(["synth", *SMALL]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


@pytest.mark.parametrize("argv, needle", [
    (["run", "--algo", "paf", "--cluster-size", "3"], "does not apply"),
    (["run", "--hide", "1.5"], "--hide must lie in [0, 1]"),
    (["run", "--data", "/nonexistent/ratings.dat"], "error"),
    (["synth", "--K", "0"], "error"),
    (["ingest"], "needs --data"),
    (["report"], "needs --run-dir"),
    (["sweep", "--steps", "0"], "--steps must be at least 1"),
    (["synth", "--jobs", "0"], "--jobs must be at least 1"),
])
def test_errors_exit_2_with_message(tmp_path, capsys, argv, needle):
    assert main([*argv, "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith(f"richcf {argv[0]}: error:") and needle in err


def test_bad_config_lines(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("U: 3\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    cfg.write_text("bogus = 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "unknown setting 'bogus'" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--nope"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "richcf", "synth", *SMALL,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "instance_observed.csv").exists()
