import json
import subprocess
import sys

import pytest

from enff import __version__
from enff.cli import run


def read_report(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# enff {__version__} config=")
    return [line.split(",") for line in lines[1:]]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    rc = run(["synth-corpus", "--out-dir", str(root), "--grids", "A", "C",
              "--kinds", "power", "--train", "4", "--test", "2", "--minutes", "2"])
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    work = tmp_path_factory.mktemp("work")
    assert run(["extract", "--input", str(corpus / "train.csv"), "--out-dir", str(work / "enf"),
                "--plot-data", str(work / "plot.csv")]) == 0
    assert run(["features", "--enf-dir", str(work / "enf"), "--out", str(work / "features.csv")]) == 0
    assert run(["train", "--features", str(work / "features.csv"), "--category", "power:60",
                "--out", str(work / "models")]) == 0
    return work


def test_no_subcommand_prints_usage(capsys):
    assert run([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        run(["separate", "--bogus"])
    assert exc.value.code == 2


def test_error_line_is_machine_readable(tmp_path, capsys):
    rc = run(["classify", "--model-dir", str(tmp_path), "--input", "x.csv", "--report", str(tmp_path / "r.csv")])
    assert rc == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "EnffError" and "no models" in err["message"]


def test_corpus_layout(corpus):
    assert (corpus / "manifest.csv").read_text().splitlines()[0] == "path,label,split"
    assert len((corpus / "train.csv").read_text().splitlines()) == 1 + 8
    assert len(list(corpus.glob("*.wav"))) == 12


def test_separate(corpus, tmp_path):
    assert run(["separate", "--input", str(corpus / "manifest.csv"), "--report", str(tmp_path / "s.csv")]) == 0
    rows = read_report(tmp_path / "s.csv")
    assert rows[0][:5] == ["source_id", "dominant_frequency_hz", "band_halfwidth_hz", "snr_db", "decided_kind"]
    assert len(rows) == 13
    assert all(r[4] == "power" and r[1] == "60.0" for r in rows[1:])


def test_extract_outputs(trained):
    assert len(list((trained / "enf").glob("*.csv"))) == 8
    plot = read_report(trained / "plot.csv")
    assert plot[0] == ["source_id", "label", "signal_kind", "nominal_hz", "time_s", "deviation_hz"]
    assert all(abs(float(r[5])) < 0.1 for r in plot[1:])
    head = (trained / "features.csv").read_text().splitlines()[0]
    assert head.startswith("source_id,category,label,")


def test_classify_unlabeled(corpus, trained, tmp_path):
    test_rows = (corpus / "test.csv").read_text().splitlines()[1:]
    unlabeled = tmp_path / "u.csv"
    unlabeled.write_text("path,label,split\n" + "".join(
        f"{corpus / r.split(',')[0]},,Test\n" for r in test_rows))
    assert run(["classify", "--model-dir", str(trained / "models"), "--input", str(unlabeled),
                "--report", str(tmp_path / "c.csv")]) == 0
    rows = read_report(tmp_path / "c.csv")
    assert rows[0][:6] == ["source_id", "signal_kind", "dominant_frequency_hz", "category", "predicted", "posterior"]
    assert len(rows) == 1 + len(test_rows)
    for r in rows[1:]:
        assert r[4] in {"A", "C", "NoG"} and 0 <= float(r[5]) <= 1


def test_evaluate_training_split(corpus, trained, tmp_path, capsys):
    assert run(["evaluate", "--model-dir", str(trained / "models"), "--manifest", str(corpus / "train.csv"),
                "--report", str(tmp_path / "e.csv"), "--confusion", str(tmp_path / "c.json")]) == 0
    out = capsys.readouterr().out
    assert "overall   Train  8  100.00" in out
    rows = read_report(tmp_path / "e.csv")
    assert ["overall", "Train", "8", "100.00"] in rows
    assert json.loads((tmp_path / "c.json").read_text())["power:60/Train"] == {"A": {"A": 4}, "C": {"C": 4}}


def test_reports_are_deterministic_and_job_independent(corpus, trained, tmp_path):
    outs = []
    for i, jobs in enumerate(["1", "1", "2"]):
        p = tmp_path / f"r{i}.csv"
        assert run(["classify", "--jobs", jobs, "--model-dir", str(trained / "models"),
                    "--input", str(corpus / "manifest.csv"), "--report", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_config_file_changes_digest(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"snr_threshold_db": 100.0}))
    assert run(["separate", "--config", str(cfg), "--input", str(corpus / "test.csv"),
                "--report", str(tmp_path / "s.csv")]) == 0
    rows = read_report(tmp_path / "s.csv")
    assert all(r[4] == "audio" for r in rows[1:])


def test_synth_command(tmp_path):
    out = tmp_path / "one.wav"
    assert run(["synth", "--profile", "B", "--kind", "audio", "--minutes", "0.5", "--seed", "3",
                "--out", str(out), "--truth", str(tmp_path / "walk.txt")]) == 0
    from enff.datastore import load_recording
    rec = load_recording(out)
    assert rec.samples.size == 30_000 and rec.sample_rate_hz == 1000.0
    profile = tmp_path / "p.json"
    profile.write_text(json.dumps({"nominal_hz": 60, "deviation_limits_hz": [-0.01, 0.01],
                                   "wander_timescale_s": 5, "stability": 0.5}))
    assert run(["synth", "--profile", str(profile), "--kind", "power", "--minutes", "0.5",
                "--out", str(tmp_path / "p.wav")]) == 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "enff.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
