import json
import subprocess
import sys

import numpy as np
import pytest

from mich import cli
from mich.engine import MichConfig
from mich.errors import NumericalFailure
from mich.postprocess import detect_changes


def _run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_priors(capsys):
    code, out, _ = _run(["priors", "--kind", "weighted-mean", "--T", "2"], capsys)
    assert code == 0
    assert [float(v) for v in out.strip().split(",")] == pytest.approx([0.5857864376, 0.4142135624])


def test_priors_bad_arguments(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["priors", "--kind", "nope", "--T", "5"])
    assert exc.value.code == 2
    code, _, err = _run(["priors", "--kind", "weighted-var", "--T", "0"], capsys)
    assert code == 2
    assert "T must be" in err


def test_simulate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert cli.main(["simulate", "--T", "100", "--J", "2", "--seed", "7", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    truth = json.loads((tmp_path / "a.truth.json").read_text())
    assert truth["schema_version"] == "1"
    assert len(truth["tau"]) == 2
    assert a.read_text().splitlines()[0] == "y1"


def test_simulate_multivariate_header(tmp_path):
    out = tmp_path / "mv.csv"
    assert cli.main(["simulate", "--T", "60", "--J", "1", "--min-space", "10", "--d", "3",
                     "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "y1,y2,y3"


def test_simulate_infeasible(capsys):
    code, _, err = _run(["simulate", "--T", "20", "--J", "5", "--min-space", "15"], capsys)
    assert code == 2
    assert "spacing" in err


def test_detect_step(tmp_path, capsys):
    rng = np.random.default_rng(0)
    y = np.concatenate([rng.normal(0, 1, 50), rng.normal(5, 1, 50)])
    data = _write(tmp_path / "s.csv", "value\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    code, out, _ = _run(["detect", data, "-J", "1"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == "1"
    assert doc["T"] == 100
    (cp,) = doc["changepoints"]
    assert cp["map_index"] == 51
    assert cp["detected"] is True
    assert 51 in cp["credible_set"]


def test_detect_round_trip_matches_library(tmp_path, capsys):
    data = tmp_path / "sim.csv"
    assert cli.main(["simulate", "--seed", "3", "--out", str(data)]) == 0
    report_path = tmp_path / "r.json"
    assert cli.main(["detect", str(data), "-J", "2", "--out", str(report_path)]) == 0
    doc = json.loads(report_path.read_text())
    y = np.loadtxt(data, delimiter=",", skiprows=1)
    fit, report = detect_changes(y, MichConfig(J=2))
    assert doc["elbo"] == fit.elbo
    assert [c["map_index"] for c in doc["changepoints"]] == [c.map_index + 1 for c in report.components]


def test_detect_auto_and_other_models(tmp_path, capsys):
    rng = np.random.default_rng(1)
    counts = np.concatenate([rng.poisson(1, 80), rng.poisson(6, 80)])
    data = _write(tmp_path / "c.csv", "\n".join(str(c) for c in counts) + "\n")
    code, out, _ = _run(["detect", data, "--model", "poisson", "-L", "1"], capsys)
    assert code == 0
    assert abs(json.loads(out)["changepoints"][0]["map_index"] - 81) <= 3

    y = rng.normal(size=(100, 2))
    y[40:] += 3
    data = _write(tmp_path / "m.csv", "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in y) + "\n")
    code, out, _ = _run(["detect", data, "--model", "mvmean"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["d"] == 2
    assert [c["map_index"] for c in doc["changepoints"] if c["detected"]] == [41]


@pytest.mark.parametrize("text, message", [
    ("1.0\n2.0,3.0\n", "line 2"),
    ("1.0\nabc\n", "line 2"),
    ("1.0\nnan\n", "line 2"),
    ("\n\n", "no data rows"),
])
def test_detect_bad_input(tmp_path, capsys, text, message):
    data = _write(tmp_path / "bad.csv", text)
    code, _, err = _run(["detect", data, "-J", "1"], capsys)
    assert code == 2
    assert message in err


def test_detect_missing_file_and_wrong_width(tmp_path, capsys):
    code, _, _ = _run(["detect", str(tmp_path / "missing.csv")], capsys)
    assert code == 2
    data = _write(tmp_path / "two.csv", "1,2\n3,4\n5,6\n")
    code, _, err = _run(["detect", data, "-J", "1"], capsys)
    assert code == 2
    assert "one column" in err


def test_numeric_failure_exit_code(tmp_path, capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise NumericalFailure("ELBO became non-finite", iteration=3)

    monkeypatch.setattr(cli, "detect_changes", broken)
    data = _write(tmp_path / "ok.csv", "1\n2\n3\n")
    code, _, err = _run(["detect", data, "-J", "1"], capsys)
    assert code == 3
    assert "numerical failure" in err


def test_bench_row(capsys):
    code, out, _ = _run(["bench", "--replicates", "2", "--workers", "1", "--seed", "1"], capsys)
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.split(",") == list(cli.BENCH_COLUMNS)
    assert len(row.split(",")) == len(cli.BENCH_COLUMNS)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mich", "priors", "--kind", "uniform", "--T", "4"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "0.25,0.25,0.25,0.25"
