import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mqseg.cli import main, read_series, UsageError
from mqseg.multiscale import multiscale_stat
from mqseg.core import StepFunction


@pytest.fixture
def table(tmp_path, monkeypatch):
    path = tmp_path / "thresholds.txt"
    monkeypatch.setenv("MQSEG_THRESHOLD_PATH", str(path))
    return path


def _write(path, values, header=True):
    lines = (["value"] if header else []) + [repr(float(v)) for v in values]
    path.write_text("\n".join(lines) + "\n")
    return path


def _bump(n=300, seed=0):
    z = np.random.default_rng(seed).normal(0, 0.3, n)
    z[n // 3: 2 * n // 3] += 2
    return z


def test_fit_json_roundtrip(tmp_path, table):
    z = _bump()
    src = _write(tmp_path / "z.csv", z)
    out = tmp_path / "fit.json"
    args = ["fit", "--input", str(src), "--beta", "0.5", "--alpha", "0.1", "--cost", "koenker",
            "--reps", "500", "--out", str(out)]
    assert main(args) == 0
    d = json.loads(out.read_text())
    assert d["format_version"] == 1
    assert d["s_hat"] == 3 and len(d["segments"]) == 3
    assert len(d["cp_intervals"]) == 2
    assert all(0 <= t < 1 for t in d["tau"])
    assert len(d["band"]["lower"]) == z.size
    assert table.exists()
    # re-read and audit the written fit
    f = StepFunction((*[s["start"] for s in d["segments"]], z.size + 1), [s["value"] for s in d["segments"]])
    assert multiscale_stat(z, f, 0.5) <= d["q"]
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_fit_explicit_q_skips_table(tmp_path, table, capsys):
    src = _write(tmp_path / "z.csv", _bump(), header=False)
    assert main(["fit", "--input", str(src), "--q", "3.0"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["q"] == 3.0 and d["alpha"] is None
    assert not table.exists()


def test_fit_noise_only_and_csv(tmp_path, capsys):
    src = _write(tmp_path / "z.csv", np.random.default_rng(1).normal(size=100))
    assert main(["fit", "--input", str(src), "--q", "1.5", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "index,z,fit,band_lower,band_upper"
    assert len(lines) == 101
    assert len({row.split(",")[2] for row in lines[1:]}) == 1


def test_usage_errors(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "missing.csv"), "--q", "1"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("value\n1.0\nabc\n")
    assert main(["fit", "--input", str(bad), "--q", "1"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", str(bad), "--alpha", "0.1", "--q", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", str(bad), "--beta", "1.5"])
    assert exc.value.code == 2
    capsys.readouterr()
    assert main(["bench", "--scenario", "nope"]) == 2
    err = capsys.readouterr().err
    assert "bump500" in err and "constant500" in err


def test_read_series(tmp_path):
    assert read_series(_write(tmp_path / "a.csv", [1, 2])).tolist() == [1.0, 2.0]
    (tmp_path / "b.csv").write_text("3.5\n\n-1\n")
    assert read_series(tmp_path / "b.csv").tolist() == [3.5, -1.0]
    (tmp_path / "c.csv").write_text("value\n")
    with pytest.raises(UsageError):
        read_series(tmp_path / "c.csv")


def test_msb(tmp_path, capsys):
    src = _write(tmp_path / "z.csv", _bump(600, 4))
    assert main(["msb", "--input", str(src), "--alpha", "0.05", "--reps", "500"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert list(d["fits"]) == ["0.25", "0.5", "0.75"]
    assert d["simultaneous_level"] == pytest.approx(0.85)
    assert d["merges"]
    assert main(["msb", "--input", str(src), "--q", "1.0", "--format", "csv"]) == 0
    header = capsys.readouterr().out.splitlines()[0].split(",")
    assert header[:2] == ["index", "z"] and len(header) == 11


def test_msb_no_merge_on_noise(tmp_path, capsys):
    src = _write(tmp_path / "z.csv", np.random.default_rng(3).normal(size=200))
    assert main(["msb", "--input", str(src), "--q", "2.0"]) == 0
    assert json.loads(capsys.readouterr().out)["merges"] == []


def test_simulate(tmp_path, capsys):
    path = tmp_path / "t.txt"
    args = ["simulate", "--n", "1", "--beta", "0.5", "--alpha", "0.05", "0.5", "0.9", "--reps", "50", "--table", str(path)]
    assert main(args) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    closed = math.sqrt(2 * math.log(2)) - math.sqrt(2)
    assert all(float(line.split()[1]) == pytest.approx(closed, abs=1e-15) for line in lines)
    before = path.read_text()
    assert main(args) == 0
    assert path.read_text() == before


def test_bench_and_eval(tmp_path, capsys, table):
    assert main(["bench", "--scenario", "bump500", "--q", "1.2", "--reps", "3", "--seed", "7"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("scenario,method,beta") and out[1].startswith("bump500,mqs-koenker")
    a = _write(tmp_path / "a.csv", [0, 0, 1, 1, 1])
    assert main(["eval", "--est", str(a), "--truth", str(a)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["miae"] == 0.0 and d["v_measure"] == 1.0
    b = _write(tmp_path / "b.csv", [0, 0, 1, 1])
    assert main(["eval", "--est", str(a), "--truth", str(b)]) == 2


def test_module_entry_point(tmp_path):
    src = _write(tmp_path / "z.csv", [1.0, 2.0, 3.0])
    proc = subprocess.run([sys.executable, "-m", "mqseg", "fit", "--input", str(src), "--q", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 3
