import csv
import json
import os

import numpy as np
import pytest

from raman_memory import io as rio
from raman_memory.cli import run_command
from raman_memory.photon_stats import G2Model, g2_out

SMALL_GRID = ["--set", "grid.n_z=24", "--set", "grid.n_t=1000"]


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_g2_predict_optimized(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"g2": {"N_SRS": 2.8e-3, "N_F": 3.8e-3, "eta": 0.127}})
    out = tmp_path / "out"
    assert run_command(["g2-predict", "--config", cfg, "--out", str(out)]) == 0
    rows = read_rows(out / "g2_prediction.csv")
    last = rows[-1]
    assert float(last["eta_h"]) == 1.0
    assert abs(float(last["g2_out"]) - 0.14) <= 0.02
    thr = json.loads((out / "threshold.json").read_text())
    assert 0.059 <= thr["heralding_threshold"] <= 0.071
    run = json.loads((out / "run.json").read_text())
    assert run["status"] == "ok" and run["verb"] == "g2-predict"
    assert run["config"]["g2"]["eta"] == 0.127
    assert {"version", "wall_time_s", "notes", "backend"} <= set(run)
    assert sorted(run["outputs"]) == ["g2_prediction.csv", "threshold.json"]


def test_spectrum_two_lines(tmp_path):
    out = tmp_path / "out"
    assert run_command(["spectrum", "--out", str(out), "--set", "spectrum.n_points=601"]) == 0
    summ = json.loads((out / "spectrum_summary.json").read_text())
    assert summ["line_strength_ratio"] == pytest.approx(999.0, rel=1e-12)
    # the populated line's tail adds to the small peak
    assert 800 < summ["peak_ratio"] < 999
    rows = np.array([[float(r["detuning_GHz"]), float(r["optical_depth"])]
                     for r in read_rows(out / "spectrum.csv")])
    od = rows[:, 1]
    peaks = [i for i in range(1, len(od) - 1) if od[i] > od[i - 1] and od[i] > od[i + 1]]
    assert len(peaks) == 2
    assert rows[peaks[0], 0] == pytest.approx(0.0, abs=1e-9)
    assert rows[peaks[1], 0] == pytest.approx(9.192631770, rel=1e-9)


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "does/not/exist.json"],
    ["teleport"],
    ["simulate", "--set", "medium.alpha=1.5"],
    ["simulate", "--set", "medium.unknown=1"],
    ["simulate", "--workers", "0"],
])
def test_exit_1_without_outputs(tmp_path, argv, capsys):
    out = tmp_path / "out"
    assert run_command(argv + ["--out", str(out)]) == 1
    assert not out.exists()
    assert capsys.readouterr().err.startswith("error")


def test_alpha_message(tmp_path, capsys):
    run_command(["simulate", "--set", "medium.alpha=1.5", "--out", str(tmp_path / "o")])
    assert "alpha out of [0,1]" in capsys.readouterr().err


def test_unwritable_output_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_command(["g2-predict", "--set", "g2.preset=\"bns-fitted\"",
                        "--out", str(blocker / "sub")]) == 1
    assert "output directory" in capsys.readouterr().err


def test_lenient_flag(tmp_path):
    out = tmp_path / "out"
    argv = ["g2-predict", "--set", "g2.preset=\"bns-fitted\"", "--set", "g2.colour=1", "--out", str(out)]
    assert run_command(argv) == 1
    assert run_command(argv + ["--lenient"]) == 0
    assert any("g2.colour" in w for w in json.loads((out / "run.json").read_text())["warnings"])


def test_crash_between_writes_leaves_no_partial_file(tmp_path, monkeypatch):
    out = tmp_path / "out"
    real = os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == 2:
            raise OSError(28, "No space left on device")
        return real(src, dst)

    monkeypatch.setattr(os, "replace", flaky)
    assert run_command(["g2-predict", "--set", "g2.preset=\"bns-optimized\"", "--out", str(out)]) == 1
    names = sorted(os.listdir(out))
    assert names == ["g2_prediction.csv"]
    monkeypatch.setattr(os, "replace", real)
    ref = tmp_path / "ref"
    assert run_command(["g2-predict", "--set", "g2.preset=\"bns-optimized\"", "--out", str(ref)]) == 0
    assert (out / "g2_prediction.csv").read_text() == (ref / "g2_prediction.csv").read_text()


def test_atomic_write_cleans_temp_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "a.txt"
    target.write_text("old")
    monkeypatch.setattr(os, "replace", lambda *a: (_ for _ in ()).throw(OSError("boom")))
    with pytest.raises(OSError):
        rio.atomic_write_text(target, "new content")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["a.txt"]


def test_simulate_and_numerical_failure(tmp_path):
    out = tmp_path / "ok"
    assert run_command(["simulate", "--out", str(out)] + SMALL_GRID) == 0
    res = json.loads((out / "result.json").read_text())
    assert 0.15 < res["eta_total"] < 0.25
    assert read_rows(out / "trace.csv")
    bad = tmp_path / "bad"
    assert run_command(["simulate", "--out", str(bad), "--set", "grid.max_iter=1"] + SMALL_GRID) == 2
    run = json.loads((bad / "run.json").read_text())
    assert run["status"].startswith("numerical failure")
    assert run["outputs"] == []


def test_g2_fit_from_csv(tmp_path):
    truth = G2Model(a=0.5, N_SRS=0.081, N_F=0.009)
    N = np.concatenate([[0.0], np.geomspace(0.01, 3.0, 9)])
    g = g2_out(truth, N)
    rio.write_csv(tmp_path / "g2.csv", ("N_out", "g2", "g2_err"), zip(N, g, 0.01 * g))
    cfg = write_json(tmp_path / "c.json", {"data": {"path": "g2.csv"}})
    out = tmp_path / "out"
    assert run_command(["g2-fit", "--config", cfg, "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["params"]["N_SRS"] == pytest.approx(0.081, abs=1e-7)
    assert fit["params"]["N_F"] == pytest.approx(0.009, abs=1e-7)


def test_g2_fit_rank_deficient_is_input_error(tmp_path):
    rio.write_csv(tmp_path / "g2.csv", ("N_out", "g2"), [(0.0, 2.0), (0.0, 1.9)])
    cfg = write_json(tmp_path / "c.json", {"data": {"path": "g2.csv"}})
    assert run_command(["g2-fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_lifetime_fit_from_csv(tmp_path):
    t = np.linspace(50, 1000, 10)
    rio.write_csv(tmp_path / "d.csv", ("t_ns", "value"), zip(t, 0.3 * np.exp(-t / 294.0)))
    cfg = write_json(tmp_path / "c.json", {"data": {"path": "d.csv"}})
    out = tmp_path / "out"
    assert run_command(["lifetime-fit", "--config", cfg, "--out", str(out)]) == 0
    assert json.loads((out / "lifetime.json").read_text())["tau_ns"] == pytest.approx(294.0, rel=1e-8)


def test_noise_vs_pumping_from_csv(tmp_path):
    a = np.array([0.0005, 0.001, 0.002, 0.003])
    rio.write_csv(tmp_path / "d.csv", ("alpha", "N_noise"), zip(a, 9.0 * a + 4.4e-3))
    cfg = write_json(tmp_path / "c.json", {"data": {"path": "d.csv"}})
    out = tmp_path / "out"
    assert run_command(["noise-vs-pumping", "--config", cfg, "--out", str(out)]) == 0
    fit = json.loads((out / "fit.json").read_text())
    assert fit["params"]["offset"] == pytest.approx(4.4e-3, abs=1e-14)


def test_missing_data_column(tmp_path, capsys):
    rio.write_csv(tmp_path / "d.csv", ("alpha", "noise"), [(0.001, 0.01)])
    cfg = write_json(tmp_path / "c.json", {"data": {"path": "d.csv"}})
    assert run_command(["noise-vs-pumping", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "missing column" in capsys.readouterr().err


def test_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RMS_WORKERS", "3")
    out = tmp_path / "out"
    assert run_command(["g2-predict", "--set", "g2.preset=\"bns-fitted\"", "--out", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["workers"] == 3
