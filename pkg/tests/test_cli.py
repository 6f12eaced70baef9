import json
import subprocess
import sys

import numpy as np

from pinnlab import cli
from pinnlab import datasets as ds
from pinnlab import harness as hs


def test_presets_lists_all(capsys):
    assert cli.main(["presets"]) == 0
    assert capsys.readouterr().out.split() == sorted(hs.PRESETS)


def test_run_writes_report_and_figures(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("preset = ideal-linspace\nmax_iters = 5\n")
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(cfg), "--set", "model=nn", "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["iterations"] <= 5
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["model"] == "nn"
    assert (out / "loss_curve.png").is_file() and (out / "predictions.png").is_file()


def test_run_no_figures(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--set", "max_iters=2", "--out", str(out), "--no-figures"]) == 0
    assert not list(out.glob("*.png"))
    assert (out / "predictions.csv").is_file()


def test_sweep_prints_rows(tmp_path, capsys):
    code = cli.main([
        "sweep", "--set", "preset=ideal-linspace", "--set", "max_iters=3", "--axis", "n_data",
        "--values", "5,8", "--repeats", "1", "--out", str(tmp_path), "--no-figures",
    ])
    assert code == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [r["n_data"] for r in rows] == [5, 8]
    assert (tmp_path / "sweep.csv").is_file()


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["run", "--set", "nope=1", "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--set", "missing-equals", "--out", str(tmp_path)]) == 2
    assert cli.main(["gen-data", "--system", "wave", "--out", str(tmp_path / "x.csv")]) == 2
    assert "config error" in capsys.readouterr().err


def test_io_errors_exit_3(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "absent.txt"), "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("time_s,row,col,value_c\n0.0,0,0,abc\n")
    assert cli.main(["denoise", "--in", str(bad), "--out", str(tmp_path / "o.csv")]) == 3


def test_gen_data_round_trip(tmp_path):
    p = tmp_path / "p.csv"
    h = tmp_path / "h.csv"
    assert cli.main(["gen-data", "--system", "pendulum", "--out", str(p)]) == 0
    assert cli.main(["gen-data", "--system", "heat", "--out", str(h), "--set", "heat_nx=5"]) == 0
    assert len(ds.load_pendulum_csv(p)) == 1500
    stack = ds.load_frames_csv(h)
    assert stack.frames.shape == (41, 8, 5)


def test_denoise_even_window(tmp_path, capsys):
    h = tmp_path / "h.csv"
    cli.main(["gen-data", "--system", "heat", "--out", str(h), "--set", "heat_steps=200", "--set", "heat_save_every=1"])
    stack = ds.load_frames_csv(h)
    frames = stack.frames.copy()
    frames[40] += 150
    ds.write_frames_csv(ds.FrameStack(stack.timestamps, frames), h)
    capsys.readouterr()
    out = tmp_path / "clean.csv"
    assert cli.main(["denoise", "--in", str(h), "--out", str(out), "--window", "30"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["note"] == "window 30 adjusted to odd 31"
    assert summary["dropped_frames"] == 1 and summary["stuck_pixels"] == 0
    assert ds.load_frames_csv(out).frames.shape[0] == 200


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pinnlab", "presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "heat-inverse" in res.stdout
