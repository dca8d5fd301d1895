import csv
import json

import numpy as np
import pytest

from levferro import cli, field
from levferro.config import default_config_path
from levferro.signals import TimeSeries

CONFIG = str(default_config_path())


def run(tmp_path, *args):
    return cli.main([*args, "--config", CONFIG, "--out", str(tmp_path)])


def latest(tmp_path, sub):
    base = tmp_path / sub
    return base / (base / "latest").read_text().strip()


def result(tmp_path, sub):
    return json.loads((latest(tmp_path, sub) / "result.json").read_text())


def test_modes(tmp_path):
    assert run(tmp_path, "modes") == 0
    r = result(tmp_path, "modes")
    assert r["f_z_hz"] == pytest.approx(59.1, abs=0.2)
    assert r["f_beta_hz"] == pytest.approx(478.3, abs=1.0)
    assert r["z0_m"] == pytest.approx(270e-6, rel=0.15)
    meta = json.loads((latest(tmp_path, "modes") / "metadata.json").read_text())
    assert "timestamp_utc" in meta


def test_invert(tmp_path):
    assert run(tmp_path, "invert", "--method", "linear") == 0
    r = result(tmp_path, "invert")["linear"]
    assert r["R"] == pytest.approx(20.78e-6, abs=0.1e-6)
    assert r["M"] == pytest.approx(6.91e5, abs=0.05e5)


def test_results_are_byte_identical_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["invert", "--config", CONFIG, "--out", str(out), "--seed", "4", "--n-samples", "5000"]) == 0
        assert cli.main(["simulate", "--config", CONFIG, "--out", str(out), "--seed", "4", "--duration", "2"]) == 0
    for sub, name in (("invert", "result.json"), ("simulate", "result.json"), ("simulate", "angle.flts")):
        assert (latest(a, sub) / name).read_bytes() == (latest(b, sub) / name).read_bytes()


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    assert cli.main(["modes", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    assert "usage:" in err and "not found" in err
    assert cli.main(["modes", "--out", str(tmp_path)]) != 0
    assert cli.main(["--config", CONFIG]) != 0


def test_global_flags_before_subcommand(tmp_path):
    assert cli.main(["--config", CONFIG, "--out", str(tmp_path), "--format", "csv", "noise"]) == 0
    d = latest(tmp_path, "noise")
    assert (d / "result.csv").exists() and not (d / "result.json").exists()
    rows = list(csv.DictReader(open(d / "levels.csv")))
    assert {r["component"] for r in rows} >= {"thermal", "back_action", "total", "erl"}


def test_fit_coil(tmp_path, cfg):
    mag = cfg.magnet()
    I = np.linspace(-0.03, 0.03, 15)
    path = tmp_path / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coil_id", "current_a", "f_alpha_hz"])
        for k in (1, 2):
            for i, f in zip(I, field.alpha_freq_vs_current(mag, 1.38e-6, cfg.coil(k), I)):
                w.writerow([k, i, f])
    assert run(tmp_path, "fit-coil", "--data", str(path)) == 0
    r = result(tmp_path, "fit-coil")
    assert r["B0_t"] == pytest.approx(1.38e-6, rel=1e-6)
    assert r["coil1"]["angle_deg"] == pytest.approx(73.0, abs=1e-4)
    assert (latest(tmp_path, "fit-coil") / "fit_curve.csv").exists()


def test_bad_input_file_reports_line(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("t,amplitude\n0,1\n1,oops\n")
    assert run(tmp_path, "fit-ringdown", "--input", str(p)) == 2
    assert "line 3" in capsys.readouterr().err


def test_signal_subcommands(tmp_path):
    fs = 1000.0
    t = np.arange(int(60 * fs)) / fs
    ts = TimeSeries(fs, 0.5 * np.cos(2 * np.pi * 50.0 * t))
    ts.to_binary(tmp_path / "x.flts")
    assert run(tmp_path, "lockin", "--input", str(tmp_path / "x.flts"), "--f-ref", "50", "--bandwidth", "0.5",
               "--scale", "peak") == 0
    assert result(tmp_path, "lockin")["settled_mean_amplitude"] == pytest.approx(0.5, rel=1e-2)
    assert run(tmp_path, "psd", "--input", str(tmp_path / "x.flts"), "--segment-length", "4000") == 0
    r = result(tmp_path, "psd")
    assert r["integrated_power"] == pytest.approx(r["mean_square"], rel=0.02)

    rd = tmp_path / "rd.csv"
    tt = np.linspace(0, 10, 100)
    rd.write_text("t,amplitude\n" + "".join(f"{a},{b}\n" for a, b in zip(tt, np.exp(-tt / 3) + 0.01)))
    assert run(tmp_path, "fit-ringdown", "--input", str(rd), "--frequency", "100") == 0
    assert result(tmp_path, "fit-ringdown")["tau_s"] == pytest.approx(3.0, rel=1e-6)

    lz = tmp_path / "lz.csv"
    f = np.linspace(90, 110, 401)
    S = 1.0 / ((f - 100) ** 2 + 0.25) + 0.01
    lz.write_text("f,S\n" + "".join(f"{a},{b}\n" for a, b in zip(f, S)))
    assert run(tmp_path, "fit-lorentzian", "--input", str(lz)) == 0
    assert result(tmp_path, "fit-lorentzian")["linewidth_hz"] == pytest.approx(1.0, rel=1e-4)


def test_resolution_from_file(tmp_path):
    I = np.logspace(-12, -9, 10)
    p = tmp_path / "c.csv"
    p.write_text("current_a,amplitude\n" + "".join(f"{i},{np.hypot(1e3 * i, 1e-8)}\n" for i in I))
    assert run(tmp_path, "resolution", "--input", str(p)) == 0
    r = result(tmp_path, "resolution")
    assert r["crossing"]["I_snr1_a"] == pytest.approx(1e-11, rel=1e-4)
    assert (latest(tmp_path, "resolution") / "crossing_model.csv").exists()


def test_axion_reach(tmp_path):
    b = tmp_path / "bounds.csv"
    b.write_text("frequency_hz,g_limit,label\n1e-3,3e-13,red giants\n")
    assert run(tmp_path, "axion-reach", "--bounds", str(b)) == 0
    d = latest(tmp_path, "axion-reach")
    rows = list(csv.DictReader(open(d / "reach_current.csv")))
    assert list(rows[0]) == ["frequency_hz", "mass_ev", "g_limit"]
    assert len(rows) == 200
    assert (d / "reference_bounds.csv").exists()
    assert result(tmp_path, "axion-reach")["current"]["B_a_per_g_t"] == pytest.approx(2.1e-8, rel=0.1)


def test_reproduce_subset(tmp_path):
    assert run(tmp_path, "reproduce", "--only", "3", "--only", "11") == 0
    r = result(tmp_path, "reproduce")
    assert r["all_passed"] and [c["number"] for c in r["checks"]] == [3, 11]
