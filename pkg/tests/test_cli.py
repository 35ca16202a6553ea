from __future__ import annotations

import hashlib
import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from freqlab import experiment as ex
from freqlab.cli import main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
GOLDEN = json.loads((Path(__file__).parent / "golden" / "presets.json").read_text())

NUMERIC = {
    "simulate": ["dataset.csv", "dataset.csv.json"],
    "fit": ["results.json"],
    "bounds": ["bounds.json"],
    "sweep": ["sweep.dat", "sweep_summary.json", "curve_statistical_hz.tsv", "curve_crlb_rad_s.tsv",
              "curve_total_hz.tsv", "curve_heisenberg.tsv"],
    "qft": ["qft_report.json", "qft_distribution.dat"],
    "noon": ["noon_report.json", "noon_curve.dat"],
}


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(Path(path).read_text())


def write_config(path, **kw):
    base = {"units": "hz", "signal_frequency": 1002000000.0, "control_frequency": 1000000000.0,
            "rabi_frequency": 40e6, "points": 200, "initial_phase": 0.7, "seed": 7}
    base.update(kw)
    lines = []
    for k, v in base.items():
        lines.append(f"{k} = {json.dumps(v)}")
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- simulate / fit

def test_simulate_electron_preset(tmp_path, capsys):
    assert run("simulate", "--preset", "electron", "--out", tmp_path) == 0
    text = (tmp_path / "dataset.csv").read_text().splitlines()
    assert text[0] == "n,timestamp_s,outcome"
    t1 = float(text[1].split(",")[1])
    t2 = float(text[2].split(",")[1])
    assert t2 - t1 == pytest.approx(0.7520416666666667e-6, rel=1e-9)
    out = capsys.readouterr().out
    assert "R = 132971" in out and "expected FFT peak" in out
    m = read_json(tmp_path / "manifest.json")
    for key in ("command", "config_path", "seed", "output_directory", "tool_version", "config_hash"):
        assert key in m


@pytest.mark.parametrize("name", ["electron", "nuclear"])
def test_golden_presets(tmp_path, name):
    g = GOLDEN[name]
    assert run("simulate", "--preset", name, "--out", tmp_path / "s") == 0
    digest = hashlib.sha256((tmp_path / "s" / "dataset.csv").read_bytes()).hexdigest()
    assert digest == g["dataset_sha256"]
    assert run("fit", tmp_path / "s" / "dataset.csv", "--out", tmp_path / "f") == 0
    rec = read_json(tmp_path / "f" / "results.json")
    for key in ("detuning_hat_hz", "stat_err_hz", "crlb_hz"):
        assert rec[key] == pytest.approx(g[key], rel=1e-8)


def test_same_seed_identical_files(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--preset", "nuclear", "--seed", 3, "--out", tmp_path / d) == 0
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()
    assert run("simulate", "--preset", "nuclear", "--seed", 4, "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "dataset.csv").read_bytes() != (tmp_path / "c" / "dataset.csv").read_bytes()


def test_zero_point_config_is_validation_error(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.toml", points=0)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "points" in capsys.readouterr().err


@pytest.mark.parametrize("edit,field", [
    ({"units": "furlongs"}, "units"),
    ({"rabi_frequency": -1.0}, "rabi"),
    ({"shots_per_point": 0}, "shots_per_point"),
])
def test_invalid_config_names_field(tmp_path, capsys, edit, field):
    cfg = write_config(tmp_path / "bad.toml", **edit)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert field in capsys.readouterr().err


def test_malformed_and_missing_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("units = = 3\n")
    assert run("simulate", "--config", bad, "--out", tmp_path / "o") == 2
    assert run("simulate", "--config", tmp_path / "nope.toml", "--out", tmp_path / "o") == 4
    assert run("simulate", "--out", tmp_path / "o") == 2


def test_fit_missing_dataset_is_io_error(tmp_path):
    assert run("fit", tmp_path / "missing.csv", "--out", tmp_path / "o") == 4


def test_fit_noiseless_record(tmp_path):
    cfg = ex.config_from_dict({"units": "hz", "signal_frequency": 1002000000.0,
                               "control_frequency": 1000000000.0, "rabi_frequency": 40e6,
                               "points": 300, "initial_phase": 0.7})
    ex.expected_record(cfg).to_csv(tmp_path / "clean.csv")
    assert run("fit", tmp_path / "clean.csv", "--out", tmp_path / "o") == 0
    rec = read_json(tmp_path / "o" / "results.json")
    assert rec["detuning_hat_rad_s"] == pytest.approx(cfg.delta, rel=1e-10)
    assert rec["detuning_hat_hz"] == pytest.approx(2e6, rel=1e-10)
    for key in ("method", "omega_hat_hz", "stat_err_hz", "sys_err_hz", "total_err_hz", "crlb_hz",
                "heisenberg_hz", "seed", "omega_hat_rad_s", "stat_err_rad_s"):
        assert key in rec


def test_fit_both_methods_agree(tmp_path):
    assert run("simulate", "--preset", "nuclear", "--out", tmp_path / "s") == 0
    for m in ("lsq", "fft-sinc"):
        assert run("fit", tmp_path / "s" / "dataset.csv", "--method", m, "--out", tmp_path / m) == 0
    a = read_json(tmp_path / "lsq" / "results.json")
    b = read_json(tmp_path / "fft-sinc" / "results.json")
    assert abs(a["detuning_hat_hz"] - b["detuning_hat_hz"]) < 3 * max(a["stat_err_hz"], b["stat_err_hz"])


def test_fit_failure_is_numerical_exit(tmp_path, capsys):
    cfg = ex.config_from_dict({"units": "hz", "signal_frequency": 1002000000.0,
                               "control_frequency": 1000000000.0, "rabi_frequency": 40e6, "points": 3})
    ex.expected_record(cfg).to_csv(tmp_path / "tiny.csv")
    assert run("fit", tmp_path / "tiny.csv", "--out", tmp_path / "o") == 3
    assert "numerical failure" in capsys.readouterr().err


# ---------------------------------------------------------------- bounds

def test_bounds_single_point(tmp_path):
    assert run("bounds", "--points", 1, "--t-pi", 1, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "bounds.json")
    assert rep["variance_rad2_s2"] == 4.0
    assert rep["uncertainty_hz"] == pytest.approx(2 / (2 * math.pi))
    assert rep["bound_type"] == "strict"


def test_bounds_from_config_and_atoms(tmp_path):
    assert run("bounds", "--preset", "electron", "--atoms", 4, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "bounds.json")
    assert rep["R"] == 132971 and rep["atoms"] == 4
    assert run("bounds", "--points", 5, "--out", tmp_path) == 2
    assert run("bounds", "--points", 0, "--t-pi", 1, "--out", tmp_path) == 2


# ---------------------------------------------------------------- sweep

def test_sweep_outputs_and_slope(tmp_path):
    assert run("sweep", "--config", CONFIGS / "scaling.toml", "--out", tmp_path) == 0
    summary = read_json(tmp_path / "sweep_summary.json")
    assert summary["slope"] == pytest.approx(-1.5, abs=0.1)
    assert summary["seeds"] == 20 and len(summary["durations_s"]) == 4
    curve = np.loadtxt(tmp_path / "curve_statistical_hz.tsv")
    assert curve.shape == (4, 2)
    header = (tmp_path / "curve_statistical_hz.tsv").read_text().splitlines()[0]
    assert header.startswith("#") and "\t" in header
    for name in ("statistical", "fit_sigma", "crlb", "systematic", "total"):
        for unit in ("hz", "rad_s"):
            assert (tmp_path / f"curve_{name}_{unit}.tsv").exists()


def test_sweep_threads_do_not_change_output(tmp_path):
    args = ["sweep", "--config", CONFIGS / "scaling.toml", "--durations", "1.25e-6,1.25e-5", "--seeds", 6]
    assert run(*args, "--out", tmp_path / "one") == 0
    assert run(*args, "--threads", 3, "--out", tmp_path / "three") == 0
    for name in NUMERIC["sweep"]:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "three" / name).read_bytes()


def test_sweep_validation(tmp_path):
    cfg = CONFIGS / "scaling.toml"
    assert run("sweep", "--config", cfg, "--durations", "1e-6", "--out", tmp_path) == 2
    assert run("sweep", "--config", cfg, "--durations", "a,b", "--out", tmp_path) == 2
    assert run("sweep", "--config", cfg, "--seeds", 1, "--out", tmp_path) == 2
    assert run("sweep", "--preset", "electron", "--out", tmp_path) == 2


# ---------------------------------------------------------------- qft / noon

def test_qft_report(tmp_path):
    assert run("qft", "-N", 3, "-T", 1, "--delta-hz", 0.5, "--trials", 200, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "qft_report.json")
    assert rep["most_likely_bits"] == "001"
    assert rep["most_likely_prob"] == pytest.approx(1.0, abs=1e-12)
    assert rep["delta_hat_rad_s"] == pytest.approx(math.pi)
    assert rep["delta_hat_hz"] == pytest.approx(0.5)
    assert "qft_rms_error_hz" in rep and "qft_rms_error_rad_s" in rep
    assert len((tmp_path / "qft_distribution.dat").read_text().splitlines()) == 2 + 8
    assert run("qft", "-N", 0, "--out", tmp_path) == 2


def test_noon_report(tmp_path):
    assert run("noon", "--t-pi", 2e-6, "--out", tmp_path) == 0
    rep = read_json(tmp_path / "noon_report.json")
    assert rep["time_ratio"] > 3
    assert rep["entangled"]["total"] == pytest.approx(7e-6)
    data = np.loadtxt(tmp_path / "noon_curve.dat")
    assert np.max(np.abs(data[:, 1] - data[:, 2])) < 1e-10
    assert run("noon", "--t-pi", 0, "--out", tmp_path) == 2


# ---------------------------------------------------------------- manifests and determinism

COMMANDS = {
    "simulate": ["simulate", "--preset", "nuclear", "--seed", 2],
    "bounds": ["bounds", "--preset", "electron"],
    "sweep": ["sweep", "--config", CONFIGS / "scaling.toml", "--durations", "1.25e-6,1.25e-5", "--seeds", 5],
    "qft": ["qft", "-N", 4, "--trials", 300, "--seed", 5],
    "noon": ["noon", "--phi", 0.3],
}


@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_rerun_from_manifest_is_byte_identical(tmp_path, name):
    assert run(*COMMANDS[name], "--out", tmp_path / "first") == 0
    extra = ["--threads", 2] if name == "sweep" else []
    assert run("rerun", tmp_path / "first" / "manifest.json", *extra, "--out", tmp_path / "second") == 0
    for f in NUMERIC[name]:
        assert (tmp_path / "first" / f).read_bytes() == (tmp_path / "second" / f).read_bytes()
    a = read_json(tmp_path / "first" / "manifest.json")
    b = read_json(tmp_path / "second" / "manifest.json")
    assert a["config_hash"] == b["config_hash"] and a["argv"] == b["argv"]


def test_rerun_detects_changed_inputs(tmp_path):
    cfg = write_config(tmp_path / "c.toml")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "a") == 0
    write_config(cfg, seed=8)
    assert run("rerun", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 2
    assert run("rerun", tmp_path / "missing.json", "--out", tmp_path / "b") == 4


def test_fit_rerun(tmp_path):
    assert run("simulate", "--preset", "nuclear", "--out", tmp_path / "s") == 0
    assert run("fit", tmp_path / "s" / "dataset.csv", "--out", tmp_path / "f1") == 0
    assert run("rerun", tmp_path / "f1" / "manifest.json", "--out", tmp_path / "f2") == 0
    assert (tmp_path / "f1" / "results.json").read_bytes() == (tmp_path / "f2" / "results.json").read_bytes()


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FREQLAB_OUT", str(tmp_path / "env"))
    assert run("noon") == 0
    assert (tmp_path / "env" / "noon_report.json").exists()


@pytest.mark.skipif(shutil.which("freqlab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["freqlab", "bounds", "--points", "2", "--t-pi", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert read_json(tmp_path / "bounds.json")["variance_rad2_s2"] == pytest.approx(0.8)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "freqlab.cli", "noon", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
