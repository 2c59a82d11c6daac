import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from msxtalk import cli, config

FAST = ["--set", "pulse.source=uniform", "--set", "run.trials=3", "--set", "drift.repetitions=2",
        "--set", "run.gate_counts=[1,3,5]"]


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


# ----------------------------------------------------------------- config

def test_defaults_build_a_model():
    cfg = config.load()
    m = cfg.drift_model()
    assert m.light_shift_per_gate == pytest.approx(np.deg2rad(4))
    assert m.stochastic_infidelity_per_gate == 4.6e-3
    assert cfg.xmap().targets == (1, 2)


def test_preset_and_override_order(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "tableII", "drift": {"light_shift_deg": 5.0}}))
    cfg = config.load(path, overrides=["drift.light_shift_deg=7", "echo.z_mode=virtual"])
    assert cfg.raw["drift"]["light_shift_deg"] == 7
    assert cfg.raw["drift"]["sq_infidelity_per_pulse"] == 7e-4
    assert cfg.raw["echo"]["z_mode"] == "virtual"
    assert cfg.xmap().targets == (1, 3)
    assert config.load(path).raw["drift"]["light_shift_deg"] == 5.0


@pytest.mark.parametrize("override", ["drift.nonsense=1", "nosuch.field=2", "drift", "=3",
                                      "echo.scheme=spin_echo", "run.trials=0", "drift.repetitions=0",
                                      "crosstalk.preset=tableIII", "chain.n_ions=4"])
def test_bad_overrides_rejected(override):
    with pytest.raises(config.ConfigError):
        config.load(overrides=[override])


def test_bad_files_rejected(tmp_path):
    with pytest.raises(config.ConfigError):
        config.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(config.ConfigError):
        config.load(tmp_path / "bad.json")
    with pytest.raises(config.ConfigError):
        config.load(preset="tableIV")


def test_inline_crosstalk_and_participation():
    cfg = config.load(overrides=['crosstalk={"targets": [0, 1], "epsilon": {"1:2": 0.01}}',
                                 "modes.participation={\"2\": 0.5}", "pulse.source=uniform"])
    assert cfg.xmap().eps(1, 2) == 0.01
    cal = cfg.calibration()
    assert cal.couplings[0, 2] == pytest.approx(0.5)


def test_neighbor_spectators_must_avoid_targets():
    cfg = config.load(overrides=["echo.neighbor_spectators=[1]", "pulse.source=uniform"])
    with pytest.raises(config.ConfigError):
        cfg.setup("neighbor")


def test_config_json_roundtrip(tmp_path):
    cfg = config.load(preset="tableII")
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert config.load(path).raw == cfg.raw


# -------------------------------------------------------------------- CLI

def test_envelope_outputs(tmp_path, capsys):
    assert run(tmp_path, "envelope", *FAST) == 0
    rows = list(csv.DictReader((tmp_path / "envelope_trials.csv").open()))
    assert len(rows) == 3 * 3 * 3
    assert {r["scheme"] for r in rows} == {"none", "neighbor", "local_collective"}
    r = rows[0]
    assert float(r["fidelity"]) == pytest.approx(1 - float(r["infidelity"]))
    assert "population_ion4" in r and "phi_beam_final_rad" in r
    summ = json.loads((tmp_path / "envelope_summary.json").read_text())
    assert {s["scheme"] for s in summ["schemes"]} == {"none", "neighbor", "local_collective"}
    assert "slope" in summ["schemes"][0]["fit"]
    man = json.loads((tmp_path / "manifest.json").read_text())
    data = (tmp_path / "envelope_trials.csv").read_bytes()
    assert man["files"]["envelope_trials.csv"] == hashlib.sha256(data).hexdigest()
    assert b"\r" not in data
    assert "envelope none" in capsys.readouterr().out


def test_envelope_is_deterministic_across_jobs(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run(a, "envelope", "--scheme", "none", *FAST, "--seed", "9") == 0
    assert run(b, "envelope", "--scheme", "none", *FAST, "--seed", "9", "--jobs", "2") == 0
    assert run(c, "envelope", "--scheme", "none", *FAST, "--seed", "10") == 0
    for f in ("envelope_trials.csv", "envelope_summary.json", "manifest.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert (a / "envelope_trials.csv").read_bytes() != (c / "envelope_trials.csv").read_bytes()


def test_phase_scan_outputs(tmp_path):
    assert run(tmp_path, "phase-scan", "--set", "pulse.source=uniform", "--set", "phase_scan.points=9") == 0
    rows = list(csv.reader((tmp_path / "phase_scan.csv").open()))
    assert rows[0][0] == "phi_beam_rad" and rows[0][-1] == "target_fidelity"
    assert len(rows) == 10
    assert float(rows[-1][0]) == pytest.approx(4 * np.pi)


def test_simulate_circuit_file(tmp_path):
    circ = tmp_path / "c.txt"
    circ.write_text("# qubits 5\nMS 1,2 0.7853981633974483 0.0\nSK1 1 3.141592653589793 1.5707963267948966\n")
    assert run(tmp_path, "simulate", "--circuit", str(circ), "--set", "pulse.source=uniform") == 0
    out = json.loads((tmp_path / "simulate.json").read_text())
    assert out["n_ms_gates"] == 1 and out["n_sq_pulses"] == 1
    assert len(out["populations"]) == 5
    assert out["infidelity"] == pytest.approx(out["coherent_infidelity"] + out["stochastic_infidelity"])
    assert run(tmp_path, "simulate", "--circuit", str(tmp_path / "none.txt")) == 2


def test_verify_passes_and_flags_failures(tmp_path):
    assert run(tmp_path / "ok", "verify", "--draws", "20", "--set", "pulse.source=uniform") == 0
    rep = json.loads((tmp_path / "ok" / "verify_report.json").read_text())
    assert rep["passed"] and all(c["status"] == "pass" for c in rep["checks"])
    assert run(tmp_path / "y", "verify", "--draws", "20", "--set", "pulse.source=uniform",
               "--set", "echo.echo_axis=Y") == 1


def test_verify_without_crosstalk_is_vacuous(tmp_path):
    assert run(tmp_path, "verify", "--draws", "5", "--set", "pulse.source=uniform",
               "--set", "crosstalk.scale=0") == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    status = {c["name"]: c["status"] for c in rep["checks"]}
    assert status["neighbor_cancellation_identity"] == "vacuous"
    assert status["local_cancellation_identity"] == "vacuous"


def test_fm_optimize_outputs(tmp_path):
    assert run(tmp_path, "fm-optimize", "--set", "pulse.n_starts=6") == 0
    rep = json.loads((tmp_path / "fm_report.json").read_text())
    assert rep["max_alpha_quadrature"] < 1e-6
    assert rep["theta_quadrature"] == pytest.approx(np.pi / 4, abs=1e-6)
    rows = list(csv.reader((tmp_path / "pulse.csv").open()))
    assert len(rows) > 15


def test_fm_optimize_failure_exit_code(tmp_path):
    assert run(tmp_path, "fm-optimize", "--set", "pulse.n_segments=1", "--set", "pulse.n_starts=1") == 3


def test_usage_errors(tmp_path):
    assert run(tmp_path, "envelope", "--set", "drift.bogus=1") == 2
    assert run(tmp_path, "envelope", "--jobs", "0") == 2
    with pytest.raises(SystemExit):
        cli.main(["launch"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "msxtalk", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
