"""Experiment configuration: JSON files, named presets and dotted overrides.

Human-facing units are degrees and hertz; everything handed to the library
is converted to radians and rad/s here.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import circuits, crosstalk, drift, motional


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "chain": {"n_ions": 5},
    "crosstalk": {"preset": "tableI", "scale": 1.0},
    "modes": {
        "generator": {"com_freq_hz": 3.0e6, "anisotropy": 0.01, "eta0": 0.08},
        "participation": {},
    },
    "pulse": {
        "source": "optimize",
        "n_segments": 15,
        "tau_s": 200e-6,
        "theta_deg": 45.0,
        "n_starts": 24,
        "seed": 0,
    },
    "drift": {
        "drift_rate_hz": 2.0,
        "gate_duration_s": 200e-6,
        "step_distribution": "uniform",
        "step_size_deg": None,
        "light_shift_deg": 4.0,
        "stochastic_infidelity_per_gate": 4.6e-3,
        "sq_infidelity_per_pulse": 0.0,
        "repetitions": 100,
        "persist_phase": True,
        "initial_phase_deg": None,
        "sq_crosstalk": True,
        "sq_phase_offset_deg": 0.0,
    },
    "echo": {
        "scheme": "none",
        "schemes": ["none", "neighbor", "local_collective"],
        "neighbor_spectators": [3],
        "sk1": True,
        "z_mode": "xy",
        "echo_axis": "Z",
    },
    "run": {"gate_counts": [1, 9, 13, 21], "trials": 100, "master_seed": 0},
    "phase_scan": {
        "scheme": "none",
        "n_gates": 21,
        "start_deg": 0.0,
        "stop_deg": 720.0,
        "points": 73,
        "light_shift_deg": 0.0,
    },
}

# tableI: collective-gate echo experiments, tableII: individual-gate echoes
PRESETS: dict[str, dict[str, Any]] = {
    "tableI": {
        "crosstalk": {"preset": "tableI"},
        "drift": {"light_shift_deg": 4.0, "sq_infidelity_per_pulse": 0.0},
        "echo": {"schemes": ["none", "neighbor", "local_collective"], "neighbor_spectators": [3]},
        "run": {"gate_counts": [1, 9, 13, 21]},
    },
    "tableII": {
        "crosstalk": {"preset": "tableII"},
        "drift": {"light_shift_deg": 6.0, "sq_infidelity_per_pulse": 7e-4},
        "echo": {"schemes": ["none", "local_individual"], "neighbor_spectators": [2]},
        "run": {"gate_counts": [1, 9, 13, 17, 21]},
    },
}


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is JSON when it parses, a plain string otherwise."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form path=value")
    path, raw = text.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_override(cfg: dict, text: str) -> dict:
    keys, value = parse_override(text)
    out = copy.deepcopy(cfg)
    node = out
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            raise ConfigError(f"override path {'.'.join(keys)} does not name a config field")
        node = nxt
    if keys[-1] not in node and not _open_section(keys[:-1]):
        raise ConfigError(f"unknown config field {'.'.join(keys)}")
    node[keys[-1]] = value
    return out


def _open_section(keys: list[str]) -> bool:
    # sections whose keys are free-form
    return keys in (["modes", "participation"], ["crosstalk", "epsilon"], ["crosstalk"],
                    ["modes"], ["pulse"])


def load(path: str | Path | None = None, preset: str | None = None,
         overrides: list[str] | tuple[str, ...] = ()) -> ExperimentConfig:
    """Defaults, then preset, then file, then overrides."""
    raw = copy.deepcopy(DEFAULTS)
    file_cfg: dict = {}
    if path is not None:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    name = preset or file_cfg.get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        raw = deep_merge(raw, PRESETS[name])
    raw = deep_merge(raw, {k: v for k, v in file_cfg.items() if k != "preset"})
    if name is not None:
        raw["preset"] = name
    for o in overrides:
        raw = apply_override(raw, o)
    return ExperimentConfig(raw)


def _deg(v):
    return None if v is None else float(np.deg2rad(v))


@dataclass
class ExperimentConfig:
    raw: dict
    _pulse: Any = field(default=None, repr=False)
    _fm: Any = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    # ---------------------------------------------------------------- checks
    def validate(self) -> None:
        r = self.raw
        for sec in ("chain", "crosstalk", "modes", "pulse", "drift", "echo", "run", "phase_scan"):
            if not isinstance(r.get(sec), dict):
                raise ConfigError(f"missing config section {sec!r}")
        schemes = [r["echo"]["scheme"], r["phase_scan"]["scheme"], *r["echo"]["schemes"]]
        for s in schemes:
            if s not in circuits.SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {sorted(circuits.SCHEMES)}")
        if "neighbor" in schemes and not r["echo"]["neighbor_spectators"]:
            raise ConfigError("the neighbor scheme needs a non-empty echo.neighbor_spectators list")
        if r["run"]["trials"] < 1:
            raise ConfigError("run.trials must be at least 1")
        if not r["run"]["gate_counts"]:
            raise ConfigError("run.gate_counts is empty")
        if r["pulse"]["source"] not in ("optimize", "file", "inline", "uniform"):
            raise ConfigError(f"unknown pulse source {r['pulse']['source']!r}")
        try:
            self.xmap()
            self.drift_model()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    # -------------------------------------------------------------- builders
    def xmap(self) -> crosstalk.CrosstalkMap:
        c = self.raw["crosstalk"]
        if c.get("preset"):
            if c["preset"] not in crosstalk.PRESETS:
                raise ConfigError(f"unknown crosstalk preset {c['preset']!r}")
            m = crosstalk.PRESETS[c["preset"]]
        else:
            m = crosstalk.CrosstalkMap.from_dict({
                "n_ions": c.get("n_ions", self.raw["chain"]["n_ions"]),
                "targets": c["targets"], "epsilon": c.get("epsilon", {})})
        if m.n_ions != self.raw["chain"]["n_ions"]:
            raise ConfigError(f"crosstalk map has {m.n_ions} ions, chain has {self.raw['chain']['n_ions']}")
        scale = c.get("scale", 1.0)
        return m if scale == 1.0 else m.scaled(scale)

    def modes(self) -> motional.ModeStructure:
        m = self.raw["modes"]
        if "frequencies_hz" in m:
            ms = motional.ModeStructure(2 * np.pi * np.asarray(m["frequencies_hz"], dtype=float),
                                        np.asarray(m["eta"], dtype=float))
        else:
            g = m["generator"]
            ms = motional.harmonic_chain_modes(self.raw["chain"]["n_ions"], 2 * np.pi * g["com_freq_hz"],
                                               g["anisotropy"], g["eta0"])
        return ms

    def participation(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in self.raw["modes"].get("participation", {}).items()}

    def fm_result(self) -> motional.FMResult:
        p = self.raw["pulse"]
        if self._fm is None:
            self._fm = motional.fm_optimize(self.modes(), self.xmap().targets, int(p["n_segments"]),
                                            float(p["tau_s"]), float(np.deg2rad(p["theta_deg"])),
                                            n_starts=int(p["n_starts"]), seed=int(p["seed"]))
        return self._fm

    def pulse(self) -> motional.FMPulseSequence | None:
        if self._pulse is not None:
            return self._pulse
        p = self.raw["pulse"]
        src = p["source"]
        if src == "optimize":
            self._pulse = self.fm_result().pulse
        elif src == "file":
            self._pulse = motional.FMPulseSequence.load(p["path"])
        elif src == "inline":
            self._pulse = motional.FMPulseSequence(
                tuple(p["durations_s"]), tuple(2 * np.pi * np.asarray(p["detunings_hz"], dtype=float)),
                p.get("rabi_rad_per_s"))
        else:
            return None
        return self._pulse

    def calibration(self) -> crosstalk.CrosstalkCalibration:
        xmap = self.xmap()
        pulse = self.pulse()
        if pulse is None:
            cal = crosstalk.CrosstalkCalibration.uniform(xmap, float(np.deg2rad(self.raw["pulse"]["theta_deg"])))
        else:
            cal = crosstalk.CrosstalkCalibration.from_pulse(xmap, self.modes(), pulse)
        part = self.participation()
        return cal.with_participation(part) if part else cal

    def drift_model(self) -> drift.DriftModel:
        d = self.raw["drift"]
        return drift.DriftModel(
            drift_rate=float(d["drift_rate_hz"]),
            gate_duration=float(d["gate_duration_s"]),
            step_distribution=d["step_distribution"],
            step_size=_deg(d["step_size_deg"]),
            light_shift_per_gate=_deg(d["light_shift_deg"]),
            stochastic_infidelity_per_gate=float(d["stochastic_infidelity_per_gate"]),
            sq_infidelity_per_pulse=float(d["sq_infidelity_per_pulse"]),
            repetitions=int(d["repetitions"]),
            persist_phase=bool(d["persist_phase"]),
            initial_phase=_deg(d["initial_phase_deg"]),
            sq_crosstalk=bool(d["sq_crosstalk"]),
            sq_phase_offset=_deg(d["sq_phase_offset_deg"]),
        )

    def setup(self, scheme: str | None = None, calibration=None) -> drift.Setup:
        e = self.raw["echo"]
        cal = calibration or self.calibration()
        spectators = tuple(int(i) for i in e["neighbor_spectators"]) if scheme == "neighbor" else ()
        overlap = set(spectators) & set(cal.xmap.targets)
        if overlap:
            raise ConfigError(f"neighbor spectators {sorted(overlap)} overlap the targets")
        return drift.Setup(cal, spectators, bool(e["sk1"]), e["z_mode"], e["echo_axis"])

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)
