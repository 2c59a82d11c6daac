"""Command-line recipes: phase-scan, envelope, fm-optimize, verify, simulate.

Every recipe writes its data files plus ``manifest.json`` into ``--out``.
Nothing time- or host-dependent is written, so identical inputs give
identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, circuits, config, drift, motional, verify
from .motional import NonClosedPulseError


def _num(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_manifest(out: Path, command: str, cfg: config.ExperimentConfig, seed: int, files: list[str]) -> None:
    digests = {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in sorted(files)}
    write_json(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": cfg.raw,
        "files": digests,
    })


# ------------------------------------------------------------------ recipes

def cmd_phase_scan(cfg: config.ExperimentConfig, args, out: Path) -> int:
    ps = cfg.raw["phase_scan"]
    scheme = args.scheme or ps["scheme"]
    setup = cfg.setup(scheme)
    phis = np.deg2rad(np.linspace(ps["start_deg"], ps["stop_deg"], int(ps["points"])))
    scan = drift.phase_scan(setup, scheme, int(ps["n_gates"]), phis, float(np.deg2rad(ps["light_shift_deg"])),
                            bool(cfg.raw["drift"]["sq_crosstalk"]))
    n = setup.n
    header = ["phi_beam_rad"] + [f"population_ion{i}" for i in range(n)] + ["target_fidelity"]
    rows = [[p, *pop, f] for p, pop, f in zip(scan.phi_values, scan.populations, scan.fidelity)]
    write_csv(out / "phase_scan.csv", header, rows)
    spectators = setup.xmap.spectators
    print(f"phase-scan {scheme}: {len(rows)} points, spectator peaks "
          + ", ".join(f"ion{j}={scan.populations[:, j].max():.4g}" for j in spectators))
    return _finish(out, "phase-scan", cfg, args, ["phase_scan.csv"])


def cmd_envelope(cfg: config.ExperimentConfig, args, out: Path) -> int:
    run = cfg.raw["run"]
    schemes = [args.scheme] if args.scheme else list(cfg.raw["echo"]["schemes"])
    model = cfg.drift_model()
    cal = cfg.calibration()
    seed = int(run["master_seed"])
    counts = [int(c) for c in run["gate_counts"]]
    rows = []
    summary = {"schemes": []}
    for scheme in schemes:
        setup = cfg.setup(scheme, cal)
        series = drift.envelope(setup, scheme, counts, int(run["trials"]), model, seed, jobs=args.jobs)
        for i, c in enumerate(counts):
            for t in range(series.trials):
                rows.append([scheme, c, t, 1.0 - series.infidelity[i, t], series.infidelity[i, t],
                             series.coherent_infidelity[i, t], *series.populations[i, t],
                             series.phi_beam_final[i, t]])
        s = series.summary()
        if len(set(counts)) >= 2:
            fit = drift.linear_fit_fidelity(series)
            s["fit"] = {"slope": fit.slope, "slope_stderr": fit.slope_stderr, "intercept": fit.intercept,
                        "fidelity_per_gate": fit.fidelity_per_gate}
        summary["schemes"].append(s)
        top = s["counts"][-1]
        print(f"envelope {scheme}: {top['gate_count']} gates infidelity "
              f"[{top['infidelity_min']:.4g}, {top['infidelity_max']:.4g}] mean {top['infidelity_mean']:.4g}"
              + (f", slope {s['fit']['slope']:.4g}" if "fit" in s else ""))
    n = cal.xmap.n_ions
    header = (["scheme", "gate_count", "trial", "fidelity", "infidelity", "coherent_infidelity"]
              + [f"population_ion{i}" for i in range(n)] + ["phi_beam_final_rad"])
    write_csv(out / "envelope_trials.csv", header, rows)
    write_json(out / "envelope_summary.json", summary)
    return _finish(out, "envelope", cfg, args, ["envelope_trials.csv", "envelope_summary.json"])


def cmd_fm_optimize(cfg: config.ExperimentConfig, args, out: Path) -> int:
    modes = cfg.modes()
    targets = cfg.xmap().targets
    try:
        res = cfg.fm_result()
    except motional.OptimizationError as exc:
        print(f"error: {exc} (best residual {exc.best_residual:.3e})", file=sys.stderr)
        return 3
    pulse = res.pulse
    pulse.save(out / "pulse.csv")
    alphas = {}
    for ion in targets:
        for k, f in enumerate(modes.frequencies):
            a = motional.displacement(pulse, modes.eta[ion, k], pulse.rabi, f)
            q = motional.displacement_quad(pulse, modes.eta[ion, k], pulse.rabi, f)
            alphas[f"ion{ion}_mode{k}"] = {"closed_form": abs(a), "quadrature": abs(q)}
    a, b = targets
    theta_q = motional.geometric_phase_quad(pulse, modes.eta[a], modes.eta[b], pulse.rabi, pulse.rabi,
                                            modes.frequencies)
    report = {
        "targets": list(targets),
        "n_segments": pulse.n_segments,
        "tau_s": pulse.tau,
        "rabi_rad_per_s": pulse.rabi,
        "theta": res.theta,
        "theta_quadrature": theta_q,
        "max_alpha": res.max_alpha,
        "max_alpha_quadrature": max(v["quadrature"] for v in alphas.values()),
        "alpha": alphas,
        "attempts": res.attempts,
    }
    write_json(out / "fm_report.json", report)
    print(f"fm-optimize: max|alpha| {res.max_alpha:.3e}, theta {res.theta:.12f}, "
          f"Rabi 2pi x {pulse.rabi / (2 * np.pi) / 1e3:.3f} kHz")
    return _finish(out, "fm-optimize", cfg, args, ["pulse.csv", "fm_report.json"])


def cmd_verify(cfg: config.ExperimentConfig, args, out: Path) -> int:
    cal = cfg.calibration()
    pulse = cfg.pulse()
    opts = verify.VerifyOptions(draws=args.draws, seed=int(cfg.raw["run"]["master_seed"]),
                                echo_axis=cfg.raw["echo"]["echo_axis"])
    checks = verify.run_checks(cal, opts, cfg.modes() if pulse is not None else None, pulse)
    for c in checks:
        print(f"{c.status.upper():8s} {c.name}: {c.value:.3e} (tol {c.tolerance:.0e}) {c.detail}")
    rep = verify.report(checks)
    write_json(out / "verify_report.json", rep)
    code = _finish(out, "verify", cfg, args, ["verify_report.json"])
    return code if rep["passed"] else 1


def cmd_simulate(cfg: config.ExperimentConfig, args, out: Path) -> int:
    try:
        circuit = circuits.Circuit.from_text(Path(args.circuit).read_text())
    except OSError as exc:
        raise config.ConfigError(f"cannot read circuit {args.circuit}: {exc}") from exc
    model = cfg.drift_model()
    cal = cfg.calibration()
    setup = drift.Setup(cal)
    settings = setup.settings(model, float(np.deg2rad(args.phi_beam)))
    rec = circuits.simulate_circuit(circuit, settings)
    result = {
        "n_qubits": circuit.n,
        "n_ms_gates": rec.n_ms_gates,
        "n_sq_pulses": rec.n_sq_pulses,
        "populations": [float(p) for p in rec.populations],
        "target_fidelity": rec.target_fidelity,
        "coherent_infidelity": rec.coherent_infidelity,
        "stochastic_infidelity": rec.stochastic_infidelity,
        "infidelity": rec.infidelity,
        "infidelity_multiplicative": rec.infidelity_multiplicative,
    }
    write_json(out / "simulate.json", result)
    print(f"simulate: target fidelity {rec.target_fidelity:.6f}, infidelity {rec.infidelity:.4g}")
    return _finish(out, "simulate", cfg, args, ["simulate.json"])


def _finish(out: Path, command: str, cfg, args, files: list[str]) -> int:
    write_manifest(out, command, cfg, int(cfg.raw["run"]["master_seed"]), files)
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--preset", choices=sorted(config.PRESETS), help="named crosstalk preset")
    common.add_argument("--seed", type=int, help="master seed (overrides run.master_seed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field, e.g. drift.light_shift_deg=0")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="msxtalk", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("phase-scan", parents=[common], help="spectator populations vs beam phase")
    s.add_argument("--scheme", choices=circuits.SCHEMES)
    s.set_defaults(func=cmd_phase_scan)
    s = sub.add_parser("envelope", parents=[common], help="Monte-Carlo infidelity band vs gate count")
    s.add_argument("--scheme", choices=circuits.SCHEMES, help="single scheme instead of echo.schemes")
    s.set_defaults(func=cmd_envelope)
    s = sub.add_parser("fm-optimize", parents=[common], help="optimize a frequency-modulated pulse")
    s.set_defaults(func=cmd_fm_optimize)
    s = sub.add_parser("verify", parents=[common], help="run the identity checks")
    s.add_argument("--draws", type=int, default=200, help="random draws per identity")
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("simulate", parents=[common], help="simulate a circuit text file")
    s.add_argument("--circuit", required=True, help="circuit in the line-oriented text format")
    s.add_argument("--phi-beam", type=float, default=0.0, help="beam phase in degrees")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.master_seed={args.seed}")
    try:
        if args.jobs < 1:
            raise config.ConfigError("--jobs must be at least 1")
        cfg = config.load(args.config, args.preset, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return args.func(cfg, args, out)
    except (config.ConfigError, NonClosedPulseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
