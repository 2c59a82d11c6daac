"""Algebraic self-checks bundled as a pass/fail report.

Checks that exercise the configured crosstalk map are flagged vacuous when
that map has no crosstalk to cancel: they pass, but prove nothing.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import circuits, crosstalk, motional, spin_core
from .crosstalk import CrosstalkCalibration


@dataclass
class Check:
    name: str
    status: str        # "pass", "fail" or "vacuous"
    value: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        self.value = float(self.value)
        self.tolerance = float(self.tolerance)

    @property
    def ok(self) -> bool:
        return self.status != "fail"


@dataclass
class VerifyOptions:
    draws: int = 200
    seed: int = 0
    echo_axis: str = "Z"


def _status(ok: bool, vacuous: bool) -> str:
    if not ok:
        return "fail"
    return "vacuous" if vacuous else "pass"


def _echo_matrix(ions, axis_phase: float, n: int) -> np.ndarray:
    return spin_core.embed({i: -1j * spin_core.sigma_phi(axis_phase) for i in ions}, n)


def _z_echo(ions, n: int) -> np.ndarray:
    return spin_core.embed({i: spin_core.Z for i in ions}, n)


def _random_calibration(xmap, rng) -> CrosstalkCalibration:
    """Configured map with every pair coupling drawn at random."""
    n = xmap.n_ions
    g = rng.uniform(0.2, 1.5, (n, n))
    g = (g + g.T) / 2
    t1, t2 = xmap.targets
    g[t1, t2] = g[t2, t1] = 1.0
    om = np.sqrt(2 * np.pi / 4)
    return CrosstalkCalibration(xmap, g, om, om)


def check_cancellation(cal: CrosstalkCalibration, scheme: str, opts: VerifyOptions) -> Check:
    """[E U(theta/2)]^2 against the ideal XX(theta) for random beam phases."""
    rng = np.random.default_rng([opts.seed, 1 if scheme == "neighbor" else 2])
    xmap = cal.xmap
    n = xmap.n_ions
    t1, t2 = xmap.targets
    theta = np.pi / 4
    ideal = spin_core.ms_unitary(theta, 0, 0, t1, t2, n)
    worst = 0.0
    for _ in range(opts.draws):
        c = _random_calibration(xmap, rng)
        ang = c.angles(rng.uniform(0, 2 * np.pi), include_spectator_pairs=False)
        ang = ang.scaled(theta / ang.theta)
        half = crosstalk.build_crosstalk_unitary(ang.scaled(0.5), n, xmap.targets)
        if scheme == "neighbor":
            if opts.echo_axis == "Z":
                echo = _z_echo(xmap.spectators, n)
            else:
                echo = _echo_matrix(xmap.spectators, np.pi / 2, n)
        else:
            echo = _echo_matrix(xmap.targets, np.pi / 2, n)
        u = echo @ half
        worst = max(worst, spin_core.phase_distance(u @ u, ideal))
    vac = not any(xmap.epsilon.get((b, j), 0.0) for b in (1, 2) for j in xmap.spectators)
    label = "neighbor" if scheme == "neighbor" else "local"
    axis = f" ({opts.echo_axis} echo on spectators)" if scheme == "neighbor" else ""
    return Check(f"{label}_cancellation_identity", _status(worst < 1e-10, vac), worst, 1e-10,
                 f"{opts.draws} random beam phases and couplings{axis}")


def check_echo_commutes(n: int = 2) -> Check:
    yy = _echo_matrix((0, 1), np.pi / 2, n)
    worst = 0.0
    for theta in np.linspace(0.1, np.pi, 7):
        xx = spin_core.ms_unitary(theta, 0, 0, 0, 1, n)
        worst = max(worst, float(np.max(np.abs(yy @ xx @ yy.conj().T - xx))))
    return Check("echo_commutes_with_xx", _status(worst < 1e-12, False), worst, 1e-12)


def check_analytic_formulas(opts: VerifyOptions) -> Check:
    """Closed-form fidelity and spectator population against the state vector."""
    rng = np.random.default_rng([opts.seed, 3])
    worst = 0.0
    for _ in range(opts.draws):
        th13, th23 = rng.uniform(0, 2 * np.pi, 2)
        phi = rng.uniform(0, 2 * np.pi)
        ang = crosstalk.CrosstalkGateAngles(np.pi / 4, (crosstalk.SpectatorTerm(2, th13, th23, phi),))
        psi = crosstalk.apply_crosstalk_gate(spin_core.zero_state(3), ang, (0, 1))
        bell = np.zeros(8, complex)
        bell[0], bell[6] = 1 / np.sqrt(2), -1j / np.sqrt(2)
        rho = spin_core.reduced_density_matrix(psi, [0, 1])
        rho_b = spin_core.reduced_density_matrix(bell, [0, 1])
        f = float(np.real(np.trace(rho_b @ rho)))
        p = spin_core.excited_population(psi, 2)
        p_odd = float(spin_core.marginal_probabilities(psi, [0, 1])[[1, 2]].sum())
        worst = max(worst, abs(f - crosstalk.bell_fidelity_analytic(th13, th23)),
                    abs(p - crosstalk.spectator_population_analytic(th13, th23)), abs(p - p_odd))
    return Check("fidelity_population_formulas", _status(worst < 1e-12, False), worst, 1e-12,
                 f"{opts.draws} random spectator angles")


def sk1_spectator_angle(eps: float, theta: float = np.pi, phase: float = 0.0, composite: bool = True) -> float:
    """Net rotation angle on a spectator seeing a fraction eps of a target pulse."""
    pulses = circuits.sk1_expand(circuits.SK1Pulse(0, phase, theta)) if composite \
        else [circuits.SQRotation(0, phase, theta)]
    u = spin_core.I2
    for r in pulses:
        u = spin_core.rotation(r.phase, eps * r.angle, 0, 1) @ u
    return circuits.net_rotation_angle(u)


def sk1_scaling_slopes(eps_values=None, theta: float = np.pi) -> tuple[float, float]:
    eps_values = np.geomspace(0.005, 0.05, 10) if eps_values is None else np.asarray(eps_values)
    x = np.log(eps_values)
    sk1 = np.log([sk1_spectator_angle(e, theta) for e in eps_values])
    bare = np.log([sk1_spectator_angle(e, theta, composite=False) for e in eps_values])
    return float(np.polyfit(x, sk1, 1)[0]), float(np.polyfit(x, bare, 1)[0])


def check_sk1_scaling() -> Check:
    s_sk1, s_bare = sk1_scaling_slopes()
    ok = s_sk1 >= 1.9 and abs(s_bare - 1.0) <= 0.1
    return Check("sk1_spillover_scaling", _status(ok, False), s_sk1, 1.9,
                 f"log-log slope {s_sk1:.3f} composite vs {s_bare:.3f} bare")


def check_zero_crosstalk_equivalence(cal: CrosstalkCalibration) -> Check:
    zero = cal.with_map(cal.xmap.zeroed())
    n = cal.xmap.n_ions
    worst = 0.0
    base = circuits.circuit_unitary(circuits.unsuppressed_circuit(3, cal.xmap.targets, n),
                                    circuits.SimSettings(calibration=zero))
    for scheme in ("neighbor", "local_collective", "local_individual"):
        c = circuits.build_scheme(scheme, 3, cal.xmap.targets, n, cal.xmap.spectators)
        u = circuits.circuit_unitary(c, circuits.SimSettings(calibration=zero))
        worst = max(worst, spin_core.phase_distance(u, base))
    return Check("zero_crosstalk_schemes_equivalent", _status(worst < 1e-10, False), worst, 1e-10)


def check_quadrature(opts: VerifyOptions, modes: motional.ModeStructure | None = None,
                     pulse: motional.FMPulseSequence | None = None) -> Check:
    """Closed-form displacement and pair phase against numerical integration."""
    rng = np.random.default_rng([opts.seed, 4])
    worst = 0.0
    freqs = 2 * np.pi * np.array([2.9e6, 3.0e6])
    samples = []
    for _ in range(5):
        k = int(rng.integers(1, 6))
        dur = rng.uniform(5e-6, 40e-6, k)
        det = freqs[1] + 2 * np.pi * rng.uniform(-200e3, 200e3, k)
        samples.append((motional.FMPulseSequence(tuple(dur), tuple(det)), freqs))
    if pulse is not None and modes is not None:
        samples.append((pulse, modes.frequencies))
    for p, fr in samples:
        om = 2 * np.pi * 100e3
        for f in fr:
            a = motional.displacement(p, 0.1, om, f)
            b = motional.displacement_quad(p, 0.1, om, f)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        th = motional.geometric_phase(p, [0.1] * len(fr), [0.08] * len(fr), om, om, fr)
        tq = motional.geometric_phase_quad(p, [0.1] * len(fr), [0.08] * len(fr), om, om, fr)
        worst = max(worst, abs(th - tq) / max(1.0, abs(th)))
    return Check("closed_form_vs_quadrature", _status(worst < 1e-9, False), worst, 1e-9,
                 f"{len(samples)} pulses")


def run_checks(cal: CrosstalkCalibration, opts: VerifyOptions | None = None,
               modes: motional.ModeStructure | None = None,
               pulse: motional.FMPulseSequence | None = None) -> list[Check]:
    opts = opts or VerifyOptions()
    steps: list[Callable[[], Check]] = [
        lambda: check_cancellation(cal, "neighbor", opts),
        lambda: check_cancellation(cal, "local", opts),
        check_echo_commutes,
        lambda: check_analytic_formulas(opts),
        check_sk1_scaling,
        lambda: check_zero_crosstalk_equivalence(cal),
        lambda: check_quadrature(opts, modes, pulse),
    ]
    return [s() for s in steps]


def report(checks: list[Check]) -> dict:
    return {"passed": all(c.ok for c in checks), "checks": [asdict(c) for c in checks]}
