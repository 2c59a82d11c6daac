"""Monte-Carlo ensembles over a drifting beam phase.

The relative optical phase of the two addressing beams performs a 1-D random
walk, one step before every MS gate. Spectator phases additionally advance
by a fixed light shift per gate inside a sequence. Stochastic gate errors are
not simulated; each gate and single-qubit pulse adds a configured
infidelity on top of the coherent result.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import circuits
from .crosstalk import CrosstalkCalibration


@dataclass(frozen=True)
class DriftModel:
    drift_rate: float = 2.0
    gate_duration: float = 200e-6
    step_distribution: str = "uniform"
    # explicit walk step in radians; overrides drift_rate * gate_duration
    step_size: float | None = None
    light_shift_per_gate: float = float(np.deg2rad(4.0))
    stochastic_infidelity_per_gate: float = 4.6e-3
    sq_infidelity_per_pulse: float = 0.0
    # sequences averaged per trial; the beam phase keeps walking between them
    # unless persist_phase is off, while the light shift restarts every sequence
    repetitions: int = 100
    persist_phase: bool = True
    initial_phase: float | None = None
    sq_crosstalk: bool = True
    sq_phase_offset: float = 0.0

    def __post_init__(self):
        for name in ("drift_rate", "gate_duration", "stochastic_infidelity_per_gate",
                     "sq_infidelity_per_pulse"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.step_size is not None and self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if not 0 <= self.light_shift_per_gate < np.pi:
            raise ValueError("light shift per gate must lie in [0, pi)")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.step_distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown step distribution {self.step_distribution!r}")

    @property
    def step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2 * np.pi * self.drift_rate * self.gate_duration

    def draw_steps(self, rng: np.random.Generator, count: int) -> np.ndarray:
        s = self.step
        if s == 0 or count == 0:
            return np.zeros(count)
        if self.step_distribution == "uniform":
            return rng.uniform(-s, s, size=count)
        return rng.normal(0.0, s, size=count)

    @classmethod
    def static(cls, **kw) -> DriftModel:
        """No drift, light shift or stochastic error unless given."""
        base = dict(drift_rate=0.0, light_shift_per_gate=0.0, stochastic_infidelity_per_gate=0.0)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class Setup:
    """Chain, crosstalk calibration and echo options shared by every trial."""

    calibration: CrosstalkCalibration
    spectators: tuple[int, ...] = ()
    sk1: bool = True
    z_mode: str = "xy"
    echo_axis: str = "Z"

    @property
    def xmap(self):
        return self.calibration.xmap

    @property
    def targets(self) -> tuple[int, int]:
        return self.xmap.targets

    @property
    def n(self) -> int:
        return self.xmap.n_ions

    def circuit(self, scheme: str, n_gates: int) -> circuits.Circuit:
        kw = {}
        if scheme != "none":
            kw["sk1"] = self.sk1
        if scheme == "neighbor":
            kw.update(z_mode=self.z_mode, echo_axis=self.echo_axis)
        return circuits.build_scheme(scheme, n_gates, self.targets, self.n, self.spectators, **kw)

    def settings(self, model: DriftModel, phi_beam) -> circuits.SimSettings:
        return circuits.SimSettings(
            calibration=self.calibration,
            phi_beam=phi_beam,
            light_shift_per_gate=model.light_shift_per_gate,
            sq_crosstalk=model.sq_crosstalk,
            sq_phase_offset=model.sq_phase_offset,
            stochastic_infidelity_per_gate=model.stochastic_infidelity_per_gate,
            sq_infidelity_per_pulse=model.sq_infidelity_per_pulse,
        )


def _trial_rng(master_seed: int, gate_count: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(gate_count), int(trial)])


def _start_phase(model: DriftModel, rng: np.random.Generator) -> float:
    # always consume the draw so stream layout does not depend on settings
    draw = rng.uniform(0, 2 * np.pi)
    return draw if model.initial_phase is None else float(model.initial_phase)


def run_trial(setup: Setup, scheme: str, n_gates: int, model: DriftModel, seed=None,
              phi_start: float | None = None, circuit: circuits.Circuit | None = None,
              ideal: np.ndarray | None = None) -> circuits.RunRecord:
    """One execution of a gate sequence with its own random walk of the beam phase."""
    circuit = circuit or setup.circuit(scheme, n_gates)
    rng = np.random.default_rng(seed)
    start = _start_phase(model, rng)
    if phi_start is not None:
        start = phi_start
    steps = model.draw_steps(rng, circuit.ms_count)
    phis = start + np.cumsum(steps)
    return circuits.simulate_circuit(circuit, setup.settings(model, phis if circuit.ms_count else start),
                                     ideal=ideal)


@dataclass
class EnvelopeSeries:
    """Per-trial results of an ensemble; each trial averages its repeated sequences."""

    scheme: str
    gate_counts: list
    trials: int
    master_seed: int
    infidelity: np.ndarray              # (counts, trials), coherent + stochastic
    coherent_infidelity: np.ndarray
    infidelity_multiplicative: np.ndarray
    populations: np.ndarray             # (counts, trials, ions)
    phi_beam_final: np.ndarray
    spectators: list = field(default_factory=list)

    @property
    def spectator_population(self) -> np.ndarray:
        return self.populations[:, :, self.spectators].sum(axis=2)

    @property
    def mean_infidelity(self) -> np.ndarray:
        return self.infidelity.mean(axis=1)

    def summary(self) -> dict:
        out = []
        pops = self.spectator_population
        for i, c in enumerate(self.gate_counts):
            inf = self.infidelity[i]
            out.append({
                "gate_count": int(c),
                "infidelity_min": float(inf.min()),
                "infidelity_max": float(inf.max()),
                "infidelity_mean": float(inf.mean()),
                "spectator_population_min": float(pops[i].min()),
                "spectator_population_max": float(pops[i].max()),
                "spectator_population_mean": float(pops[i].mean()),
            })
        return {"scheme": self.scheme, "trials": self.trials, "master_seed": self.master_seed,
                "counts": out}


def trial_phases(model: DriftModel, master_seed: int, gate_count: int, trial: int,
                 n_ms: int) -> tuple[float, np.ndarray]:
    """Start phase and (repetitions x MS count) beam phases of one trial.

    The first repetition consumes the stream exactly like ``run_trial`` with
    seed ``[master_seed, gate_count, trial]``.
    """
    rng = _trial_rng(master_seed, gate_count, trial)
    start = _start_phase(model, rng)
    steps = model.draw_steps(rng, model.repetitions * n_ms).reshape(model.repetitions, n_ms)
    if model.persist_phase:
        walk = np.cumsum(steps.ravel()).reshape(steps.shape)
    else:
        walk = np.cumsum(steps, axis=1)
    return start, start + walk


def _trials_per_call(model: DriftModel, n: int) -> int:
    # bounded batch memory; fixed by the configuration only, never by --jobs,
    # so every trial is computed inside an identically shaped batch
    return max(1, ((1 << 21) >> n) // model.repetitions)


def _trial_block(args):
    setup, scheme, count, model, master_seed, trial_ids = args
    circuit = setup.circuit(scheme, count)
    ideal = circuits.ideal_state(circuit)
    settings = setup.settings(model, 0.0)
    reps = model.repetitions
    drawn = [trial_phases(model, master_seed, count, t, circuit.ms_count) for t in trial_ids]
    phis = np.concatenate([p for _, p in drawn], axis=0)
    rec = circuits.simulate_batch(circuit, settings, phis, ideal=ideal)
    k = len(trial_ids)
    inf = rec.infidelity.reshape(k, reps).mean(axis=1)
    coh = rec.coherent_infidelity.reshape(k, reps).mean(axis=1)
    mult = rec.infidelity_multiplicative.reshape(k, reps).mean(axis=1)
    pops = rec.populations.reshape(k, reps, -1).mean(axis=1)
    out = []
    for i, (start, p) in enumerate(drawn):
        final = float(p[-1, -1]) if circuit.ms_count else start
        out.append((float(inf[i]), float(coh[i]), float(mult[i]), pops[i], final))
    return out


def envelope(setup: Setup, scheme: str, gate_counts: Sequence[int], trials: int, model: DriftModel,
             master_seed: int = 0, jobs: int = 1) -> EnvelopeSeries:
    """Independent trials per gate count, merged in (gate_count, trial) order.

    Results do not depend on ``jobs``: work is cut into the same blocks either
    way and each trial draws from its own stream.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    counts = [int(c) for c in gate_counts]
    size = _trials_per_call(model, setup.n)
    tasks = [(setup, scheme, c, model, master_seed, list(range(lo, min(lo + size, trials))))
             for c in counts for lo in range(0, trials, size)]
    if jobs > 1 and len(tasks) > 1:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_trial_block, tasks))
    else:
        chunks = [_trial_block(t) for t in tasks]
    results = [r for chunk in chunks for r in chunk]
    shape = (len(counts), trials)
    inf = np.array([r[0] for r in results]).reshape(shape)
    coh = np.array([r[1] for r in results]).reshape(shape)
    mult = np.array([r[2] for r in results]).reshape(shape)
    pops = np.array([r[3] for r in results]).reshape(shape + (setup.n,))
    phis = np.array([r[4] for r in results]).reshape(shape)
    return EnvelopeSeries(scheme, counts, trials, master_seed, inf, coh, mult, pops, phis,
                          list(setup.xmap.spectators))


def light_shift_trace(circuit: circuits.Circuit, model: DriftModel, repetitions: int = 2) -> np.ndarray:
    """Spectator phase offset seen by each MS gate over consecutive sequences."""
    per_seq = []
    acc = 0.0
    for op in circuit.ops:
        if isinstance(op, circuits.MSGate):
            per_seq.append(acc)
            acc += model.light_shift_per_gate * abs(op.theta) / circuits.QUARTER
    return np.tile(np.array(per_seq), repetitions)


@dataclass
class PhaseScan:
    phi_values: np.ndarray
    populations: np.ndarray   # (phis, ions)
    fidelity: np.ndarray


def phase_scan(setup: Setup, scheme: str, n_gates: int, phi_values, light_shift: float = 0.0,
               sq_crosstalk: bool = True) -> PhaseScan:
    """Deterministic sweep with the beam phase held fixed at each point."""
    phi_values = np.asarray(phi_values, dtype=float)
    model = DriftModel.static(light_shift_per_gate=light_shift, sq_crosstalk=sq_crosstalk)
    circuit = setup.circuit(scheme, n_gates)
    ideal = circuits.ideal_state(circuit)
    pops = []
    fids = []
    for phi in phi_values:
        rec = circuits.simulate_circuit(circuit, setup.settings(model, float(phi)), ideal=ideal)
        pops.append(rec.populations)
        fids.append(rec.target_fidelity)
    return PhaseScan(phi_values, np.array(pops), np.array(fids))


@dataclass(frozen=True)
class LinearFit:
    slope: float
    slope_stderr: float
    intercept: float

    @property
    def fidelity_per_gate(self) -> float:
        return 1.0 - self.slope


def linear_fit_fidelity(gate_counts, infidelities=None) -> LinearFit:
    """Least-squares slope of mean infidelity against gate count.

    Accepts either an ``EnvelopeSeries`` or parallel arrays of counts and
    infidelities (one value per count, or a 2-D array averaged over trials).
    """
    if isinstance(gate_counts, EnvelopeSeries):
        x = np.asarray(gate_counts.gate_counts, dtype=float)
        y = gate_counts.mean_infidelity
    else:
        x = np.asarray(gate_counts, dtype=float)
        y = np.asarray(infidelities, dtype=float)
        if y.ndim == 2:
            y = y.mean(axis=1)
    if x.size < 2 or np.unique(x).size < 2:
        raise ValueError("linear fit needs at least two distinct gate counts")
    if x.size == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return LinearFit(float(slope), 0.0, float(y[0] - slope * x[0]))
    res = stats.linregress(x, y)
    return LinearFit(float(res.slope), float(res.stderr), float(res.intercept))


def static_worst_case(setup: Setup, n_gates: int) -> float:
    """Coherent infidelity of n unsuppressed gates at full constructive interference."""
    rec = circuits.simulate_circuit(setup.circuit("none", n_gates),
                                    setup.settings(DriftModel.static(), 0.0))
    return rec.coherent_infidelity


def analytic_spectator_extremes(setup: Setup, ion: int, n_gates: int) -> tuple[float, float]:
    """Population range of one spectator over the beam phase for n constant-phase gates."""
    from .crosstalk import spectator_population_analytic

    phis = np.linspace(0, 2 * np.pi, 721)
    vals = []
    for phi in phis:
        ang = setup.calibration.angles(phi)
        term = next((s for s in ang.spectator_terms if s.ion == ion), None)
        if term is None:
            vals.append(0.0)
        else:
            vals.append(spectator_population_analytic(n_gates * term.theta1, n_gates * term.theta2))
    return float(min(vals)), float(max(vals))
