"""Gate-level circuits for echo-based crosstalk suppression and their simulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import spin_core
from .crosstalk import CrosstalkCalibration, CrosstalkGateAngles, apply_crosstalk_gate, build_crosstalk_unitary

QUARTER = np.pi / 4


@dataclass(frozen=True)
class MSGate:
    theta: float
    targets: tuple[int, int]
    # fixed crosstalk angles; when None the simulator derives them
    angles: CrosstalkGateAngles | None = None

    def __post_init__(self):
        if len(self.targets) != 2 or self.targets[0] == self.targets[1]:
            raise ValueError(f"MS gate needs a distinct ion pair, got {self.targets}")
        if not np.isfinite(self.theta):
            raise ValueError("MS angle must be finite")


@dataclass(frozen=True)
class SQRotation:
    ion: int
    phase: float
    angle: float

    def __post_init__(self):
        if not (np.isfinite(self.angle) and np.isfinite(self.phase)):
            raise ValueError("rotation angle and phase must be finite")


@dataclass(frozen=True)
class SK1Pulse:
    ion: int
    phase: float
    angle: float

    def __post_init__(self):
        if not 0 < self.angle < 2 * np.pi:
            raise ValueError(f"SK1 angle must lie in (0, 2pi), got {self.angle}")


@dataclass(frozen=True)
class VirtualZ:
    ion: int
    angle: float


@dataclass(frozen=True)
class Barrier:
    pass


GateOp = Union[MSGate, SQRotation, SK1Pulse, VirtualZ, Barrier]


def _op_ions(op: GateOp) -> tuple[int, ...]:
    if isinstance(op, MSGate):
        return tuple(op.targets)
    if isinstance(op, Barrier):
        return ()
    return (op.ion,)


@dataclass
class Circuit:
    n: int
    ops: list = field(default_factory=list)

    def __post_init__(self):
        for op in self.ops:
            self._check(op)

    def _check(self, op: GateOp) -> None:
        for ion in _op_ions(op):
            if not 0 <= ion < self.n:
                raise IndexError(f"ion {ion} out of range for {self.n} qubits")

    def append(self, op: GateOp) -> Circuit:
        self._check(op)
        self.ops.append(op)
        return self

    def extend(self, ops) -> Circuit:
        for op in ops:
            self.append(op)
        return self

    @property
    def ms_count(self) -> int:
        return sum(isinstance(op, MSGate) for op in self.ops)

    def to_text(self) -> str:
        lines = []
        for op in self.ops:
            if isinstance(op, MSGate):
                lines.append(f"MS {op.targets[0]},{op.targets[1]} {op.theta!r} 0.0")
            elif isinstance(op, SQRotation):
                lines.append(f"R {op.ion} {op.angle!r} {op.phase!r}")
            elif isinstance(op, SK1Pulse):
                lines.append(f"SK1 {op.ion} {op.angle!r} {op.phase!r}")
            elif isinstance(op, VirtualZ):
                lines.append(f"VZ {op.ion} {op.angle!r} 0.0")
            else:
                lines.append("BARRIER")
        return f"# qubits {self.n}\n" + "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n: int | None = None) -> Circuit:
        ops = []
        for raw in text.splitlines():
            line = raw.strip()
            if line.startswith("# qubits"):
                n = int(line.split()[2]) if n is None else n
                continue
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind = parts[0].upper()
            if kind == "BARRIER":
                ops.append(Barrier())
            elif kind == "MS":
                a, b = (int(x) for x in parts[1].split(","))
                ops.append(MSGate(float(parts[2]), (a, b)))
            elif kind == "R":
                ops.append(SQRotation(int(parts[1]), float(parts[3]), float(parts[2])))
            elif kind == "SK1":
                ops.append(SK1Pulse(int(parts[1]), float(parts[3]), float(parts[2])))
            elif kind == "VZ":
                ops.append(VirtualZ(int(parts[1]), float(parts[2])))
            else:
                raise ValueError(f"unknown gate kind {parts[0]!r}")
        if n is None:
            raise ValueError("qubit count missing")
        return cls(n, ops)


# ------------------------------------------------------------------ builders

def sk1_expand(pulse: SK1Pulse) -> list[SQRotation]:
    """Rotation, then 2pi about phi + phi_sk1, then 2pi about phi - phi_sk1."""
    if not 0 < pulse.angle < 2 * np.pi:
        raise ValueError(f"SK1 angle must lie in (0, 2pi), got {pulse.angle}")
    phi_sk1 = np.arccos(-pulse.angle / (4 * np.pi))
    return [
        SQRotation(pulse.ion, pulse.phase, pulse.angle),
        SQRotation(pulse.ion, pulse.phase + phi_sk1, 2 * np.pi),
        SQRotation(pulse.ion, pulse.phase - phi_sk1, 2 * np.pi),
    ]


def _pulse(ion: int, phase: float, angle: float, sk1: bool) -> GateOp:
    return SK1Pulse(ion, phase, angle) if sk1 else SQRotation(ion, phase, angle)


def z_echo(ion: int, sk1: bool = True, mode: str = "xy") -> list[GateOp]:
    """Z(pi), either as X(pi) followed by Y(pi) or as a frame update."""
    if mode == "virtual":
        return [VirtualZ(ion, np.pi)]
    if mode != "xy":
        raise ValueError(f"unknown Z mode {mode!r}")
    return [_pulse(ion, 0.0, np.pi, sk1), _pulse(ion, np.pi / 2, np.pi, sk1)]


def y_echo(ion: int, sk1: bool = True) -> list[GateOp]:
    return [_pulse(ion, np.pi / 2, np.pi, sk1)]


def _check_odd(n_gates: int) -> None:
    if n_gates < 1 or n_gates % 2 == 0:
        raise ValueError(f"collective echo schemes need an odd gate count >= 1, got {n_gates}")


def unsuppressed_circuit(n_gates: int, targets: tuple[int, int], n: int) -> Circuit:
    return Circuit(n, [MSGate(QUARTER, targets) for _ in range(n_gates)])


def neighbor_suppression_circuit(n_gates: int, targets: tuple[int, int], spectators: Sequence[int],
                                 n: int, *, sk1: bool = True, z_mode: str = "xy",
                                 echo_axis: str = "Z") -> Circuit:
    """Half the gates, echo on spectators, half the gates, echo, one final gate.

    ``echo_axis="Y"`` replaces the spectator Z(pi) by Y(pi); it only cancels
    crosstalk for particular spectator phases and is kept for comparison.
    """
    _check_odd(n_gates)
    overlap = set(spectators) & set(targets)
    if overlap:
        raise ValueError(f"spectator list overlaps targets: {sorted(overlap)}")
    half = n_gates // 2
    ops: list[GateOp] = []

    def echo():
        out = []
        for j in spectators:
            if echo_axis == "Z":
                out += z_echo(j, sk1, z_mode)
            elif echo_axis == "Y":
                out += y_echo(j, sk1)
            else:
                raise ValueError(f"unknown echo axis {echo_axis!r}")
        return out

    if half:
        ops += [MSGate(QUARTER, targets) for _ in range(half)] + echo()
        ops += [MSGate(QUARTER, targets) for _ in range(half)] + echo()
    ops.append(MSGate(QUARTER, targets))
    return Circuit(n, ops)


def local_suppression_collective_circuit(n_gates: int, targets: tuple[int, int], n: int, *,
                                         sk1: bool = True) -> Circuit:
    _check_odd(n_gates)
    half = n_gates // 2
    ops: list[GateOp] = []
    echo = y_echo(targets[0], sk1) + y_echo(targets[1], sk1)
    if half:
        ops += [MSGate(QUARTER, targets) for _ in range(half)] + echo
        ops += [MSGate(QUARTER, targets) for _ in range(half)] + echo
    ops.append(MSGate(QUARTER, targets))
    return Circuit(n, ops)


def local_suppression_individual_circuit(n_gates: int, targets: tuple[int, int], n: int, *,
                                         sk1: bool = True) -> Circuit:
    if n_gates < 0:
        raise ValueError("gate count must be non-negative")
    echo = y_echo(targets[0], sk1) + y_echo(targets[1], sk1)
    ops: list[GateOp] = []
    for _ in range(n_gates):
        ops += [MSGate(QUARTER / 2, targets)] + echo + [MSGate(QUARTER / 2, targets)] + echo
    return Circuit(n, ops)


SCHEMES = ("none", "neighbor", "local_collective", "local_individual")


def build_scheme(scheme: str, n_gates: int, targets: tuple[int, int], n: int,
                 spectators: Sequence[int] = (), **kwargs) -> Circuit:
    if scheme == "none":
        return unsuppressed_circuit(n_gates, targets, n)
    if scheme == "neighbor":
        if not spectators:
            raise ValueError("neighbor suppression needs a spectator list")
        return neighbor_suppression_circuit(n_gates, targets, spectators, n, **kwargs)
    if scheme == "local_collective":
        return local_suppression_collective_circuit(n_gates, targets, n, **kwargs)
    if scheme == "local_individual":
        return local_suppression_individual_circuit(n_gates, targets, n, **kwargs)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


# ---------------------------------------------------------------- simulation

@dataclass
class SimSettings:
    """Physical context for simulating a circuit.

    ``phi_beam`` is either one beam phase for the whole circuit or one value
    per MS gate. ``light_shift_per_gate`` advances every spectator phase after
    each MS gate, in proportion to the gate angle over pi/4.
    """

    calibration: CrosstalkCalibration | None = None
    phi_beam: float | Sequence[float] = 0.0
    light_shift_per_gate: float = 0.0
    sq_crosstalk: bool = True
    sq_phase_offset: float = 0.0
    stochastic_infidelity_per_gate: float = 0.0
    sq_infidelity_per_pulse: float = 0.0


@dataclass
class RunRecord:
    state: np.ndarray
    populations: np.ndarray
    target_fidelity: float
    stochastic_errors: list
    n_ms_gates: float
    n_sq_pulses: int
    phi_beam_final: float
    light_shift_final: float

    @property
    def coherent_infidelity(self) -> float:
        return 1.0 - self.target_fidelity

    @property
    def stochastic_infidelity(self) -> float:
        return float(sum(self.stochastic_errors))

    @property
    def infidelity(self) -> float:
        """Coherent and stochastic contributions added linearly."""
        return self.coherent_infidelity + self.stochastic_infidelity

    @property
    def fidelity_multiplicative(self) -> float:
        return self.target_fidelity * float(np.prod([1.0 - e for e in self.stochastic_errors]))

    @property
    def infidelity_multiplicative(self) -> float:
        return 1.0 - self.fidelity_multiplicative


def _rot2(phase: float, angle: float) -> np.ndarray:
    return np.cos(angle / 2) * spin_core.I2 - 1j * np.sin(angle / 2) * spin_core.sigma_phi(phase)


class _Runner:
    def __init__(self, circuit: Circuit, settings: SimSettings, targets: tuple[int, int] | None):
        self.circuit = circuit
        self.s = settings
        self.cal = settings.calibration
        self.targets = targets
        self._angle_cache: dict[float, CrosstalkGateAngles] = {}
        if self.cal is not None:
            t = self.cal.xmap.targets
            self.ref_theta = self.cal.omega1 * self.cal.omega2 * self.cal.couplings[t] / 2

    def phi_beam(self, k: int) -> float:
        pb = self.s.phi_beam
        if np.isscalar(pb):
            return float(pb)
        return float(pb[k])

    def gate_angles(self, gate: MSGate, phi_beam: float, shift: float) -> CrosstalkGateAngles:
        if gate.angles is not None:
            return gate.angles.phase_shifted(shift)
        if self.cal is None:
            return CrosstalkGateAngles(gate.theta)
        if tuple(gate.targets) != self.cal.xmap.targets:
            raise ValueError(f"gate targets {gate.targets} differ from calibrated pair {self.cal.xmap.targets}")
        base = self._angle_cache.get(phi_beam)
        if base is None:
            base = self.cal.angles(phi_beam)
            self._angle_cache[phi_beam] = base
        return base.scaled(gate.theta / self.ref_theta).phase_shifted(shift)

    def rotation(self, psi: np.ndarray, rot: SQRotation) -> np.ndarray:
        ops = {rot.ion: _rot2(rot.phase, rot.angle)}
        if self.s.sq_crosstalk and self.cal is not None:
            beam = self.cal.xmap.beam_of(rot.ion)
            if beam is not None:
                for j in range(self.circuit.n):
                    if j == rot.ion:
                        continue
                    e = self.cal.xmap.eps(beam, j)
                    if e:
                        ops[j] = _rot2(rot.phase + self.s.sq_phase_offset, e * rot.angle)
        return spin_core.apply_local(psi, ops)

    def run(self, state: np.ndarray) -> tuple[np.ndarray, dict]:
        psi = state
        shift = 0.0
        k = 0
        stoch = []
        n_ms = 0.0
        n_sq = 0
        pb = self.phi_beam(0) if np.isscalar(self.s.phi_beam) or len(self.s.phi_beam) else 0.0
        for op in self.circuit.ops:
            if isinstance(op, MSGate):
                pb = self.phi_beam(k)
                k += 1
                angles = self.gate_angles(op, pb, shift)
                psi = apply_crosstalk_gate(psi, angles, tuple(op.targets))
                units = abs(op.theta) / QUARTER
                n_ms += units
                shift += self.s.light_shift_per_gate * units
                if self.s.stochastic_infidelity_per_gate:
                    stoch.append(self.s.stochastic_infidelity_per_gate * units)
            elif isinstance(op, SQRotation):
                psi = self.rotation(psi, op)
                n_sq += 1
                if self.s.sq_infidelity_per_pulse:
                    stoch.append(self.s.sq_infidelity_per_pulse)
            elif isinstance(op, SK1Pulse):
                for r in sk1_expand(op):
                    psi = self.rotation(psi, r)
                n_sq += 1
                if self.s.sq_infidelity_per_pulse:
                    stoch.append(self.s.sq_infidelity_per_pulse)
            elif isinstance(op, VirtualZ):
                psi = spin_core.apply_local(psi, {op.ion: np.diag([np.exp(-0.5j * op.angle),
                                                                   np.exp(0.5j * op.angle)])})
        return psi, dict(stochastic=stoch, n_ms=n_ms, n_sq=n_sq, phi_beam=pb, shift=shift)


def _circuit_targets(circuit: Circuit, settings: SimSettings) -> tuple[int, int] | None:
    if settings.calibration is not None:
        return settings.calibration.xmap.targets
    for op in circuit.ops:
        if isinstance(op, MSGate):
            return tuple(op.targets)
    return None


def ideal_state(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    initial = spin_core.zero_state(circuit.n) if initial is None else initial
    psi, _ = _Runner(circuit, SimSettings(calibration=None), None).run(initial)
    return psi


def target_fidelity(state: np.ndarray, ideal: np.ndarray, targets: Sequence[int]) -> float:
    rho = spin_core.reduced_density_matrix(state, targets)
    rho_ideal = spin_core.reduced_density_matrix(ideal, targets)
    return float(np.real(np.trace(rho_ideal @ rho)))


def simulate_circuit(circuit: Circuit, settings: SimSettings | None = None,
                     initial: np.ndarray | None = None, *, ideal: np.ndarray | None = None,
                     targets: tuple[int, int] | None = None) -> RunRecord:
    """Apply every gate with its crosstalk and collect populations and fidelities.

    The target fidelity is the overlap of the targets' reduced state with the
    reduced state of the same circuit run without crosstalk.
    """
    settings = settings or SimSettings()
    initial = spin_core.zero_state(circuit.n) if initial is None else np.asarray(initial, dtype=complex)
    if initial.shape[0] != 2**circuit.n:
        raise ValueError(f"initial state length {initial.shape[0]} does not match {circuit.n} qubits")
    if settings.calibration is not None and settings.calibration.xmap.n_ions != circuit.n:
        raise ValueError("crosstalk map and circuit disagree on the qubit count")
    targets = targets or _circuit_targets(circuit, settings)
    psi, info = _Runner(circuit, settings, targets).run(initial)
    pops = np.array([spin_core.excited_population(psi, q) for q in range(circuit.n)])
    if targets is None:
        fid = 1.0
    else:
        ideal = ideal_state(circuit, initial) if ideal is None else ideal
        fid = target_fidelity(psi, ideal, targets)
    return RunRecord(psi, pops, fid, info["stochastic"], info["n_ms"], info["n_sq"],
                     info["phi_beam"], info["shift"])


def circuit_unitary(circuit: Circuit, settings: SimSettings | None = None) -> np.ndarray:
    """Full unitary of a circuit, built column by column."""
    settings = settings or SimSettings()
    dim = 2**circuit.n
    runner = _Runner(circuit, settings, _circuit_targets(circuit, settings))
    cols = [runner.run(np.eye(dim, dtype=complex)[:, c])[0] for c in range(dim)]
    return np.column_stack(cols)


def net_rotation_angle(u2: np.ndarray) -> float:
    """Rotation angle of a 2x2 unitary up to global phase."""
    c = abs(np.trace(u2)) / 2
    return float(2 * np.arccos(min(1.0, c)))


# Batched evaluation: many copies of one circuit, each with its own beam-phase
# history. Single-qubit steps are phase independent and become dense matrices;
# MS gates act through their Pauli-product exponentials with per-row angles.

def _flip_index(ions, n: int) -> np.ndarray:
    mask = 0
    for q in ions:
        mask |= 1 << (n - 1 - q)
    return np.arange(2**n) ^ mask


def _pauli_exp_batch(psi, angle, phase, a, j, n):
    """exp(-i angle X_a sigma_phase_j) on a (basis, rows) block, per-row angle and phase.

    X_a sigma_phase_j flips bits a and j and multiplies by exp(+-i phase),
    the sign set by the bit of ion j before the flip.
    """
    idx = _flip_index((a, j), n)
    up = ((np.arange(2**n) >> (n - 1 - j)) & 1).astype(bool)
    e = np.exp(1j * phase)
    rot = np.empty_like(psi)
    rot[~up] = psi[~up] * e
    rot[up] = psi[up] * e.conj()
    return np.cos(angle) * psi - 1j * np.sin(angle) * rot[idx]


@dataclass
class BatchRecord:
    states: np.ndarray          # (rows, 2**n)
    populations: np.ndarray     # (rows, n)
    target_fidelity: np.ndarray
    stochastic_infidelity: float
    stochastic_errors: list

    @property
    def coherent_infidelity(self) -> np.ndarray:
        return 1.0 - self.target_fidelity

    @property
    def infidelity(self) -> np.ndarray:
        return self.coherent_infidelity + self.stochastic_infidelity

    @property
    def infidelity_multiplicative(self) -> np.ndarray:
        keep = float(np.prod([1.0 - e for e in self.stochastic_errors]))
        return 1.0 - self.target_fidelity * keep


def simulate_batch(circuit: Circuit, settings: SimSettings, phi_beams, *,
                   ideal: np.ndarray | None = None, unitaries: dict | None = None) -> BatchRecord:
    """Run one circuit from |0...0> for every row of ``phi_beams`` (rows x MS count).

    ``settings.phi_beam`` is ignored. Row r gives the beam phase seen by each MS
    gate of copy r; everything else is shared. ``unitaries`` caches the dense
    single-qubit steps between calls with identical settings.
    """
    unitaries = {} if unitaries is None else unitaries
    cal = settings.calibration
    if cal is None:
        raise ValueError("batched simulation needs a crosstalk calibration")
    n = circuit.n
    if cal.xmap.n_ions != n:
        raise ValueError("crosstalk map and circuit disagree on the qubit count")
    phi_beams = np.atleast_2d(np.asarray(phi_beams, dtype=float))
    rows = phi_beams.shape[0]
    if phi_beams.shape[1] != circuit.ms_count:
        raise ValueError(f"need {circuit.ms_count} beam phases per row, got {phi_beams.shape[1]}")
    targets = cal.xmap.targets
    t1, t2 = targets
    g = cal.couplings
    ref = cal.omega1 * cal.omega2 * g[t1, t2] / 2
    # basis index first so gathers move contiguous rows
    psi = np.zeros((2**n, rows), dtype=complex)
    psi[0] = 1.0
    shift = 0.0
    k = 0
    stoch = []
    for op in circuit.ops:
        if isinstance(op, MSGate):
            if tuple(op.targets) != targets:
                raise ValueError(f"gate targets {op.targets} differ from calibrated pair {targets}")
            if op.angles is not None:
                u = build_crosstalk_unitary(op.angles.phase_shifted(shift), n, targets)
                psi = u @ psi
            else:
                scale = op.theta / ref
                pb = phi_beams[:, k]
                psi = np.cos(op.theta) * psi - 1j * np.sin(op.theta) * psi[_flip_index((t1, t2), n)]
                for j in cal.xmap.spectators:
                    z = (cal.xmap.eps(1, j) * cal.omega1
                         + cal.xmap.eps(2, j) * cal.omega2 * np.exp(1j * pb))
                    om = np.abs(z)
                    ph = np.angle(z) + shift
                    for t, o in ((t1, cal.omega1), (t2, cal.omega2)):
                        ang = scale * o * om * g[t, j] / 2
                        if np.any(ang):
                            psi = _pauli_exp_batch(psi, ang, ph, t, j, n)
            k += 1
            units = abs(op.theta) / QUARTER
            shift += settings.light_shift_per_gate * units
            if settings.stochastic_infidelity_per_gate:
                stoch.append(settings.stochastic_infidelity_per_gate * units)
        elif isinstance(op, Barrier):
            continue
        else:
            u = unitaries.get(op)
            if u is None:
                u = unitaries[op] = circuit_unitary(Circuit(n, [op]), settings)
            psi = u @ psi
            if isinstance(op, (SQRotation, SK1Pulse)) and settings.sq_infidelity_per_pulse:
                stoch.append(settings.sq_infidelity_per_pulse)
    psi = np.ascontiguousarray(psi.T)
    pops = np.stack([(np.abs(psi.reshape((rows,) + (2,) * n)) ** 2)
                     .sum(axis=tuple(a + 1 for a in range(n) if a != q))[:, 1] for q in range(n)], axis=1)
    ideal = ideal_state(circuit) if ideal is None else ideal
    rho_ideal = spin_core.reduced_density_matrix(ideal, targets)
    rest = [q + 1 for q in range(n) if q not in targets]
    m = np.transpose(psi.reshape((rows,) + (2,) * n), [0, t1 + 1, t2 + 1] + rest).reshape(rows, 4, -1)
    fid = np.real(np.einsum("rak,ab,rbk->r", m.conj(), rho_ideal, m))
    return BatchRecord(psi, pops, fid, float(sum(stoch)), stoch)
