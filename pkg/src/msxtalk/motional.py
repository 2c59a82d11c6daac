"""Spin-motion coupling under piecewise-constant frequency modulation.

Everything here works with the motional phase of a mode,

    phi_k(t) = int_0^t (mu(s) - omega_k) ds,

where ``mu`` is the piecewise-constant drive frequency of the FM pulse and
``omega_k`` the mode frequency (both rad/s, same reference carrier). The two
gate-level quantities are the residual displacement

    alpha = (eta * Omega / 2) * int_0^tau exp(i phi_k(t)) dt

and the pairwise geometric phase

    theta_ab = (Omega_a Omega_b / 2) sum_k eta_ak eta_bk
               int_0^tau dt int_0^t dt' sin(phi_k(t) - phi_k(t')).

Both are evaluated segment by segment in closed form. The ``*_quad``
functions are brute-force numerical counterparts used as test oracles, and
``simulate_spin_boson`` integrates the full spin-boson Hamiltonian in a
truncated Fock space.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, linalg, optimize

from . import spin_core

log = logging.getLogger(__name__)

# below this |delta * T| the closed forms switch to their Taylor series
SERIES_THRESHOLD = 1e-2


class NonClosedPulseError(ValueError):
    """A pulse leaves residual spin-motion displacement above tolerance."""


class OptimizationError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class TruncationError(RuntimeError):
    def __init__(self, message: str, top_population: float):
        super().__init__(message)
        self.top_population = top_population


@dataclass(frozen=True)
class FMPulseSequence:
    """Piecewise-constant drive frequency.

    ``detunings`` are drive frequencies in rad/s measured from the same
    reference carrier as the mode frequencies. ``rabi`` optionally records the
    Rabi frequency that calibrates the pulse to its target geometric phase.
    """

    durations: np.ndarray
    detunings: np.ndarray
    rabi: float | None = None

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float).reshape(-1)
        mu = np.asarray(self.detunings, dtype=float).reshape(-1)
        if d.shape != mu.shape or d.size == 0:
            raise ValueError("durations and detunings must be equal-length, non-empty")
        if np.any(d <= 0) or not np.all(np.isfinite(d)) or not np.all(np.isfinite(mu)):
            raise ValueError("segment durations must be positive and all values finite")
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "detunings", mu)

    @classmethod
    def uniform(cls, tau: float, detunings: Sequence[float], rabi: float | None = None) -> FMPulseSequence:
        mu = np.asarray(detunings, dtype=float)
        return cls(np.full(mu.size, tau / mu.size), mu, rabi)

    @property
    def tau(self) -> float:
        return float(self.durations.sum())

    @property
    def n_segments(self) -> int:
        return self.durations.size

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def reversed(self) -> FMPulseSequence:
        return replace(self, durations=self.durations[::-1].copy(), detunings=self.detunings[::-1].copy())

    def save(self, path: str | Path) -> None:
        header = "duration_s,detuning_rad_per_s"
        if self.rabi is not None:
            header = f"rabi_rad_per_s={self.rabi!r}\n" + header
        np.savetxt(path, np.column_stack([self.durations, self.detunings]),
                   delimiter=",", header=header, fmt="%.17g")

    @classmethod
    def load(cls, path: str | Path) -> FMPulseSequence:
        rabi = None
        with open(path) as fh:
            for line in fh:
                if line.startswith("# rabi_rad_per_s="):
                    rabi = float(line.split("=", 1)[1])
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(data[:, 0], data[:, 1], rabi)


@dataclass(frozen=True)
class ModeStructure:
    """Motional modes (sorted ascending, rad/s) and Lamb-Dicke matrix eta[ion, mode]."""

    frequencies: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float).reshape(-1)
        eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        if eta.shape[1] != freqs.size:
            raise ValueError("eta must have one column per mode")
        if freqs.size > eta.shape[0]:
            raise ValueError("more modes than ions")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValueError("mode frequencies must be positive and strictly increasing")
        if np.any(np.abs(eta) > 1):
            raise ValueError("Lamb-Dicke parameters must satisfy |eta| <= 1")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "eta", eta)

    @property
    def n_ions(self) -> int:
        return self.eta.shape[0]

    @property
    def n_modes(self) -> int:
        return self.frequencies.size

    def with_participation(self, scale: dict[int, float]) -> ModeStructure:
        """Rescale the mode couplings of selected ions."""
        eta = self.eta.copy()
        for ion, s in scale.items():
            eta[int(ion)] *= s
        return replace(self, eta=eta)

    def to_dict(self) -> dict:
        return {"frequencies": self.frequencies.tolist(), "eta": self.eta.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> ModeStructure:
        return cls(np.asarray(d["frequencies"]), np.asarray(d["eta"]))


def chain_positions(n_ions: int) -> np.ndarray:
    """Dimensionless equilibrium positions of ions in a harmonic axial well."""
    if n_ions == 1:
        return np.zeros(1)

    def force(u):
        diff = u[:, None] - u[None, :]
        np.fill_diagonal(diff, np.inf)
        return u - np.sum(np.sign(diff) / diff**2, axis=1)

    guess = np.linspace(-1, 1, n_ions) * (n_ions ** 0.56)
    u = optimize.fsolve(force, guess, xtol=1e-14)
    return np.sort(u)


def harmonic_chain_modes(n_ions: int = 5, com_freq: float = 2 * np.pi * 3.0e6,
                         anisotropy: float = 0.01, eta0: float = 0.08) -> ModeStructure:
    """Transverse modes of a linear chain in a harmonic trap.

    ``anisotropy`` is (omega_axial / omega_radial)^2 and sets the mode
    splitting; ``eta0`` is the single-ion Lamb-Dicke parameter at the
    center-of-mass frequency.
    """
    u = chain_positions(n_ions)
    inv3 = np.zeros((n_ions, n_ions))
    for i in range(n_ions):
        for j in range(n_ions):
            if i != j:
                inv3[i, j] = 1.0 / abs(u[i] - u[j]) ** 3
    b = anisotropy * inv3
    b[np.diag_indices(n_ions)] = 1.0 - anisotropy * inv3.sum(axis=1)
    lam, vecs = np.linalg.eigh(b)
    if np.any(lam <= 0):
        raise ValueError("anisotropy too large, the linear chain is unstable")
    order = np.argsort(lam)
    freqs = com_freq * np.sqrt(lam[order])
    vecs = vecs[:, order]
    # fix eigenvector signs so the largest-magnitude component is positive
    vecs *= np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(n_ions)])
    eta = eta0 * vecs * np.sqrt(com_freq / freqs)[None, :]
    return ModeStructure(freqs, eta)


# ---------------------------------------------------------------- closed forms

def _f1(x: np.ndarray) -> np.ndarray:
    """(exp(ix) - 1) / (ix)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    small = np.abs(x) < SERIES_THRESHOLD
    xs = x[small]
    out[small] = 1 + 1j * xs / 2 - xs**2 / 6 - 1j * xs**3 / 24 + xs**4 / 120 + 1j * xs**5 / 720
    xl = x[~small]
    out[~small] = (np.exp(1j * xl) - 1) / (1j * xl)
    return out


def _df1(x: np.ndarray) -> np.ndarray:
    """Derivative of _f1."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape, dtype=complex)
    small = np.abs(x) < SERIES_THRESHOLD
    xs = x[small]
    out[small] = 1j / 2 - xs / 3 - 1j * xs**2 / 8 + xs**3 / 30 + 1j * xs**4 / 144
    xl = x[~small]
    e = np.exp(1j * xl)
    out[~small] = (xl * e + 1j * (e - 1)) / xl**2
    return out


def _g2(x: np.ndarray) -> np.ndarray:
    """(x - sin x) / x^2, the same-segment part of the double integral."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    small = np.abs(x) < SERIES_THRESHOLD
    xs = x[small]
    out[small] = xs / 6 - xs**3 / 120 + xs**5 / 5040
    xl = x[~small]
    out[~small] = (xl - np.sin(xl)) / xl**2
    return out


def _phases(pulse: FMPulseSequence, mode_freqs) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode segment detunings (n_modes, n_seg) and segment start phases."""
    w = np.atleast_1d(np.asarray(mode_freqs, dtype=float))
    delta = pulse.detunings[None, :] - w[:, None]
    dphi = delta * pulse.durations[None, :]
    starts = np.concatenate([np.zeros((w.size, 1)), np.cumsum(dphi, axis=1)[:, :-1]], axis=1)
    return delta, starts


def motional_phase(pulse: FMPulseSequence, mode_freq: float, t: float) -> float:
    tau = pulse.tau
    if not -1e-15 * tau <= t <= tau * (1 + 1e-15):
        raise ValueError(f"t={t} outside [0, {tau}]")
    delta, starts = _phases(pulse, mode_freq)
    edges = pulse.boundaries
    s = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, pulse.n_segments - 1))
    return float(starts[0, s] + delta[0, s] * (t - edges[s]))


def segment_integrals(pulse: FMPulseSequence, mode_freqs) -> np.ndarray:
    """int over each segment of exp(i phi_k(t)) dt, shape (n_modes, n_seg)."""
    delta, starts = _phases(pulse, mode_freqs)
    T = pulse.durations[None, :]
    return np.exp(1j * starts) * T * _f1(delta * T)


def loop_integrals(pulse: FMPulseSequence, mode_freqs) -> np.ndarray:
    """int_0^tau exp(i phi_k(t)) dt for each mode."""
    return segment_integrals(pulse, mode_freqs).sum(axis=1)


def phase_integrals(pulse: FMPulseSequence, mode_freqs) -> np.ndarray:
    """int_0^tau dt int_0^t dt' sin(phi_k(t) - phi_k(t')) for each mode."""
    delta, _ = _phases(pulse, mode_freqs)
    T = pulse.durations[None, :]
    a = segment_integrals(pulse, mode_freqs)
    same = (T**2 * _g2(delta * T)).sum(axis=1)
    earlier = np.cumsum(a, axis=1) - a
    cross = np.imag(a * np.conj(earlier)).sum(axis=1)
    return same + cross


def displacement(pulse: FMPulseSequence, eta_jk: float, omega_j: float, mode_freq: float) -> complex:
    return complex(eta_jk * omega_j / 2 * loop_integrals(pulse, mode_freq)[0])


def geometric_phase(pulse: FMPulseSequence, eta_a, eta_b, omega_a: float, omega_b: float,
                    mode_freqs) -> float:
    """Two-ion geometric phase summed over modes; ``eta_a``/``eta_b`` are per-mode arrays."""
    eta_a = np.atleast_1d(np.asarray(eta_a, dtype=float))
    eta_b = np.atleast_1d(np.asarray(eta_b, dtype=float))
    integ = phase_integrals(pulse, mode_freqs)
    return float(omega_a * omega_b / 2 * np.sum(eta_a * eta_b * integ))


def pair_couplings(modes: ModeStructure, pulse: FMPulseSequence) -> np.ndarray:
    """Matrix G with theta_ab = Omega_a Omega_b G_ab / 2 for every ion pair."""
    integ = phase_integrals(pulse, modes.frequencies)
    return (modes.eta * integ[None, :]) @ modes.eta.T


def max_displacement(pulse: FMPulseSequence, modes: ModeStructure, ions: Sequence[int],
                     omega: float) -> float:
    loops = np.abs(loop_integrals(pulse, modes.frequencies))
    return float(np.max(np.abs(modes.eta[list(ions)]) * omega / 2 * loops[None, :]))


# -------------------------------------------------------- quadrature oracles

def displacement_quad(pulse: FMPulseSequence, eta_jk: float, omega_j: float, mode_freq: float) -> complex:
    """Adaptive quadrature of the displacement integral, segment by segment."""
    edges = pulse.boundaries

    def part(fn):
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(fn, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
            total += val
        return total

    re = part(lambda t: np.cos(motional_phase(pulse, mode_freq, t)))
    im = part(lambda t: np.sin(motional_phase(pulse, mode_freq, t)))
    return eta_jk * omega_j / 2 * (re + 1j * im)


def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def phase_integral_quad(pulse: FMPulseSequence, mode_freq: float, order: int = 48) -> float:
    """Brute-force 2-D Gauss-Legendre quadrature of the geometric-phase integral.

    The triangle 0 <= t' <= t <= tau is tiled by segment pairs; diagonal
    cells are triangles mapped onto the square. Only the motional phase
    function is evaluated, none of the closed-form antiderivatives.
    """
    x, w = _gl_nodes(order)
    edges = pulse.boundaries
    phi = np.vectorize(lambda t: motional_phase(pulse, mode_freq, t))
    total = 0.0
    for m in range(pulse.n_segments):
        a, b = edges[m], edges[m + 1]
        t = (b - a) / 2 * x + (a + b) / 2
        wt = (b - a) / 2 * w
        pt = phi(t)
        for n in range(m):
            c, d = edges[n], edges[n + 1]
            tp = (d - c) / 2 * x + (c + d) / 2
            wtp = (d - c) / 2 * w
            total += np.einsum("i,j,ij->", wt, wtp, np.sin(pt[:, None] - phi(tp)[None, :]))
        # triangle a <= t' <= t <= b
        tp = a + (t[:, None] - a) * (x[None, :] + 1) / 2
        wtp = (t[:, None] - a) / 2 * w[None, :]
        total += np.sum(wt[:, None] * wtp * np.sin(pt[:, None] - phi(tp)))
    return float(total)


def geometric_phase_quad(pulse: FMPulseSequence, eta_a, eta_b, omega_a: float, omega_b: float,
                         mode_freqs, order: int = 48) -> float:
    eta_a = np.atleast_1d(eta_a)
    eta_b = np.atleast_1d(eta_b)
    total = sum(ea * eb * phase_integral_quad(pulse, w, order)
                for ea, eb, w in zip(eta_a, eta_b, np.atleast_1d(mode_freqs)))
    return float(omega_a * omega_b / 2 * total)


# ------------------------------------------------------------------ optimizer

def _palindrome_map(n_segments: int) -> np.ndarray:
    n_free = (n_segments + 1) // 2
    m = np.zeros((n_segments, n_free))
    for s in range(n_segments):
        m[s, min(s, n_segments - 1 - s)] = 1.0
    return m


def _loop_jacobian(pulse: FMPulseSequence, mode_freqs) -> tuple[np.ndarray, np.ndarray]:
    """Loop integrals A_k and dA_k/dmu_s, shapes (K,) and (K, S)."""
    delta, starts = _phases(pulse, mode_freqs)
    T = pulse.durations[None, :]
    phase = np.exp(1j * starts)
    seg = phase * T * _f1(delta * T)
    own = phase * T**2 * _df1(delta * T)
    later = np.cumsum(seg[:, ::-1], axis=1)[:, ::-1] - seg
    jac = own + 1j * T * later
    return seg.sum(axis=1), jac


@dataclass
class FMResult:
    pulse: FMPulseSequence
    max_alpha: float
    theta: float
    attempts: int
    residuals: dict = field(default_factory=dict)


def fm_optimize(modes: ModeStructure, targets: tuple[int, int], n_segments: int, tau: float,
                theta_target: float = np.pi / 4, *, symmetric: bool = True, n_starts: int = 24,
                seed: int = 0, alpha_tol: float = 1e-6, max_nfev: int = 2000) -> FMResult:
    """Find an FM pulse that closes every mode loop and calibrate its Rabi frequency.

    Detunings are solved by Levenberg-Marquardt on the normalized loop
    integrals A_k / tau (analytic Jacobian), multi-started from seeded random
    initial pulses. The Rabi frequency is then set so the target pair
    accumulates ``theta_target``.
    """
    if theta_target == 0:
        raise ValueError("theta_target must be nonzero")
    a, b = targets
    freqs = modes.frequencies
    n_modes = modes.n_modes
    durations = np.full(n_segments, tau / n_segments)
    basis = _palindrome_map(n_segments) if symmetric else np.eye(n_segments)
    n_free = basis.shape[1]
    n_constraints = n_modes if symmetric else 2 * n_modes
    rng = np.random.default_rng(seed)
    span = max(freqs[-1] - freqs[0], 2 * np.pi / tau)

    def make(p):
        return FMPulseSequence(durations, basis @ p)

    def residual(p):
        pulse = make(p)
        loops = loop_integrals(pulse, freqs) / tau
        if symmetric:
            # a palindromic profile makes exp(-i phi(tau)/2) A real
            _, starts = _phases(pulse, freqs)
            end = starts[:, -1] + (pulse.detunings[-1] - freqs) * durations[-1]
            return np.real(loops * np.exp(-0.5j * end))
        return np.concatenate([loops.real, loops.imag])

    def jacobian(p):
        pulse = make(p)
        loops, jac = _loop_jacobian(pulse, freqs)
        jac = jac @ basis / tau
        loops = loops / tau
        if symmetric:
            _, starts = _phases(pulse, freqs)
            end = starts[:, -1] + (pulse.detunings[-1] - freqs) * durations[-1]
            rot = np.exp(-0.5j * end)
            dend = np.tile(durations, (n_modes, 1)) @ basis
            return np.real(jac * rot[:, None] + loops[:, None] * rot[:, None] * (-0.5j) * dend)
        return np.vstack([jac.real, jac.imag])

    underdetermined = n_free < n_constraints + (0 if symmetric else 1) or n_segments < n_constraints + 1
    best = None
    best_cost = np.inf
    attempts = 0
    for attempt in range(1 if underdetermined else n_starts):
        attempts += 1
        p0 = freqs[-1] + span * rng.uniform(0.05, 1.5, size=n_free)
        method = "lm" if len(residual(p0)) >= n_free else "trf"
        try:
            sol = optimize.least_squares(residual, p0, jac=jacobian, method=method,
                                         xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev)
        except ValueError:
            continue
        pulse = make(sol.x)
        g = pair_couplings(modes, pulse)[a, b]
        cost = float(np.max(np.abs(residual(sol.x))))
        log.debug("fm start %d: residual %.3e coupling %.3e", attempt, cost, g)
        if cost < best_cost:
            best_cost = cost
        if g * theta_target <= 0:
            continue
        rabi = float(np.sqrt(2 * theta_target / g))
        max_alpha = max_displacement(pulse, modes, targets, rabi)
        if max_alpha < alpha_tol and (best is None or rabi < best.pulse.rabi):
            theta = geometric_phase(pulse, modes.eta[a], modes.eta[b], rabi, rabi, freqs)
            best = FMResult(replace(pulse, rabi=rabi), max_alpha, theta, attempts)
    if underdetermined:
        raise OptimizationError(
            f"{n_segments} segments cannot close {n_modes} modes and set the phase", best_cost)
    if best is None:
        raise OptimizationError("no start converged to a closed pulse with the requested phase sign",
                                best_cost)
    best.attempts = attempts
    best.residuals = {
        "alpha": [abs(x) for x in modes.eta[a] * best.pulse.rabi / 2 * loop_integrals(best.pulse, freqs)]
        + [abs(x) for x in modes.eta[b] * best.pulse.rabi / 2 * loop_integrals(best.pulse, freqs)],
        "theta_error": abs(best.theta - theta_target),
    }
    return best


# --------------------------------------------------------- spin-boson oracle

def simulate_spin_boson(pulse: FMPulseSequence, eta: np.ndarray, mode_freqs, omegas: Sequence[float],
                        spin_phases: Sequence[float], fock_cutoff: int,
                        initial_spin: np.ndarray, top_tol: float = 1e-8) -> np.ndarray:
    """Evolve spins times motional ground state under the full spin-boson coupling.

    Each ion j couples to mode k through
    ``(eta_jk Omega_j / 2) sigma_phi_j (a_k exp(i phi_k(t)) + h.c.)``.
    Within a segment the Hamiltonian becomes time independent in the frame
    rotating at the segment detuning, so each segment is one exact matrix
    exponential. Returns the joint state with spin indices first.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    freqs = np.atleast_1d(np.asarray(mode_freqs, dtype=float))
    n_ions, n_modes = eta.shape
    if n_ions > 2 or n_modes > 2:
        raise ValueError("spin-boson oracle is limited to 2 ions and 2 modes")
    c = fock_cutoff
    a1 = np.diag(np.sqrt(np.arange(1, c)), 1).astype(complex)
    i_f = np.eye(c)
    ds = 2**n_ions
    dm = c**n_modes

    def mode_op(op, k):
        mats = [op if q == k else i_f for q in range(n_modes)]
        return spin_core.kron_all(mats)

    annihil = [mode_op(a1, k) for k in range(n_modes)]
    number = [mode_op(a1.conj().T @ a1, k) for k in range(n_modes)]
    sig = [spin_core.embed({j: spin_core.sigma_phi(spin_phases[j])}, n_ions) for j in range(n_ions)]
    coupling = [sum(eta[j, k] * omegas[j] / 2 * sig[j] for j in range(n_ions)) for k in range(n_modes)]

    psi = np.kron(np.asarray(initial_spin, dtype=complex), np.eye(dm)[0])
    delta, starts = _phases(pulse, freqs)

    def frame(phases):
        # R = prod_k exp(-i phi_k n_k), which maps a_k -> a_k exp(i phi_k)
        diag = np.ones(dm, dtype=complex)
        for k in range(n_modes):
            diag *= np.exp(-1j * phases[k] * np.diag(number[k]).real)
        return np.tile(diag, ds)

    for s in range(pulse.n_segments):
        T = pulse.durations[s]
        h = sum(np.kron(coupling[k], annihil[k] + annihil[k].conj().T) for k in range(n_modes))
        h = h - sum(delta[k, s] * np.kron(np.eye(ds), number[k]) for k in range(n_modes))
        psi = frame(starts[:, s]).conj() * psi
        psi = linalg.expm(-1j * h * T) @ psi
        psi = frame(starts[:, s] + delta[:, s] * T) * psi

    probs = np.abs(psi.reshape(ds, *([c] * n_modes))) ** 2
    top = 0.0
    for k in range(n_modes):
        top = max(top, float(np.take(probs, c - 1, axis=1 + k).sum()))
    if top > top_tol:
        raise TruncationError(f"population {top:.2e} in the top Fock level exceeds {top_tol:.0e}", top)
    return psi


def spin_density_matrix(joint: np.ndarray, n_ions: int) -> np.ndarray:
    m = joint.reshape(2**n_ions, -1)
    return m @ m.conj().T
