"""Bell-state fidelity from populations and a two-ion parity scan."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import spin_core


@dataclass(frozen=True)
class ParityScan:
    analysis_phases: np.ndarray
    parity_values: np.ndarray
    contrast: float
    phase_offset: float
    offset: float
    residual: float

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase", "parity"])
            for p, v in zip(self.analysis_phases, self.parity_values):
                w.writerow([repr(float(p)), repr(float(v))])


def default_phases(n: int = 16) -> np.ndarray:
    return np.arange(n) * 2 * np.pi / n


def parity(state: np.ndarray, targets: Sequence[int]) -> float:
    probs = spin_core.marginal_probabilities(state, targets)
    signs = np.array([1, -1, -1, 1])
    return float(probs @ signs)


def fit_parity(phases, values) -> tuple[float, float, float, float]:
    """Least-squares fit of c + A cos(2 phi + phi0); returns (A, phi0, c, max residual)."""
    phases = np.asarray(phases, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.unique(np.round(np.mod(2 * phases, 2 * np.pi), 12)).size < 3:
        raise ValueError("parity fit needs at least 3 distinct analysis phases (mod pi)")
    design = np.column_stack([np.ones_like(phases), np.cos(2 * phases), np.sin(2 * phases)])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    c, a, b = coef
    amp = float(np.hypot(a, b))
    # a cos + b sin = A cos(2phi + phi0) with phi0 = atan2(-b, a)
    phi0 = float(np.arctan2(-b, a)) if amp > 0 else 0.0
    resid = float(np.max(np.abs(design @ coef - values)))
    return amp, phi0, float(c), resid


def parity_scan(state: np.ndarray, targets: Sequence[int], phases=None) -> ParityScan:
    """Apply R(phi, pi/2) to both targets for every analysis phase and fit the parity."""
    phases = default_phases() if phases is None else np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise ValueError("no analysis phases given")
    values = []
    for phi in phases:
        r = np.cos(np.pi / 4) * spin_core.I2 - 1j * np.sin(np.pi / 4) * spin_core.sigma_phi(phi)
        values.append(parity(spin_core.apply_local(state, {targets[0]: r, targets[1]: r}), targets))
    values = np.array(values)
    amp, phi0, c, resid = fit_parity(phases, values)
    return ParityScan(phases, values, min(amp, 1.0), phi0, c, resid)


def bell_fidelity_tomographic(p00: float, p11: float, contrast: float) -> float:
    for name, v in (("P00", p00), ("P11", p11), ("contrast", contrast)):
        if not -1e-12 <= v <= 1 + 1e-12:
            raise ValueError(f"{name}={v} outside [0, 1]")
    if p00 + p11 > 1 + 1e-9:
        raise ValueError("P00 + P11 exceeds 1")
    return (p00 + p11) / 2 + contrast / 2


def measure_bell_fidelity(state: np.ndarray, targets: Sequence[int], phases=None) -> float:
    probs = spin_core.marginal_probabilities(state, targets)
    scan = parity_scan(state, targets, phases)
    return bell_fidelity_tomographic(float(probs[0]), float(probs[3]), scan.contrast)
