"""Dense statevector and operator algebra for small ion chains.

States are 1-D complex arrays of length ``2**n`` and operators are
``2**n x 2**n`` complex arrays. Ion 0 is the leftmost tensor factor, so in a
computational-basis index the bit of ion 0 is the most significant one.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

UNITARITY_TOL = 1e-12


class InvalidPairError(ValueError):
    """Raised when a two-ion interaction is requested on a single ion."""


def n_qubits(arr: np.ndarray) -> int:
    dim = arr.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def _check_index(target: int, n: int) -> None:
    if not 0 <= target < n:
        raise IndexError(f"ion index {target} out of range for {n} qubits")


def basis_state(bits: Sequence[int] | str) -> np.ndarray:
    """Computational basis state, e.g. ``basis_state("010")``."""
    bits = [int(b) for b in bits]
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int("".join(map(str, bits)), 2) if bits else 0] = 1.0
    return psi


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def sigma_phi(phi: float) -> np.ndarray:
    """Single-qubit cos(phi) X + sin(phi) Y."""
    return np.cos(phi) * X + np.sin(phi) * Y


def embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Tensor product placing ``ops[ion]`` at each ion and identity elsewhere."""
    for ion in ops:
        _check_index(ion, n)
    out = np.ones((1, 1), dtype=complex)
    for ion in range(n):
        out = np.kron(out, ops.get(ion, I2))
    return out


def pauli_phi(phi: float, target: int, n: int) -> np.ndarray:
    _check_index(target, n)
    return embed({target: sigma_phi(phi)}, n)


def ms_unitary(theta: float, phi_a: float, phi_b: float, a: int, b: int, n: int) -> np.ndarray:
    """exp(-i theta sigma_phi_a^(a) sigma_phi_b^(b)).

    The generator squares to the identity, so the exponential is
    ``cos(theta) I - i sin(theta) G`` exactly.
    """
    _check_index(a, n)
    _check_index(b, n)
    if a == b:
        raise InvalidPairError(f"MS interaction needs two distinct ions, got {a} twice")
    gen = embed({a: sigma_phi(phi_a), b: sigma_phi(phi_b)}, n)
    return np.cos(theta) * np.eye(2**n, dtype=complex) - 1j * np.sin(theta) * gen


def rotation(phi: float, angle: float, target: int, n: int) -> np.ndarray:
    """Single-qubit rotation exp(-i angle/2 sigma_phi) on ``target``."""
    _check_index(target, n)
    r = np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * sigma_phi(phi)
    return embed({target: r}, n)


def rz(angle: float, target: int, n: int) -> np.ndarray:
    _check_index(target, n)
    r = np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    return embed({target: r}, n)


def apply(op: np.ndarray, state: np.ndarray) -> np.ndarray:
    if op.shape != (state.shape[0], state.shape[0]):
        raise ValueError(f"operator shape {op.shape} does not match state of length {state.shape[0]}")
    out = op @ state
    return out / np.linalg.norm(out)


# Fast in-place style helpers used by the circuit simulator. They act on the
# state through a (2,)*n reshape instead of building dense operators.

def _as_tensor(state: np.ndarray) -> tuple[np.ndarray, int]:
    n = n_qubits(state)
    return state.reshape((2,) * n), n


def apply_local(state: np.ndarray, ops: dict[int, np.ndarray]) -> np.ndarray:
    """Apply single-qubit matrices on several ions."""
    psi, n = _as_tensor(state)
    for ion, m in ops.items():
        _check_index(ion, n)
        psi = np.moveaxis(np.tensordot(m, psi, axes=([1], [ion])), 0, ion)
    return psi.reshape(-1)


def apply_pauli_exp(state: np.ndarray, angle: float, paulis: dict[int, np.ndarray]) -> np.ndarray:
    """Apply exp(-i angle P) for an involutory Pauli product P."""
    if angle == 0.0:
        return state
    return np.cos(angle) * state - 1j * np.sin(angle) * apply_local(state, paulis)


def reduced_density_matrix(state: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    psi, n = _as_tensor(state)
    keep = list(keep)
    _check_subset(keep, n)
    rest = [q for q in range(n) if q not in keep]
    m = np.transpose(psi, keep + rest).reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def _check_subset(subset: Sequence[int], n: int) -> None:
    if len(set(subset)) != len(subset):
        raise ValueError(f"duplicate ion indices in {list(subset)}")
    for q in subset:
        _check_index(q, n)


def marginal_probabilities(state: np.ndarray, subset: Sequence[int]) -> np.ndarray:
    psi, n = _as_tensor(state)
    subset = list(subset)
    _check_subset(subset, n)
    probs = np.abs(psi) ** 2
    rest = tuple(q for q in range(n) if q not in subset)
    marg = probs.sum(axis=rest) if rest else probs
    # sum() keeps the remaining axes in ascending ion order
    order = sorted(subset)
    marg = np.transpose(marg, [order.index(q) for q in subset])
    return marg.reshape(-1)


def reduced_populations(state: np.ndarray, subset: Sequence[int]) -> dict[int, float]:
    """Probability of each bitstring of ``subset`` (first listed ion is the MSB)."""
    marg = marginal_probabilities(state, subset)
    return {k: float(p) for k, p in enumerate(marg)}


def excited_population(state: np.ndarray, ion: int) -> float:
    return float(marginal_probabilities(state, [ion])[1])


def is_unitary(u: np.ndarray, tol: float = UNITARITY_TOL) -> bool:
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))) < tol


def phase_distance(u: np.ndarray, v: np.ndarray) -> float:
    """max-norm distance between two unitaries after removing the best global phase."""
    overlap = np.trace(u.conj().T @ v)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.max(np.abs(u * phase - v)))


def gate_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """|tr(U^dagger V)| / 2^n, equal to one iff the gates agree up to phase."""
    return float(abs(np.trace(u.conj().T @ v)) / u.shape[0])


def state_fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    return float(abs(np.vdot(psi, phi)) ** 2)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
