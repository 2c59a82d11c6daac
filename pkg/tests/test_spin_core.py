import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from msxtalk import spin_core as sc

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


def test_pauli_phi_basic_axes():
    assert np.allclose(sc.pauli_phi(0.0, 0, 1), sc.X)
    assert np.allclose(sc.pauli_phi(np.pi / 2, 0, 1), sc.Y)


def test_pauli_phi_embedding_order():
    expected = np.kron(np.eye(2), 0.5 * sc.X + np.sqrt(3) / 2 * sc.Y)
    assert np.allclose(sc.pauli_phi(np.pi / 3, 1, 2), expected, atol=1e-15)


def test_pauli_phi_out_of_range():
    with pytest.raises(IndexError):
        sc.pauli_phi(0.0, 2, 2)


@given(angles)
def test_pauli_phi_involution_and_traceless(phi):
    p = sc.pauli_phi(phi, 1, 3)
    assert np.allclose(p @ p, np.eye(8), atol=1e-12)
    assert np.allclose(p, p.conj().T)
    assert abs(np.trace(p)) < 1e-12


@settings(max_examples=50)
@given(angles, angles, angles)
def test_ms_unitary_matches_matrix_exponential(theta, pa, pb):
    gen = sc.pauli_phi(pa, 0, 3) @ sc.pauli_phi(pb, 2, 3)
    assert np.allclose(sc.ms_unitary(theta, pa, pb, 0, 2, 3), expm(-1j * theta * gen), atol=1e-12)


def test_ms_unitary_examples():
    assert np.allclose(sc.ms_unitary(0.0, 0.3, 0.1, 0, 1, 2), np.eye(4))
    out = sc.apply(sc.ms_unitary(np.pi / 4, 0, 0, 0, 1, 2), sc.zero_state(2))
    assert np.allclose(out, np.array([1, 0, 0, -1j]) / np.sqrt(2))
    half = sc.ms_unitary(np.pi / 8, 0, 0, 0, 1, 2)
    assert np.max(np.abs(half @ half - sc.ms_unitary(np.pi / 4, 0, 0, 0, 1, 2))) < 1e-12


@given(angles, angles, angles)
def test_ms_unitary_additive_and_unitary(t1, t2, phi):
    a = sc.ms_unitary(t1, phi, -phi, 1, 3, 4)
    b = sc.ms_unitary(t2, phi, -phi, 1, 3, 4)
    assert sc.is_unitary(a)
    assert np.max(np.abs(a @ b - sc.ms_unitary(t1 + t2, phi, -phi, 1, 3, 4))) < 1e-12


def test_ms_unitary_same_ion_rejected():
    with pytest.raises(sc.InvalidPairError):
        sc.ms_unitary(0.1, 0, 0, 1, 1, 3)


def test_apply_identity_and_flip(rng):
    psi = sc.random_state(3, rng)
    assert np.allclose(sc.apply(np.eye(8), psi), psi)
    assert np.allclose(sc.apply(sc.X, sc.basis_state("0")), sc.basis_state("1"))


def test_apply_preserves_norm(rng):
    for _ in range(20):
        u = sc.random_unitary(16, rng)
        assert abs(np.linalg.norm(sc.apply(u, sc.random_state(4, rng))) - 1) < 1e-12


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        sc.apply(np.eye(4), sc.zero_state(3))


def test_fast_paths_match_dense(rng):
    psi = sc.random_state(4, rng)
    ops = {0: sc.sigma_phi(0.3), 2: sc.Y}
    assert np.allclose(sc.apply_local(psi, ops), sc.embed(ops, 4) @ psi)
    gen = sc.embed({1: sc.X, 3: sc.sigma_phi(1.1)}, 4)
    assert np.allclose(sc.apply_pauli_exp(psi, 0.7, {1: sc.X, 3: sc.sigma_phi(1.1)}),
                       expm(-0.7j * gen) @ psi)


def test_reduced_populations_examples():
    bell = np.array([1, 0, 0, -1j]) / np.sqrt(2)
    pops = sc.reduced_populations(bell, [0])
    assert pops[0] == pytest.approx(0.5) and pops[1] == pytest.approx(0.5)
    assert sc.reduced_populations(sc.zero_state(3), [2])[0] == pytest.approx(1.0)


def test_reduced_populations_subset_order():
    psi = sc.basis_state("011")
    assert sc.reduced_populations(psi, [0, 2])[0b01] == pytest.approx(1.0)
    assert sc.reduced_populations(psi, [2, 0])[0b10] == pytest.approx(1.0)


def test_reduced_populations_errors():
    with pytest.raises(ValueError):
        sc.reduced_populations(sc.zero_state(3), [1, 1])
    with pytest.raises(IndexError):
        sc.reduced_populations(sc.zero_state(3), [3])


def test_reduced_populations_sum_to_one(rng):
    for _ in range(10):
        psi = sc.random_state(5, rng)
        assert sum(sc.reduced_populations(psi, [4, 1, 2]).values()) == pytest.approx(1.0, abs=1e-12)


def test_reduced_density_matrix_of_product():
    a = np.array([np.cos(0.3), 1j * np.sin(0.3)])
    b = np.array([0.6, 0.8])
    rho = sc.reduced_density_matrix(np.kron(a, b), [0])
    assert np.allclose(rho, np.outer(a, a.conj()))
