import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msxtalk import motional as mo
from msxtalk import spin_core as sc

TWO_PI = 2 * np.pi


def random_pulse(rng, mode=TWO_PI * 3e6, max_segments=6):
    k = int(rng.integers(1, max_segments + 1))
    dur = rng.uniform(2e-6, 60e-6, k)
    det = mode + TWO_PI * rng.uniform(-300e3, 300e3, k)
    # sprinkle in exactly resonant segments to exercise the small-argument series
    if k > 1:
        det[rng.integers(k)] = mode
    return mo.FMPulseSequence(dur, det)


# ------------------------------------------------------------------ phase

def test_motional_phase_single_segment():
    p = mo.FMPulseSequence([10e-6], [TWO_PI * 3.1e6])
    delta = TWO_PI * 0.1e6
    assert mo.motional_phase(p, TWO_PI * 3e6, 4e-6) == pytest.approx(delta * 4e-6, rel=1e-12)
    assert mo.motional_phase(p, TWO_PI * 3e6, 0.0) == 0.0


def test_motional_phase_antisymmetric_pair_closes():
    w = TWO_PI * 3e6
    d = TWO_PI * 50e3
    p = mo.FMPulseSequence([5e-6, 5e-6], [w + d, w - d])
    assert abs(mo.motional_phase(p, w, p.tau)) < 1e-12


def test_motional_phase_out_of_range():
    p = mo.FMPulseSequence([5e-6], [1.0])
    with pytest.raises(ValueError):
        mo.motional_phase(p, 0.0, 6e-6)
    with pytest.raises(ValueError):
        mo.motional_phase(p, 0.0, -1e-9)


def test_motional_phase_continuous(rng):
    p = random_pulse(rng)
    for t in p.boundaries[1:-1]:
        left = mo.motional_phase(p, TWO_PI * 3e6, t * (1 - 1e-12))
        right = mo.motional_phase(p, TWO_PI * 3e6, t)
        assert abs(left - right) < 1e-5


# ----------------------------------------------------------- displacement

def test_displacement_zero_rabi():
    p = mo.FMPulseSequence([10e-6], [TWO_PI * 3.1e6])
    assert mo.displacement(p, 0.1, 0.0, TWO_PI * 3e6) == 0


def test_displacement_closed_loop_and_half_loop():
    w = TWO_PI * 3e6
    delta = TWO_PI * 80e3
    eta, om = 0.1, TWO_PI * 120e3
    full = mo.FMPulseSequence([TWO_PI / delta], [w + delta])
    assert abs(mo.displacement(full, eta, om, w)) < 1e-12
    half = mo.FMPulseSequence([np.pi / delta], [w + delta])
    expected = 1j * eta * om / delta
    assert abs(mo.displacement(half, eta, om, w) - expected) < 1e-12
    assert abs(mo.displacement_quad(half, eta, om, w) - expected) < 1e-10


def test_displacement_matches_quadrature_random_pulses(rng):
    worst = 0.0
    for _ in range(100):
        p = random_pulse(rng)
        for w in (TWO_PI * 3e6, TWO_PI * 2.95e6):
            a = mo.displacement(p, 0.1, TWO_PI * 100e3, w)
            b = mo.displacement_quad(p, 0.1, TWO_PI * 100e3, w)
            worst = max(worst, abs(a - b))
    assert worst < 1e-10


def test_displacement_near_resonance_series():
    w = TWO_PI * 3e6
    for off in (0.0, 1e-3, 1.0, 100.0):
        p = mo.FMPulseSequence([20e-6, 30e-6], [w + off, w - 2 * off])
        a = mo.displacement(p, 0.1, 1e5, w)
        b = mo.displacement_quad(p, 0.1, 1e5, w)
        assert abs(a - b) < 1e-12 * max(1, abs(b))


def test_time_reversal_conjugates_displacement(rng):
    w = TWO_PI * 3e6
    for _ in range(20):
        p = random_pulse(rng)
        a = mo.displacement_quad(p, 0.1, 1e5, w)
        b = mo.displacement_quad(p.reversed(), 0.1, 1e5, w)
        end = mo.motional_phase(p, w, p.tau)
        assert abs(b - np.exp(1j * end) * np.conj(a)) < 1e-10
        assert abs(mo.displacement(p.reversed(), 0.1, 1e5, w) - b) < 1e-10


# --------------------------------------------------------- geometric phase

def closed_theta(oa, ob, ea, eb, delta, tau):
    return oa * ob * ea * eb / 2 * (tau / delta - np.sin(delta * tau) / delta**2)


@settings(max_examples=30, deadline=None)
@given(st.floats(5e3, 500e3), st.floats(1e-6, 100e-6))
def test_single_segment_phase_closed_form(delta_hz, tau):
    w = TWO_PI * 3e6
    delta = TWO_PI * delta_hz
    p = mo.FMPulseSequence([tau], [w + delta])
    th = mo.geometric_phase(p, [0.1], [0.07], 2e5, 3e5, [w])
    assert th == pytest.approx(closed_theta(2e5, 3e5, 0.1, 0.07, delta, tau), rel=1e-9, abs=1e-12)


def test_single_segment_phase_vs_double_quadrature():
    w = TWO_PI * 3e6
    delta = TWO_PI * 37e3
    p = mo.FMPulseSequence([45e-6], [w + delta])
    q = mo.geometric_phase_quad(p, [0.1], [0.07], 2e5, 3e5, [w])
    assert abs(q - closed_theta(2e5, 3e5, 0.1, 0.07, delta, 45e-6)) < 1e-9


def test_loop_closing_phase():
    w = TWO_PI * 3e6
    delta = TWO_PI * 60e3
    p = mo.FMPulseSequence([TWO_PI / delta], [w + delta])
    th = mo.geometric_phase(p, [0.1], [0.08], 3e5, 3e5, [w])
    assert th == pytest.approx(np.pi * 3e5 * 3e5 * 0.1 * 0.08 / delta**2, rel=1e-12)


def test_geometric_phase_zero_rabi():
    p = mo.FMPulseSequence([10e-6], [TWO_PI * 3.1e6])
    assert mo.geometric_phase(p, [0.1], [0.1], 0.0, 1e5, [TWO_PI * 3e6]) == 0


def test_geometric_phase_random_vs_quadrature(rng):
    freqs = np.array([TWO_PI * 2.95e6, TWO_PI * 3e6])
    for _ in range(10):
        p = random_pulse(rng)
        ea, eb = rng.uniform(-0.1, 0.1, (2, 2))
        a = mo.geometric_phase(p, ea, eb, 1e5, 2e5, freqs)
        b = mo.geometric_phase_quad(p, ea, eb, 1e5, 2e5, freqs)
        assert abs(a - b) < 1e-9 * max(1, abs(b))


def test_geometric_phase_symmetric_and_bilinear(rng):
    freqs = np.array([TWO_PI * 2.95e6, TWO_PI * 3e6])
    p = random_pulse(rng)
    ea, eb = [0.05, -0.02], [0.07, 0.04]
    ab = mo.geometric_phase(p, ea, eb, 1e5, 2e5, freqs)
    ba = mo.geometric_phase(p, eb, ea, 2e5, 1e5, freqs)
    assert ab == pytest.approx(ba, rel=1e-13)
    assert mo.geometric_phase(p, ea, eb, 3e5, 2e5, freqs) == pytest.approx(3 * ab, rel=1e-12)


# ------------------------------------------------------------------ types

def test_pulse_validation():
    with pytest.raises(ValueError):
        mo.FMPulseSequence([1e-6, -1e-6], [1.0, 2.0])
    with pytest.raises(ValueError):
        mo.FMPulseSequence([1e-6], [1.0, 2.0])
    assert mo.FMPulseSequence([1e-6, 3e-6], [0.0, 0.0]).tau == pytest.approx(4e-6)


def test_pulse_roundtrip(tmp_path, rng):
    p = mo.FMPulseSequence(rng.uniform(1e-6, 2e-6, 5), rng.uniform(1e7, 2e7, 5), rabi=123.456)
    p.save(tmp_path / "p.csv")
    q = mo.FMPulseSequence.load(tmp_path / "p.csv")
    assert np.array_equal(p.durations, q.durations)
    assert np.array_equal(p.detunings, q.detunings)
    assert q.rabi == p.rabi


def test_mode_structure_validation():
    with pytest.raises(ValueError):
        mo.ModeStructure([2.0, 1.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        mo.ModeStructure([1.0, 2.0, 3.0], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        mo.ModeStructure([1.0], [[1.5]])


def test_harmonic_chain_modes(modes):
    assert modes.n_ions == 5 and modes.n_modes == 5
    assert modes.frequencies[-1] == pytest.approx(TWO_PI * 3e6)
    # centre-of-mass mode couples equally to every ion
    assert np.allclose(modes.eta[:, -1], 0.08 / np.sqrt(5))
    # normal-mode vectors are orthonormal once the frequency scaling is removed
    vecs = modes.eta * np.sqrt(modes.frequencies / modes.frequencies[-1]) / 0.08
    assert np.allclose(vecs.T @ vecs, np.eye(5), atol=1e-10)


def test_participation_scaling(modes):
    low = modes.with_participation({0: 0.25})
    assert np.allclose(low.eta[0], 0.25 * modes.eta[0])
    assert np.allclose(low.eta[1:], modes.eta[1:])


# -------------------------------------------------------------- optimizer

def test_optimizer_single_mode_recovers_loop():
    w = TWO_PI * 3e6
    m = mo.ModeStructure([w], [[0.1], [0.1]])
    tau = 100e-6
    res = mo.fm_optimize(m, (0, 1), 2, tau, n_starts=8)
    d = res.pulse.detunings
    assert d[0] == pytest.approx(d[1])
    loops = (d[0] - w) * tau / TWO_PI
    assert abs(loops - round(loops)) < 1e-6 and round(loops) != 0
    assert res.max_alpha < 1e-6
    assert res.theta == pytest.approx(np.pi / 4, abs=1e-9)


def test_optimizer_infeasible(modes):
    with pytest.raises(mo.OptimizationError) as err:
        mo.fm_optimize(modes, (1, 2), 1, 200e-6)
    assert np.isfinite(err.value.best_residual) or err.value.best_residual == np.inf


def test_optimizer_residuals_reproduced_by_quadrature(modes, fm_result):
    p = fm_result.pulse
    reported = fm_result.residuals["alpha"]
    quad = [abs(mo.displacement_quad(p, modes.eta[i, k], p.rabi, f))
            for i in (1, 2) for k, f in enumerate(modes.frequencies)]
    assert np.max(np.abs(np.array(reported) - np.array(quad))) < 1e-9
    tq = mo.geometric_phase_quad(p, modes.eta[1], modes.eta[2], p.rabi, p.rabi, modes.frequencies)
    assert abs(tq - fm_result.theta) < 1e-9


def test_optimizer_is_seeded(modes):
    a = mo.fm_optimize(modes, (1, 2), 15, 200e-6, n_starts=6, seed=0)
    b = mo.fm_optimize(modes, (1, 2), 15, 200e-6, n_starts=6, seed=0)
    assert np.array_equal(a.pulse.detunings, b.pulse.detunings)


# ------------------------------------------------------- spin-boson oracle

def test_spin_boson_zero_rabi_is_identity(rng):
    w = TWO_PI * 3e6
    p = mo.FMPulseSequence([10e-6, 10e-6], [w + 1e5, w - 2e5])
    psi = sc.random_state(2, rng)
    out = mo.simulate_spin_boson(p, np.array([[0.1], [0.1]]), [w], [0.0, 0.0], [0.0, 0.0], 6, psi)
    joint = np.kron(psi, np.eye(6)[0])
    assert np.allclose(out, joint, atol=1e-12)


def test_spin_boson_open_loop_purity():
    w = TWO_PI * 3e6
    delta = TWO_PI * 70e3
    p = mo.FMPulseSequence([0.37 * TWO_PI / delta], [w + delta])
    eta, om = 0.1, TWO_PI * 150e3
    alpha = mo.displacement(p, eta, om, w)
    joint = mo.simulate_spin_boson(p, np.array([[eta]]), [w], [om], [0.0], 25, sc.zero_state(1))
    rho = mo.spin_density_matrix(joint, 1)
    deficit = 1 - np.real(np.trace(rho @ rho))
    assert deficit == pytest.approx(0.5 * (1 - np.exp(-4 * abs(alpha) ** 2)), abs=1e-6)


def test_spin_boson_truncation_error():
    w = TWO_PI * 3e6
    delta = TWO_PI * 20e3
    p = mo.FMPulseSequence([0.5 * TWO_PI / delta], [w + delta])
    with pytest.raises(mo.TruncationError):
        mo.simulate_spin_boson(p, np.array([[0.1]]), [w], [TWO_PI * 400e3], [0.0], 4, sc.zero_state(1))
