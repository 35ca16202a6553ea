from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from freqlab import spin
from freqlab.spin import (Detunings, FieldParams, Frame, PulseSegment, SpinSystem, StateVector)

W = 1.0
finite = dict(allow_nan=False, allow_infinity=False)
det = st.floats(-0.9, 0.9, **finite)
phase = st.floats(0.0, 2 * math.pi, **finite)
times = st.floats(0.0, 8.0, **finite)


# ---------------------------------------------------------------- types

def test_spin_system_from_field():
    s = SpinSystem.from_field(2.0, 3.5)
    assert s.larmor == 7.0
    with pytest.raises(ValueError):
        SpinSystem(-1.0)
    with pytest.raises(ValueError):
        SpinSystem(7.1, 2.0, 3.5)


def test_field_params_validation():
    FieldParams(1.0, 10.0, 0.3, "signal")
    with pytest.raises(ValueError):
        FieldParams(0.0, 10.0)
    with pytest.raises(ValueError):
        FieldParams(1.0, 10.0, 0.2, "control")
    with pytest.raises(ValueError):
        FieldParams(1.0, 10.0, role="probe")


@given(det, det)
def test_detunings_invariants(ds, dc):
    d = Detunings(ds, dc, W)
    assert d.delta_s == d.delta_c + d.delta or math.isclose(d.delta_s, d.delta_c + d.delta, abs_tol=1e-15)
    assert d.generalized_rabi >= W
    assert d.near_resonant == (abs(ds) < W and abs(dc) < W)


def test_pulse_segment_rejects_negative_duration():
    with pytest.raises(ValueError):
        PulseSegment(None, -1.0)


def test_unit_conversion():
    assert spin.hz_to_rad(1.0) == 2 * math.pi
    assert spin.rad_to_hz(2 * math.pi) == 1.0


# ---------------------------------------------------------------- frames

def test_frame_transform_identity_at_zero_time():
    psi = StateVector(np.array([0.6, 0.8j]))
    out = spin.frame_transform(psi, Frame.CONTROL, 123.0, 0.0)
    assert np.array_equal(out.amplitudes, psi.amplitudes)
    assert out.frame is Frame.CONTROL


def test_frame_transform_excited_full_turn():
    out = spin.frame_transform(StateVector.excited(), Frame.SIGNAL, 2 * math.pi, 1.0)
    assert np.allclose(out.amplitudes, [0, np.exp(-1j * math.pi)], atol=1e-15)
    assert out.prob_excited == pytest.approx(1.0, abs=1e-15)


def test_frame_transform_matches_matrix_exponential():
    psi = StateVector(np.array([1, 1]) / math.sqrt(2))
    w, t = 1e6, 3.7e-6
    ref = expm(1j * w * t * spin.SIGMA_Z / 2) @ psi.amplitudes
    out = spin.frame_transform(psi, Frame.CONTROL, w, t)
    assert np.max(np.abs(out.amplitudes - ref)) < 1e-14


@given(st.floats(-1e7, 1e7, **finite), st.floats(0, 1e-3, **finite), phase)
def test_frame_consistency_populations(w, t, a):
    psi = StateVector(np.array([math.cos(a), 1j * math.sin(a)]))
    out = spin.frame_transform(psi, Frame.SIGNAL, w, t)
    assert np.allclose(out.populations, psi.populations, atol=1e-12)
    assert abs(out.norm - 1) < 1e-12


def test_phase_update_examples():
    assert spin.phase_update(0.3, 0.0, 17.0) == pytest.approx(0.3)
    assert spin.phase_update(0.0, 2 * math.pi, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert spin.phase_update(0.95, 1e5, 7.5e-7) == pytest.approx(1.025, abs=1e-12)


@given(st.floats(-2, 2, **finite), phase, st.floats(0.1, 5, **finite))
def test_phase_update_matches_state_transformation(delta, phi, t):
    """Updating the signal phase equals transforming the state between frames."""
    # state after a control pulse, viewed in the control frame
    psi_c = spin.rotating_frame_unitary(0.7, 0.0, 0.0, W) @ np.array([1, 0])
    # route 1: phase bookkeeping
    u1 = spin.rotating_frame_unitary(0.9, 0.0, spin.phase_update(phi, delta, t), W)
    p1 = abs((u1 @ psi_c)[1]) ** 2
    # route 2: explicitly rotate the state into the signal frame, apply the
    # pulse with the bare phase, and rotate back
    f = spin.frame_matrix(delta, t)
    u2 = f.conj().T @ spin.rotating_frame_unitary(0.9, 0.0, phi, W) @ f
    p2 = abs((u2 @ psi_c)[1]) ** 2
    assert abs(p1 - p2) < 1e-10


def test_wrap_phase_range():
    x = spin.wrap_phase(np.array([-1e-18, -0.1, 2 * math.pi, 7.0]))
    assert np.all((x >= 0) & (x < 2 * math.pi))


# ---------------------------------------------------------------- closed form

def test_closed_form_half_pulse_example():
    out = spin.evolve_closed_form(StateVector.ground(), 0.0, 0.0, W, math.pi / (2 * W))
    assert np.allclose(out.amplitudes, np.array([1, -1j]) / math.sqrt(2), atol=1e-15)


@given(det, phase)
def test_closed_form_identity_at_zero_time(d, phi):
    psi = StateVector(np.array([0.6, 0.8]))
    out = spin.evolve_closed_form(psi, d, phi, W, 0.0)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_closed_form_matches_expm():
    d, phi, t = 0.5, 1.2, 0.37
    ref = expm(-1j * spin.rotating_frame_hamiltonian(d, phi, W) * t) @ np.array([1, 0])
    out = spin.evolve_closed_form(StateVector.ground(), d, phi, W, t)
    assert np.max(np.abs(out.amplitudes - ref)) < 1e-14


@settings(max_examples=200)
@given(times, st.floats(-5, 5, **finite), phase, st.floats(0.1, 10, **finite))
def test_unitarity(t, d, phi, rabi):
    u = spin.rotating_frame_unitary(t, d, phi, rabi)
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) < 1e-12


@given(times, det, phase)
def test_closed_form_equals_expm_everywhere(t, d, phi):
    u = spin.rotating_frame_unitary(t, d, phi, W)
    ref = expm(-1j * spin.rotating_frame_hamiltonian(d, phi, W) * t)
    assert np.max(np.abs(u - ref)) < 1e-12


@given(st.lists(st.tuples(times, det, phase), min_size=1, max_size=12))
def test_norm_preserved_along_chains(ops):
    psi = StateVector.ground()
    for t, d, phi in ops:
        psi = spin.evolve_closed_form(psi, d, phi, W, t)
    assert abs(psi.norm - 1) < 1e-10


def test_rejects_unnormalised_input():
    with pytest.raises(ValueError):
        spin.evolve_closed_form(StateVector(np.array([1.0, 1.0])), 0.0, 0.0, W, 1.0)


# ---------------------------------------------------------------- sequential probability

def test_prob_examples():
    assert spin.prob_excited_seq(math.pi, 0, 0, 0, W) == pytest.approx(1.0, abs=1e-15)
    assert spin.prob_excited_seq(math.pi, 0, 0, math.pi / 2, W) == pytest.approx(0.5, abs=1e-15)


def test_prob_equal_detuning_matches_oracle():
    p = spin.prob_excited_seq(math.pi, 0.1, 0.1, 0.95, W)
    q = spin.prob_excited_numeric(math.pi, 0.1, 0.1, 0.95, W)
    assert abs(p - q) < 1e-8


@settings(max_examples=300)
@given(times, det, det, phase)
def test_closed_form_equals_propagator_product(t, ds, dc, phi):
    assert abs(spin.prob_excited_seq(t, ds, dc, phi, W) - spin.prob_excited_unitary(t, ds, dc, phi, W)) < 1e-12


@given(times, det, det, phase)
def test_fringe_coefficients_reproduce_probability(t, ds, dc, phi):
    a, b, c = spin.sequential_fringe(t, ds, dc, W)
    pm = phi + (ds - dc) * t / 2
    assert abs(a + b * math.cos(pm) + c * math.sin(pm) - spin.prob_excited_seq(t, ds, dc, phi, W)) < 1e-12


@given(times, det, det, phase)
def test_probability_in_unit_interval(t, ds, dc, phi):
    p = spin.prob_excited_seq(t, ds, dc, phi, W)
    assert -1e-12 <= p <= 1 + 1e-12


# specialisation chain -------------------------------------------------------

@given(times, det, phase)
def test_specialisation_control_resonant(t, ds, phi):
    pm = phi + ds * t / 2
    assert abs(spin.prob_excited_seq(t, ds, 0.0, phi, W) - spin.prob_control_resonant(t, ds, pm, W)) < 1e-12


@given(det, det, phase)
def test_specialisation_pi_time(ds, dc, phi):
    t = math.pi / W
    pm = phi + (ds - dc) * t / 2
    assert abs(spin.prob_excited_seq(t, ds, dc, phi, W) - spin.prob_pi_time(ds, dc, pm, W)) < 1e-12


@given(times, det, phase)
def test_specialisation_equal_detuning(t, ds, phi):
    assert abs(spin.prob_excited_seq(t, ds, ds, phi, W) - spin.prob_equal_detuning(t, ds, phi, W)) < 1e-12


@given(times, phase)
def test_specialisation_resonant(t, phi):
    assert abs(spin.prob_excited_seq(t, 0, 0, phi, W) - spin.prob_resonant(t, phi, W)) < 1e-12


@given(phase)
def test_specialisation_ramsey(phi):
    assert abs(spin.prob_excited_seq(math.pi / W, 0, 0, phi, W) - math.cos(phi / 2) ** 2) < 1e-15


@given(det, phase)
def test_specialisation_pi_time_subcases(ds, phi):
    t = math.pi / W
    assert abs(spin.prob_excited_seq(t, ds, ds, phi, W) - spin.prob_equal_detuning_pi(ds, phi, W)) < 1e-12
    pm = phi + ds * t / 2
    assert abs(spin.prob_excited_seq(t, ds, 0, phi, W) - spin.prob_control_resonant_pi(ds, pm, W)) < 1e-12


# order symmetry -------------------------------------------------------------

def _harmonics(t, ds, dc, order):
    ph = np.array([0, 2 * math.pi / 3, 4 * math.pi / 3])
    y = [spin.prob_excited_unitary(t, ds, dc, p, W, order) for p in ph]
    a, b, c = np.linalg.solve(np.c_[np.ones(3), np.cos(ph), np.sin(ph)], y)
    return a, math.hypot(b, c)


@given(times, det, det)
def test_order_reversal_keeps_fringe_offset_and_contrast(t, ds, dc):
    a1, c1 = _harmonics(t, ds, dc, "control-first")
    a2, c2 = _harmonics(t, ds, dc, "signal-first")
    assert abs(a1 - a2) < 1e-12 and abs(c1 - c2) < 1e-12


@given(times, phase)
def test_order_reversal_exact_on_resonance(t, phi):
    assert abs(spin.prob_excited_unitary(t, 0, 0, phi, W, "signal-first")
               - spin.prob_excited_unitary(t, 0, 0, phi, W)) < 1e-12


@given(times, det, phase)
def test_order_reversal_equal_detuning_mirrors_phase(t, ds, phi):
    assert abs(spin.prob_excited_unitary(t, ds, ds, phi, W, "signal-first")
               - spin.prob_excited_unitary(t, ds, ds, -phi, W)) < 1e-12


def test_unknown_order_rejected():
    with pytest.raises(ValueError):
        spin.sequential_unitary(1.0, 0, 0, 0, W, order="both")


# ---------------------------------------------------------------- numeric reference

def test_numeric_pi_pulse():
    omega0 = 10.0
    seg = [PulseSegment(FieldParams(W, omega0, 0.0, "control"), math.pi / W)]
    res = spin.evolve_numeric(StateVector.ground(), seg, omega0)
    assert res.state.prob_excited == pytest.approx(1.0, abs=1e-9)


def test_numeric_free_evolution_is_frame_rotation():
    psi = StateVector(np.array([0.6, 0.8j]))
    omega0, t = 10.0, 1.3
    res = spin.evolve_numeric(psi, [PulseSegment(None, t)], omega0)
    ref = expm(-1j * omega0 * t * spin.SIGMA_Z / 2) @ psi.amplitudes
    assert np.max(np.abs(res.state.amplitudes - ref)) < 1e-9


def test_numeric_single_pulse_matches_closed_form():
    ds, phi, t, omega0 = 0.3, 0.7, math.pi / 2, 10.0
    seg = [PulseSegment(FieldParams(W, omega0 + ds, phi), t)]
    res = spin.evolve_numeric(StateVector.ground(), seg, omega0)
    closed = spin.evolve_closed_form(StateVector.ground(), ds, phi, W, t)
    assert abs(res.state.prob_excited - closed.prob_excited) < 1e-8


def test_numeric_rejects_bad_tolerance_and_frame():
    with pytest.raises(ValueError):
        spin.evolve_numeric(StateVector.ground(), [], 1.0, tol=0)
    with pytest.raises(ValueError):
        spin.evolve_numeric(StateVector.ground(Frame.CONTROL), [], 1.0)


def test_oracle_grid_sample():
    """A slice of the oracle grid; the full grid runs in the acceptance suite."""
    vals = [0.0, 0.1, -0.5]
    for ds in vals:
        for dc in vals:
            for t in (math.pi / 2, 2 * math.pi):
                p = spin.prob_excited_seq(t, ds, dc, 0.95, W)
                q = spin.prob_excited_numeric(t, ds, dc, 0.95, W)
                assert abs(p - q) < 1e-8
