"""Two-level spin dynamics under sequentially applied control and signal fields.

All frequencies are angular (rad/s) and energies are expressed in the same
units (hbar = 1).  The lab-frame Hamiltonian for a single circularly polarised
drive of Rabi frequency ``rabi``, carrier ``omega`` and phase ``phi`` is::

    H(t) = omega0/2 sz + rabi/2 (cos(omega t + phi) sx + sin(omega t + phi) sy)

Moving to the frame that co-rotates with the carrier, ``T(t) = exp(i omega t sz/2)``,
removes the time dependence and leaves::

    H_R = -delta/2 sz + rabi/2 (cos(phi) sx + sin(phi) sy),   delta = omega - omega0

which is integrated exactly by :func:`rotating_frame_unitary`.  A lab-frame
ODE integrator (:func:`evolve_numeric`) is kept strictly independent of the
closed forms so that it can serve as a reference solution in tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

TWO_PI = 2.0 * np.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

NORM_TOL = 1e-9
UNITARY_TOL = 1e-12


def hz_to_rad(f):
    """Convert a cyclic frequency in Hz to an angular frequency in rad/s."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def rad_to_hz(w):
    """Convert an angular frequency in rad/s to a cyclic frequency in Hz."""
    return np.asarray(w, dtype=float) / TWO_PI if np.ndim(w) else float(w) / TWO_PI


def wrap_phase(phi):
    """Reduce a phase to ``[0, 2*pi)``.

    ``np.mod`` has floor semantics, so consecutive phases ``phi + n*dphi`` map
    onto a sawtooth without jumps other than the 2*pi wraps themselves.
    """
    out = np.mod(phi, TWO_PI)
    # np.mod may return exactly 2*pi for tiny negative inputs
    out = np.where(out >= TWO_PI, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


class IntegrationError(RuntimeError):
    """Raised when the numerical integrator cannot meet its tolerance."""


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------

class Frame(enum.Enum):
    LAB = "lab"
    SIGNAL = "signal"
    CONTROL = "control"


@dataclass(frozen=True)
class SpinSystem:
    """Bare two-level system with Larmor frequency ``larmor`` (rad/s).

    Either give ``larmor`` directly or build it from a gyromagnetic ratio
    (rad/s/T) and a static field (T) with :meth:`from_field`.
    """

    larmor: float
    gyromagnetic_ratio: Optional[float] = None
    field_z: Optional[float] = None

    def __post_init__(self):
        if not self.larmor > 0:
            raise ValueError(f"larmor frequency must be positive, got {self.larmor!r}")
        if self.gyromagnetic_ratio is not None and self.field_z is not None:
            if self.larmor != self.gyromagnetic_ratio * self.field_z:
                raise ValueError("larmor must equal gyromagnetic_ratio * field_z")

    @classmethod
    def from_field(cls, gyromagnetic_ratio: float, field_z: float) -> "SpinSystem":
        return cls(gyromagnetic_ratio * field_z, gyromagnetic_ratio, field_z)


@dataclass(frozen=True)
class FieldParams:
    """A circularly polarised drive.

    Attributes
    ----------
    rabi : float
        Rabi frequency (rad/s), real and strictly positive.
    carrier : float
        Carrier angular frequency (rad/s).
    initial_phase : float
        Phase of the field at the reference time t = 0 (rad).  The control
        field defines the phase reference, so a control field must have zero
        phase.
    role : {"signal", "control"}
    """

    rabi: float
    carrier: float
    initial_phase: float = 0.0
    role: str = "signal"

    def __post_init__(self):
        if not (np.isfinite(self.rabi) and self.rabi > 0):
            raise ValueError(f"rabi frequency must be real and positive, got {self.rabi!r}")
        if self.role not in ("signal", "control"):
            raise ValueError(f"role must be 'signal' or 'control', got {self.role!r}")
        if self.role == "control" and self.initial_phase != 0.0:
            raise ValueError("a control field defines the phase reference; its phase must be 0")


@dataclass(frozen=True)
class Detunings:
    """Detunings of the signal and control carriers from the atomic resonance.

    ``delta_s = omega_s - omega0``, ``delta_c = omega_c - omega0`` and the
    signal-control offset ``delta = delta_s - delta_c``.
    """

    delta_s: float
    delta_c: float
    rabi: float

    @classmethod
    def from_frequencies(cls, omega0, omega_s, omega_c, rabi) -> "Detunings":
        return cls(omega_s - omega0, omega_c - omega0, rabi)

    @property
    def delta(self) -> float:
        return self.delta_s - self.delta_c

    @property
    def generalized_rabi(self) -> float:
        """Generalised Rabi frequency of the signal field, ``sqrt(delta_s**2 + rabi**2)``."""
        return math.hypot(self.delta_s, self.rabi)

    @property
    def generalized_rabi_control(self) -> float:
        return math.hypot(self.delta_c, self.rabi)

    @property
    def near_resonant(self) -> bool:
        return abs(self.delta_s) < self.rabi and abs(self.delta_c) < self.rabi


@dataclass(frozen=True)
class StateVector:
    """Two-level state ``c0|0> + c1|1>`` expressed in a given frame."""

    amplitudes: np.ndarray
    frame: Frame = Frame.LAB
    frame_time: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(2)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def ground(cls, frame: Frame = Frame.LAB) -> "StateVector":
        return cls(np.array([1.0, 0.0], dtype=complex), frame)

    @classmethod
    def excited(cls, frame: Frame = Frame.LAB) -> "StateVector":
        return cls(np.array([0.0, 1.0], dtype=complex), frame)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def prob_excited(self) -> float:
        return float(abs(self.amplitudes[1]) ** 2)

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm - 1.0) > tol:
            raise ValueError(f"state is not normalised (norm = {self.norm!r})")


@dataclass(frozen=True)
class PulseSegment:
    """Application of one field for ``duration`` seconds.

    ``field=None`` stands for free evolution (no drive).  ``phase_at_start``
    is the phase of the field in its own rotating frame, measured against the
    control reference, at the moment the segment begins; it is only used by
    the closed-form path.
    """

    field: Optional[FieldParams]
    duration: float
    phase_at_start: float = 0.0

    def __post_init__(self):
        if not self.duration >= 0:
            raise ValueError(f"duration must be non-negative, got {self.duration!r}")


# --------------------------------------------------------------------------
# Frames and phase bookkeeping
# --------------------------------------------------------------------------

def frame_matrix(omega: float, t: float) -> np.ndarray:
    """Diagonal frame transformation ``exp(i omega t sz / 2)``."""
    a = 0.5 * omega * t
    return np.diag([np.exp(1j * a), np.exp(-1j * a)])


def frame_transform(state: StateVector, target_frame: Frame, omega: float, t: float) -> StateVector:
    """Apply the rotating-frame transformation at rate ``omega`` and time ``t``.

    The matrix is diagonal, so populations are left untouched.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    amps = frame_matrix(omega, t) @ state.amplitudes
    return StateVector(amps, target_frame, float(t))


def phase_update(phi: float, delta: float, t_elapsed: float) -> float:
    """Signal phase seen in the control frame after ``t_elapsed`` seconds.

    Switching bookkeeping between two frames whose carriers differ by
    ``delta`` is equivalent to advancing the signal phase by ``delta * t``.
    """
    return wrap_phase(phi + delta * t_elapsed)


# --------------------------------------------------------------------------
# Closed-form evolution
# --------------------------------------------------------------------------

def rotating_frame_hamiltonian(detuning: float, phase: float, rabi: float) -> np.ndarray:
    """Time-independent Hamiltonian of one drive in its own rotating frame."""
    return (-0.5 * detuning * SIGMA_Z
            + 0.5 * rabi * (np.cos(phase) * SIGMA_X + np.sin(phase) * SIGMA_Y))


def rotating_frame_unitary(t: float, detuning: float, phase: float, rabi: float) -> np.ndarray:
    """Exact propagator ``exp(-i H_R t)`` for a single drive.

    Parameters
    ----------
    t : float
        Interaction time (s).
    detuning : float
        Carrier minus Larmor frequency (rad/s).
    phase : float
        Drive phase in its rotating frame (rad).
    rabi : float
        Rabi frequency (rad/s).
    """
    w = math.hypot(detuning, rabi)
    th = 0.5 * t * w
    c, s = math.cos(th), math.sin(th)
    off = -1j * (rabi / w) * s
    return np.array([
        [c + 1j * (detuning / w) * s, off * np.exp(-1j * phase)],
        [off * np.exp(1j * phase), c - 1j * (detuning / w) * s],
    ])


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < tol)


def evolve_closed_form(state: StateVector, detuning: float, phase: float, rabi: float,
                       t: float) -> StateVector:
    """Propagate ``state`` for time ``t`` under one drive, in the drive's frame."""
    state.check_normalized()
    u = rotating_frame_unitary(t, detuning, phase, rabi)
    if not is_unitary(u):
        raise ArithmeticError("propagator lost unitarity")
    return StateVector(u @ state.amplitudes, state.frame, state.frame_time + t)


def sequential_unitary(t: float, delta_s: float, delta_c: float, phi: float,
                       rabi: float, order: str = "control-first") -> np.ndarray:
    """Propagator of one control half-pulse and one signal half-pulse.

    Each field acts for ``t/2``.  ``phi`` is the signal phase, relative to the
    control field, at the start of the sequence.  The whole product is written
    in the control frame at the start of the sequence, so the phase of the
    second pulse is advanced by ``delta * t/2``.
    """
    delta = delta_s - delta_c
    h = 0.5 * t
    if order == "control-first":
        return (rotating_frame_unitary(h, delta_s, phi + delta * h, rabi)
                @ rotating_frame_unitary(h, delta_c, 0.0, rabi))
    if order == "signal-first":
        return (rotating_frame_unitary(h, delta_c, 0.0, rabi)
                @ rotating_frame_unitary(h, delta_s, phi, rabi))
    raise ValueError(f"unknown order {order!r}")


def prob_excited_unitary(t, delta_s, delta_c, phi, rabi, order="control-first") -> float:
    """Pr(1) obtained by multiplying the 2x2 propagators onto ``|0>``."""
    psi = sequential_unitary(t, delta_s, delta_c, phi, rabi, order) @ np.array([1.0, 0.0])
    return float(abs(psi[1]) ** 2)


def prob_excited_seq(t, delta_s, delta_c, phi, rabi):
    """Probability of ``|1>`` after a control half-pulse then a signal half-pulse.

    Closed-form expansion of the sequential propagator acting on ``|0>``.  The
    signal phase enters only through ``phi_m = phi + delta * t/2``, the phase
    at the mid-point of the sequence.  Vectorised over all arguments.

    Parameters
    ----------
    t : float or array
        Total interaction time (s); each field acts for ``t/2``.
    delta_s, delta_c : float or array
        Signal and control detunings (rad/s).
    phi : float or array
        Signal phase relative to the control at the start (rad).
    rabi : float
        Rabi frequency (rad/s), shared by both fields.
    """
    t, ds, dc, phi = (np.asarray(x, dtype=float) for x in (t, delta_s, delta_c, phi))
    W = float(rabi)
    d = ds - dc
    Ws = np.sqrt(ds ** 2 + W ** 2)
    Wc = np.sqrt(dc ** 2 + W ** 2)
    pm = phi + d * t / 2
    out = (W ** 2 / (2 * Wc ** 2 * Ws ** 2)) * (
        np.sin(t * Ws / 4) ** 2 * (
            d ** 2 + W ** 2 + W ** 2 * np.cos(t * Wc / 2) + 2 * d * dc + 3 * dc ** 2
            - ds * (4 * np.cos(pm) * np.sin(t * Wc / 4) ** 2 * dc
                    + np.cos(t * Wc / 2) * ds
                    + 2 * np.sin(pm) * np.sin(t * Wc / 2) * Wc))
        + np.sin(t * Ws / 2) * (-2 * np.sin(pm) * np.sin(t * Wc / 4) ** 2 * dc
                                 + np.cos(pm) * np.sin(t * Wc / 2) * Wc) * Ws
        + 2 * np.cos(t * Ws / 4) ** 2 * np.sin(t * Wc / 4) ** 2 * Ws ** 2)
    return out if out.ndim else float(out)


def sequential_fringe(t, delta_s, delta_c, rabi):
    """Coefficients ``(a, b, c)`` with ``Pr(1) = a + b cos(phi_m) + c sin(phi_m)``.

    Same content as :func:`prob_excited_seq` but separated by harmonic, which
    makes evaluating long records (many ``phi_m`` at fixed detunings) cheap.
    """
    W = float(rabi)
    ds, dc = np.asarray(delta_s, dtype=float), np.asarray(delta_c, dtype=float)
    d = ds - dc
    Ws = np.sqrt(ds ** 2 + W ** 2)
    Wc = np.sqrt(dc ** 2 + W ** 2)
    k = W ** 2 / (2 * Wc ** 2 * Ws ** 2)
    s4s = np.sin(t * Ws / 4) ** 2
    s4c = np.sin(t * Wc / 4) ** 2
    a = k * (s4s * (d ** 2 + W ** 2 + W ** 2 * np.cos(t * Wc / 2) + 2 * d * dc
                    + 3 * dc ** 2 - ds ** 2 * np.cos(t * Wc / 2))
             + 2 * np.cos(t * Ws / 4) ** 2 * s4c * Ws ** 2)
    b = k * (-4 * s4s * ds * dc * s4c + np.sin(t * Ws / 2) * np.sin(t * Wc / 2) * Wc * Ws)
    c = k * (-2 * s4s * ds * np.sin(t * Wc / 2) * Wc - 2 * np.sin(t * Ws / 2) * s4c * dc * Ws)
    if a.ndim == 0:
        return float(a), float(b), float(c)
    return a, b, c


# Special cases of the sequential probability.  Each is an independent
# transcription and is checked against the general expression in the tests.

def prob_control_resonant(t, delta_s, phi_m, rabi):
    """Pr(1) for a resonant control field (``delta_c = 0``), in terms of ``phi_m``."""
    d = np.asarray(delta_s, dtype=float)
    W = float(rabi)
    Ws = np.sqrt(d ** 2 + W ** 2)
    return (1 / (2 * Ws ** 2)) * (
        (-d * W * np.cos(phi_m - t * W / 2) + (W ** 2 - d ** 2) * np.cos(t * W / 2)
         + d * W * np.cos(phi_m + t * W / 2)) * np.sin(t * Ws / 4) ** 2
        + W * np.cos(phi_m) * np.sin(t * W / 2) * np.sin(t * Ws / 2) * Ws
        + (2 * np.cos(t * Ws / 4) ** 2 * np.sin(t * W / 4) ** 2 + np.sin(t * Ws / 4) ** 2) * Ws ** 2)


def prob_pi_time(delta_s, delta_c, phi_m, rabi):
    """Pr(1) at total interaction time ``t = pi/rabi``."""
    ds, dc = np.asarray(delta_s, dtype=float), np.asarray(delta_c, dtype=float)
    W = float(rabi)
    d = ds - dc
    Ws = np.sqrt(ds ** 2 + W ** 2)
    Wc = np.sqrt(dc ** 2 + W ** 2)
    Ps = np.pi * Ws / (2 * W)
    Pc = np.pi * Wc / (2 * W)
    return W ** 2 / (2 * Wc ** 3 * Ws ** 2) * (
        -np.sin(Ps / 2) ** 2 * Wc * (
            -d ** 2 - W ** 2 - 2 * d * dc - 3 * dc ** 2 + np.cos(Pc) * (ds - W) * (ds + W)
            + 2 * ds * (2 * np.cos(phi_m) * np.sin(Pc / 2) ** 2 * dc + np.sin(Pc) * np.sin(phi_m) * Wc))
        + np.sin(Pc / 2) * np.sin(Ps) * (
            np.cos(phi_m - np.pi * Wc / (4 * W)) * Wc * (Wc - dc)
            + np.cos(phi_m + np.pi * Wc / (4 * W)) * (W ** 2 + dc * (dc + Wc))) * Ws
        + 2 * np.cos(Ps / 2) ** 2 * np.sin(Pc / 2) ** 2 * Wc * Ws ** 2)


def prob_equal_detuning(t, delta_s, phi, rabi):
    """Pr(1) when both fields share the same detuning (``delta = 0``)."""
    ds = np.asarray(delta_s, dtype=float)
    W = float(rabi)
    Ws = np.sqrt(ds ** 2 + W ** 2)
    return W ** 2 * np.sin(t * Ws / 4) ** 2 * (
        4 * W ** 2 * np.cos(phi / 2) ** 2 * np.cos(t * Ws / 4) ** 2
        + 2 * (1 + np.cos(phi) * np.cos(t * Ws / 2)) * ds ** 2
        - 2 * np.sin(phi) * np.sin(t * Ws / 2) * ds * Ws) / Ws ** 4


def prob_resonant(t, phi, rabi):
    """Pr(1) when both fields are on resonance."""
    return np.sin(rabi * t / 2) ** 2 * np.cos(np.asarray(phi) / 2) ** 2


def ramsey_prob(phi):
    """Resonant fields and ``t = pi/rabi``: the Ramsey fringe ``cos^2(phi/2)``."""
    return np.cos(np.asarray(phi) / 2) ** 2


def prob_equal_detuning_pi(delta_s, phi, rabi):
    """Pr(1) for equal detunings at ``t = pi/rabi``."""
    ds = np.asarray(delta_s, dtype=float)
    W = float(rabi)
    Ws = np.sqrt(ds ** 2 + W ** 2)
    Ps = np.pi * Ws / (2 * W)
    return W ** 2 * np.sin(Ps / 2) ** 2 * (
        2 * ds ** 2 + W ** 2 + W ** 2 * np.cos(phi)
        + np.cos(Ps) * (W ** 2 + (2 * ds ** 2 + W ** 2) * np.cos(phi))
        - 2 * ds * Ws * np.sin(Ps) * np.sin(phi)) / Ws ** 4


def prob_control_resonant_pi(delta_s, phi_m, rabi):
    """Pr(1) for a resonant control at ``t = pi/rabi``, in terms of ``phi_m``."""
    ds = np.asarray(delta_s, dtype=float)
    W = float(rabi)
    Ws = np.sqrt(ds ** 2 + W ** 2)
    return 0.5 * (1 - 2 * ds * W * np.sin(phi_m) * np.sin(np.pi * Ws / (4 * W)) ** 2 / Ws ** 2
                  + W * np.cos(phi_m) * np.sin(np.pi * Ws / (2 * W)) / Ws)


# --------------------------------------------------------------------------
# Numerical reference: lab-frame Schroedinger equation
# --------------------------------------------------------------------------

@dataclass
class NumericResult:
    """Outcome of :func:`evolve_numeric`."""

    state: StateVector
    drift: float = 0.0
    nfev: int = 0
    segments: int = 0
    notes: list = field(default_factory=list)


def lab_hamiltonian(t: float, omega0: float, fld: Optional[FieldParams]) -> np.ndarray:
    """Lab-frame Hamiltonian at time ``t`` (rad/s units)."""
    h = 0.5 * omega0 * SIGMA_Z
    if fld is not None:
        a = fld.carrier * t + fld.initial_phase
        h = h + 0.5 * fld.rabi * (np.cos(a) * SIGMA_X + np.sin(a) * SIGMA_Y)
    return h


def _rhs(omega0, fld):
    half0 = 0.5 * omega0
    if fld is None:
        def f(t, y):
            c0 = y[0] + 1j * y[1]
            c1 = y[2] + 1j * y[3]
            d0 = -1j * half0 * c0
            d1 = 1j * half0 * c1
            return [d0.real, d0.imag, d1.real, d1.imag]
        return f
    hr = 0.5 * fld.rabi
    w, p = fld.carrier, fld.initial_phase

    def f(t, y):
        c0 = y[0] + 1j * y[1]
        c1 = y[2] + 1j * y[3]
        e = hr * complex(math.cos(w * t + p), math.sin(w * t + p))
        # -i H psi with H = [[w0/2, hr e^-ia], [hr e^ia, -w0/2]]
        d0 = -1j * (half0 * c0 + e.conjugate() * c1)
        d1 = -1j * (e * c0 - half0 * c1)
        return [d0.real, d0.imag, d1.real, d1.imag]
    return f


def evolve_numeric(state: StateVector, segments: Sequence[PulseSegment], omega0: float,
                   tol: float = 1e-10, t0: float = 0.0) -> NumericResult:
    """Integrate the lab-frame Schroedinger equation over a piecewise schedule.

    Segments are applied back to back starting at ``t0``.  Each field uses its
    lab phase ``carrier * t + initial_phase`` with absolute time ``t``.  The
    integrator is an adaptive 8th-order Runge-Kutta scheme (DOP853) with
    relative tolerance ``tol``; the norm is restored after each segment and
    the accumulated correction is reported as ``drift``.

    Raises
    ------
    IntegrationError
        If the step size collapses or the solver otherwise fails.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if state.frame is not Frame.LAB:
        raise ValueError("numeric integration works on lab-frame states")
    state.check_normalized()
    y = np.array([state.amplitudes[0].real, state.amplitudes[0].imag,
                  state.amplitudes[1].real, state.amplitudes[1].imag])
    t = float(t0)
    drift = 0.0
    nfev = 0
    for seg in segments:
        if seg.duration == 0:
            continue
        sol = solve_ivp(_rhs(omega0, seg.field), (t, t + seg.duration), y, method="DOP853",
                        rtol=tol, atol=tol * 1e-2)
        if not sol.success:
            raise IntegrationError(sol.message)
        nfev += sol.nfev
        y = sol.y[:, -1]
        nrm = float(np.sqrt(np.sum(y * y)))
        if abs(nrm - 1.0) > 1e-13:
            drift += abs(nrm - 1.0)
            y = y / nrm
        t += seg.duration
    amps = np.array([y[0] + 1j * y[1], y[2] + 1j * y[3]])
    return NumericResult(StateVector(amps, Frame.LAB, t), drift, nfev, len(segments))


def sequential_schedule(t: float, delta_s: float, delta_c: float, phi: float, rabi: float,
                        omega0: float) -> list:
    """Lab-frame schedule of a control half-pulse followed by a signal half-pulse."""
    control = FieldParams(rabi, omega0 + delta_c, 0.0, "control")
    signal = FieldParams(rabi, omega0 + delta_s, phi, "signal")
    return [PulseSegment(control, 0.5 * t, 0.0),
            PulseSegment(signal, 0.5 * t, phase_update(phi, delta_s - delta_c, 0.5 * t))]


def prob_excited_numeric(t, delta_s, delta_c, phi, rabi, omega0=None, tol=1e-10) -> float:
    """Pr(1) of the sequential protocol from direct lab-frame integration."""
    if omega0 is None:
        omega0 = 10.0 * rabi
    res = evolve_numeric(StateVector.ground(), sequential_schedule(t, delta_s, delta_c, phi, rabi, omega0),
                         omega0, tol)
    return res.state.prob_excited
