"""Quantum and classical Fisher information and the resulting variance bounds.

Conventions
-----------
* Phases in rad, frequencies in rad/s, times in s.  A frequency information
  has units of s^2 / rad^2 and its inverse is a variance in (rad/s)^2.
* ``t_pi = pi / rabi`` is the duration of a population inversion.
* Aggregation over a data set adds informations (independent measurements);
  sums use :func:`math.fsum` so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

#: Penalty on the variance when phase and frequency are estimated jointly
#: from one two-pulse measurement (reported, not derived).
TWO_PARAMETER_FACTOR = 2.0


@dataclass(frozen=True)
class FisherBound:
    """Cramer-Rao bound attached to a Fisher information value.

    ``bound_type`` is ``"strict"`` because the bounds assume perfect,
    instantaneous readout, which no real measurement attains.
    """

    parameter: str
    information: float
    context: dict = field(default_factory=dict)
    bound_type: str = "strict"

    def __post_init__(self):
        if self.parameter not in ("phase", "frequency", "detuning"):
            raise ValueError(f"unknown parameter {self.parameter!r}")
        if not self.information >= 0:
            raise ValueError("information must be non-negative")

    @property
    def variance_bound(self) -> float:
        return math.inf if self.information == 0 else 1.0 / self.information

    @property
    def uncertainty_bound(self) -> float:
        return math.sqrt(self.variance_bound)


@dataclass(frozen=True)
class Schedule:
    """Timing of a repeated measurement.

    ``tau = t + t_ro`` is the period between measurement starts.  With
    ``instantaneous_readout`` the readout time is ignored and ``T = R t``.
    """

    t: float
    t_ro: float
    R: int
    instantaneous_readout: bool = False

    def __post_init__(self):
        if self.t < 0 or self.t_ro < 0:
            raise ValueError("times must be non-negative")
        if self.R < 0:
            raise ValueError("R must be non-negative")

    @property
    def tau(self) -> float:
        return self.t if self.instantaneous_readout else self.t + self.t_ro

    @property
    def T(self) -> float:
        return self.R * self.tau

    @classmethod
    def pi_pulse(cls, rabi: float, R: int, t_ro: float = 0.0) -> "Schedule":
        return cls(math.pi / rabi, t_ro, R, instantaneous_readout=(t_ro == 0.0))


# --------------------------------------------------------------------------
# Quantum Fisher information
# --------------------------------------------------------------------------

def qfi_max_phase(t, rabi):
    """Maximum quantum Fisher information about the signal phase, ``t^2 rabi^2``."""
    return (t * rabi) ** 2


def qfi_max_freq(t, rabi, integrate_gap=False):
    """Maximum quantum Fisher information about the signal frequency.

    With the generator's eigenvalue gap evaluated at the final time, as is
    customary, the result is ``t^4 rabi^2``.  Integrating the time-dependent
    gap ``rabi * s`` over ``s in [0, t]`` instead gives ``t^4 rabi^2 / 4``;
    select it with ``integrate_gap=True``.
    """
    q = t ** 4 * rabi ** 2
    return q / 4 if integrate_gap else q


def phase_generator(s, rabi, carrier, phi):
    """``dH/dphi`` of the lab-frame drive at time ``s``."""
    a = phi + carrier * s
    return 0.5j * rabi * np.array([[0, -np.exp(-1j * a)], [np.exp(1j * a), 0]])


def frequency_generator(s, rabi, carrier, phi, t_ref=None):
    """``dH/domega`` of the lab-frame drive.

    The derivative carries a factor of time; by default that is the running
    time ``s``, or a fixed ``t_ref`` when given.
    """
    scale = s if t_ref is None else t_ref
    return scale * phase_generator(s, rabi, carrier, phi)


def qfi_from_generator(generator: Callable[[float], np.ndarray], t: float, nodes: int = 64) -> float:
    """``(integral_0^t (lambda_max - lambda_min) ds)^2`` via Gauss-Legendre quadrature."""
    if t == 0:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * t * (x + 1)
    gaps = []
    for si in s:
        ev = np.linalg.eigvalsh(generator(si))
        gaps.append(ev[-1] - ev[0])
    return float((0.5 * t * np.dot(w, gaps)) ** 2)


# --------------------------------------------------------------------------
# Classical Fisher information
# --------------------------------------------------------------------------

def classical_fi(prob: Callable[[float], float], theta: float, dprob: Callable[[float], float] | None = None,
                 mode: str = "analytic", step: float | None = None) -> float:
    """Bernoulli Fisher information ``(dP/dtheta)^2 / (P (1 - P))``.

    Parameters
    ----------
    prob : callable
        ``theta -> Pr(1)``.
    theta : float
        Parameter value.
    dprob : callable, optional
        Analytic derivative, required for ``mode="analytic"``.
    mode : {"analytic", "finite_difference"}
        ``finite_difference`` uses the five-point central stencil (error of
        order ``step^4``) with step ``1e-3 * max(1, |theta|)`` unless
        ``step`` is given.

    Returns ``inf`` when ``P`` is 0 or 1, where the Bernoulli information is
    not defined (any change of ``P`` away from certainty is detectable).
    """
    p = float(prob(theta))
    if mode == "analytic":
        if dprob is None:
            raise ValueError("analytic mode needs dprob")
        dp = float(dprob(theta))
    elif mode == "finite_difference":
        h = step if step is not None else 1e-3 * max(1.0, abs(theta))
        f = lambda k: float(prob(theta + k * h))
        dp = (f(-2) - 8 * f(-1) + 8 * f(1) - f(2)) / (12 * h)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    v = p * (1.0 - p)
    if v <= 0.0:
        return math.inf
    return dp * dp / v


def ramsey_detuning_prob(n, t, delta, phi, rabi):
    """Idealised Pr(1) of the n-th record entry with ``tau = t``.

    ``cos^2(phi/2 + n t delta/4) sin^2(t rabi/2)``.
    """
    return np.cos(phi / 2 + n * t * delta / 4) ** 2 * np.sin(t * rabi / 2) ** 2


def ramsey_detuning_dprob(n, t, delta, phi, rabi):
    """Derivative of :func:`ramsey_detuning_prob` with respect to ``delta``."""
    x = phi / 2 + n * t * delta / 4
    return -(n * t / 4) * np.sin(2 * x) * np.sin(t * rabi / 2) ** 2


def fi_detuning(n, t, delta, phi, rabi):
    """Information about ``delta`` carried by the n-th measurement (``tau = t``).

    Positive by construction; equal to :func:`classical_fi` applied to
    :func:`ramsey_detuning_prob`.
    """
    x = (n * t * delta + 2 * phi) / 4
    sx2 = np.sin(x) ** 2
    sr2 = np.sin(t * rabi / 2) ** 2
    num = n ** 2 * t ** 2 * sx2 * sr2
    # 3 - cos(2x) + 2 cos(x)^2 cos(t rabi), rewritten without cancellation
    den = 4 * np.cos(t * rabi / 2) ** 2 + 4 * sx2 * sr2
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den


def fi_detuning_pi(n, rabi):
    """Per-measurement information at ``t = t_pi``: ``n^2 pi^2 / (4 rabi^2)``."""
    return (n * math.pi / rabi) ** 2 / 4


def fi_detuning_short_time(n, t, rabi):
    """Short-interaction expansion ``n^2 rabi^2 t^4 / 16`` (at ``phi = pi``)."""
    return n ** 2 * rabi ** 2 * t ** 4 / 16


def aggregate_variance(informations) -> float:
    """``1 / sum(FI)`` with compensated summation."""
    total = math.fsum(float(x) for x in np.ravel(informations))
    return math.inf if total == 0 else 1.0 / total


def iid_variance(R, fi) -> float:
    """Variance bound from ``R`` identically distributed measurements."""
    return 1.0 / (R * fi)


# --------------------------------------------------------------------------
# Data-set bounds
# --------------------------------------------------------------------------

def dataset_variance_bound(R, t_pi, spacing=None):
    """Frequency variance bound of an ``R``-point record sampled at ``t_pi``.

    ``24 / (spacing^2 (R + 3 R^2 + 2 R^3))`` with ``spacing = t_pi`` by
    default.  A longer sampling period (readout overhead) can be given as
    ``spacing``; it replaces ``t_pi`` as the phase lever arm per sample.
    """
    if np.any(np.asarray(R) < 1):
        raise ValueError("R must be at least 1")
    s = t_pi if spacing is None else spacing
    R = np.asarray(R, dtype=float)
    out = 24.0 / (s ** 2 * (R + 3 * R ** 2 + 2 * R ** 3))
    return float(out) if out.ndim == 0 else out


def dataset_variance_bound_time(T, t_pi):
    """Same bound in terms of the total time ``T = R t_pi``."""
    T = np.asarray(T, dtype=float)
    out = 24.0 * t_pi / (T * (T + t_pi) * (2 * T + t_pi))
    return float(out) if out.ndim == 0 else out


def dataset_variance_bound_sum(R, t_pi) -> float:
    """Oracle: invert the summed per-measurement informations explicitly."""
    rabi = math.pi / t_pi
    return aggregate_variance([fi_detuning_pi(n, rabi) for n in range(1, int(R) + 1)])


def n_atom_bound(N, R, t_pi, spacing=None):
    """Bound for ``N`` independent atoms each recording ``R`` points."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return dataset_variance_bound(R, t_pi, spacing) / N


def n_atom_bound_time(N, T, t_pi):
    if N < 1:
        raise ValueError("N must be at least 1")
    return dataset_variance_bound_time(T, t_pi) / N


def entangled_variance_bound(N, T, t_pi):
    """Bound for an N-atom entangled probe that rotates ``N`` times faster."""
    tn = t_pi / N
    return 24.0 * t_pi / (N * T * (T + tn) * (2 * T + tn))


def reference_limits(T, N=1) -> dict:
    """Reference frequency uncertainties for total time ``T``.

    The same number serves in rad/s and in Hz output modes: the limits are
    quoted as ``1/T`` in whichever unit the caller reports.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    return {"heisenberg": 1.0 / T, "one_tf_ensemble": 1.0 / T, "heisenberg_N": 1.0 / (N * T)}


def exact_frequency_fim(R, t, tau, contrast=1.0):
    """Fisher matrix for ``(delta, phi)`` of the exact resonant fringe record.

    Measurement ``n`` reads ``phi_m(n) = phi + delta ((n - 1) tau + t/2)`` off
    a full-contrast fringe (one unit of phase information per shot), so the
    information matrix is ``sum_n [a_n^2, a_n; a_n, 1]`` with
    ``a_n = (n - 1) tau + t/2``.
    """
    a = (np.arange(int(R)) * tau + 0.5 * t)
    return contrast * np.array([[math.fsum(a * a), math.fsum(a)], [math.fsum(a), float(R)]])


def exact_frequency_crlb(R, t, tau, phase_known=False) -> float:
    """Variance bound on ``delta`` from :func:`exact_frequency_fim`."""
    F = exact_frequency_fim(R, t, tau)
    if phase_known:
        return 1.0 / F[0, 0]
    if R < 2:
        return math.inf
    return float(np.linalg.inv(F)[0, 0])
