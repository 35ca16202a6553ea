"""Phase estimation from a single population readout and its error model.

The signal phase is read out with two adjoined pi/2 pulses (total time
``t = pi/rabi``).  On resonance the excitation probability is the Ramsey
fringe ``cos^2(phi/2)`` and the estimator ``arccos(2 P - 1)`` inverts it.
Off resonance the fringe loses contrast and shifts, which shows up as an
increased statistical error and a bias.

Two detuning configurations are supported throughout:

* ``control_resonant=False``: both fields share the detuning ``delta_s``;
* ``control_resonant=True``: the control is resonant and only the signal is
  detuned.  Phases are then the phase at the mid-point of the sequence.

For the noise model, ``sigma_sn`` is used as the variance of the readout noise
on one measured probability.  With ``sigma_sn = 1/8`` this matches the
phase-averaged projection-noise variance ``<P(1-P)> = 1/8`` of the resonant
fringe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spin import sequential_fringe

PROB_CLAMP_TOL = 1e-9

#: Returned in place of an error estimate where the fringe has zero slope.
UNIDENTIFIABLE = math.inf


@dataclass(frozen=True)
class NoiseModel:
    """Readout noise.

    Attributes
    ----------
    kind : {"projection", "shot"}
        Quantum projection noise (Bernoulli outcomes) or a Gaussian readout
        noise on the measured probability.
    sigma_sn : float, optional
        Variance of the Gaussian readout noise per measured probability;
        required for ``kind="shot"``.
    """

    kind: str = "projection"
    sigma_sn: float | None = None

    def __post_init__(self):
        if self.kind not in ("projection", "shot"):
            raise ValueError(f"noise kind must be 'projection' or 'shot', got {self.kind!r}")
        if self.kind == "shot":
            if self.sigma_sn is None or not self.sigma_sn > 0:
                raise ValueError("shot noise requires sigma_sn > 0")


PROJECTION = NoiseModel("projection")


@dataclass(frozen=True)
class PhaseEstimate:
    value: float
    stat_error: float
    sys_error: float


class SystematicError(NamedTuple):
    """Signed systematic error ``sign(x) sqrt(|x|)`` with ``x = phi_hat^2 - phi^2``.

    ``undershoot`` is set when the estimator falls below the true phase, i.e.
    when the square root would be imaginary.
    """

    value: float
    undershoot: bool


def estimate_phase(pr1):
    """Arccos estimator ``arccos(2 pr1 - 1)`` with result in ``[0, pi]``.

    Values up to ``1e-9`` outside ``[0, 1]`` (finite-shot averages) are
    clamped; anything further out raises ``ValueError``.
    """
    p = np.asarray(pr1, dtype=float)
    if np.any(p < -PROB_CLAMP_TOL) or np.any(p > 1 + PROB_CLAMP_TOL) or np.any(~np.isfinite(p)):
        raise ValueError(f"probability out of range: {pr1!r}")
    out = np.arccos(np.clip(2.0 * p - 1.0, -1.0, 1.0))
    return float(out) if out.ndim == 0 else out


def fringe(delta_s, rabi, control_resonant=False):
    """Harmonic coefficients ``(a, b, c)`` of the readout fringe at ``t = pi/rabi``.

    ``P(phi) = a + b cos(phi) + c sin(phi)`` exactly.
    """
    dc = 0.0 if control_resonant else delta_s
    return sequential_fringe(math.pi / rabi, delta_s, dc, rabi)


def fringe_prob(delta_s, phi, rabi, control_resonant=False):
    a, b, c = fringe(delta_s, rabi, control_resonant)
    return a + b * np.cos(phi) + c * np.sin(phi)


def fringe_slope(delta_s, phi, rabi, control_resonant=False):
    """Analytic derivative ``dP/dphi`` of the readout fringe."""
    a, b, c = fringe(delta_s, rabi, control_resonant)
    return -b * np.sin(phi) + c * np.cos(phi)


def phase_fisher_information(delta_s, phi, rabi, control_resonant=False):
    """Bernoulli Fisher information about ``phi`` of one readout."""
    p = fringe_prob(delta_s, phi, rabi, control_resonant)
    dp = fringe_slope(delta_s, phi, rabi, control_resonant)
    with np.errstate(divide="ignore", invalid="ignore"):
        return dp * dp / (p * (1.0 - p))


def stat_error_phase(delta_s, phi, rabi, noise: NoiseModel = PROJECTION, control_resonant=False):
    """Minimum statistical error of one phase readout.

    Projection noise gives ``sqrt(P(1-P)) / |dP/dphi|``; Gaussian readout
    noise gives ``sqrt(sigma_sn) / |dP/dphi|``.  Points where the slope
    vanishes return :data:`UNIDENTIFIABLE`.
    """
    p = fringe_prob(delta_s, phi, rabi, control_resonant)
    dp = np.abs(fringe_slope(delta_s, phi, rabi, control_resonant))
    num = np.sqrt(np.clip(p * (1.0 - p), 0.0, None)) if noise.kind == "projection" else math.sqrt(noise.sigma_sn)
    num = np.broadcast_to(num, np.shape(dp))
    tiny = 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((dp < tiny) | ((num < tiny) & (noise.kind == "projection") & (dp < 1e-7)),
                       UNIDENTIFIABLE, num / dp)
    return float(out) if np.ndim(out) == 0 else out


def stat_error_series(delta_s, phi, rabi):
    """Small-detuning expansion of the projection-noise error (equal detunings)."""
    return 1.0 + (math.pi - 4) ** 2 * delta_s ** 4 / (32 * rabi ** 4 * np.sin(np.asarray(phi) / 2) ** 2)


def stat_error_series_control_resonant(delta_s, phi_m, rabi):
    """Small-detuning expansion of the projection-noise error (resonant control)."""
    return 1.0 + (math.pi - 4) ** 2 * delta_s ** 4 / (32 * rabi ** 4 * np.sin(np.asarray(phi_m)) ** 2)


def stat_error_midfringe_average(delta_s, rabi):
    """The error quoted for operation near ``phi = pi/2``, averaged over the fringe extremes.

    Equal to :func:`stat_error_series` evaluated at ``phi = pi/2``.
    """
    return 1.0 + (math.pi - 4) ** 2 * delta_s ** 4 / (16 * rabi ** 4)


def avg_stat_error_shot(delta_s, rabi, sigma_sn):
    """Phase-averaged error under Gaussian readout noise (closed form).

    The average is over the information: ``sqrt(sigma_sn / <(dP/dphi)^2>)``
    with ``phi`` uniform on ``(0, 2 pi)``.  Equal detunings.
    """
    if not sigma_sn > 0:
        raise ValueError("sigma_sn must be positive")
    W = float(rabi)
    Ws = math.hypot(delta_s, W)
    Ps = math.pi * Ws / (2 * W)
    den = W ** 2 * abs(2 * delta_s ** 2 + W ** 2 + W ** 2 * math.cos(Ps)) * math.sin(Ps / 2) ** 2
    return math.sqrt(2 * sigma_sn) * Ws ** 4 / den


def avg_stat_error_shot_quadrature(delta_s, rabi, sigma_sn, n=2048, control_resonant=False):
    """Numerical phase average on an ``n``-point midpoint grid."""
    phi = (np.arange(n) + 0.5) * (2 * math.pi / n)
    dp = fringe_slope(delta_s, phi, rabi, control_resonant)
    return math.sqrt(sigma_sn / np.mean(dp * dp))


def avg_stat_error_shot_series(delta_s, rabi, sigma_sn):
    return (2 * math.sqrt(2 * sigma_sn)
            + (math.pi - 4) ** 2 * delta_s ** 4 * math.sqrt(sigma_sn) / (4 * math.sqrt(2) * rabi ** 4))


def estimator_bias(delta_s, phi, rabi, control_resonant=False):
    """``phi_hat - phi`` for a noiseless readout."""
    return estimate_phase(np.clip(fringe_prob(delta_s, phi, rabi, control_resonant), 0.0, 1.0)) - phi


def sys_error_phase(delta_s, phi, rabi, control_resonant=False) -> SystematicError:
    """Systematic error ``sqrt(phi_hat^2 - phi^2)`` of the arccos estimator.

    ``phi`` is taken in ``(0, pi)`` where the estimator is single valued.
    When the estimate falls short of ``phi`` the value is returned as a
    negative magnitude and ``undershoot`` is set.
    """
    phi_hat = estimate_phase(min(max(float(fringe_prob(delta_s, phi, rabi, control_resonant)), 0.0), 1.0))
    x = phi_hat ** 2 - phi ** 2
    return SystematicError(math.copysign(math.sqrt(abs(x)), x), x < 0)


def sys_error_series(delta_s, phi, rabi):
    """Leading small-detuning term quoted for equal detunings, ``2 phi delta_s / rabi``."""
    return 2 * phi * delta_s / rabi


def sys_error_series_control_resonant(delta_s, phi_m, rabi):
    """Quoted second-order expansion for a resonant control."""
    x = delta_s / rabi
    return 2 * phi_m * x - 2 * phi_m ** 2 * x ** 2


def phase_estimate(pr1, delta_s, phi, rabi, noise: NoiseModel = PROJECTION,
                   control_resonant=False) -> PhaseEstimate:
    """Estimate with the error bars expected at the operating point."""
    value = estimate_phase(pr1)
    stat = stat_error_phase(delta_s, phi, rabi, noise, control_resonant)
    sys = abs(sys_error_phase(delta_s, phi, rabi, control_resonant).value)
    return PhaseEstimate(value, float(stat), sys)


# --------------------------------------------------------------------------
# Resonance maximises the phase information
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DominanceResult:
    holds: bool
    equal: bool
    fi_resonant: float
    fi_detuned: float


def dominance_rhs(delta_s, phi, rabi):
    """Closed-form ratio ``FI(delta_s) / FI(0)`` for a resonant control.

    ``phi`` is the mid-sequence phase.  Resonant information is 1, so the
    dominance condition reads ``1 > dominance_rhs``.
    """
    W = float(rabi)
    d = np.asarray(delta_s, dtype=float)
    Ws = np.sqrt(d ** 2 + W ** 2)
    s4 = np.sin(np.pi * Ws / (4 * W))
    c4 = np.cos(np.pi * Ws / (4 * W))
    s2 = np.sin(np.pi * Ws / (2 * W))
    cross = 4 * d * Ws * c4 * np.sin(2 * phi) * s4 ** 3
    num = W ** 2 * (cross + 4 * d ** 2 * np.cos(phi) ** 2 * s4 ** 4 + Ws ** 2 * np.sin(phi) ** 2 * s2 ** 2)
    den = Ws ** 4 + W ** 2 * (cross - 4 * d ** 2 * np.sin(phi) ** 2 * s4 ** 4 - Ws ** 2 * np.cos(phi) ** 2 * s2 ** 2)
    return num / den


def sensitivity_dominance_check(delta_s, phi, rabi, control_resonant=True, tol=1e-12) -> DominanceResult:
    """Compare the phase information at zero and at ``delta_s`` detuning."""
    f0 = float(phase_fisher_information(0.0, phi, rabi, control_resonant))
    f1 = float(phase_fisher_information(delta_s, phi, rabi, control_resonant))
    equal = abs(f0 - f1) <= tol * max(1.0, abs(f0))
    return DominanceResult(bool(f0 > f1 or equal), bool(equal), f0, f1)


def dominance_sweep(deltas, phis, rabi, control_resonant=True):
    """Grid search for points where detuning increases the phase information.

    Returns a list of ``(delta_s, phi, fi_resonant, fi_detuned)`` counterexamples.
    """
    d, p = np.meshgrid(np.asarray(deltas, float), np.asarray(phis, float), indexing="ij")
    f0 = phase_fisher_information(0.0, p, rabi, control_resonant)
    f1 = phase_fisher_information(d, p, rabi, control_resonant)
    bad = ~(f0 > f1)
    return [(float(a), float(b), float(x), float(y))
            for a, b, x, y in zip(d[bad], p[bad], f0[bad], f1[bad])]
