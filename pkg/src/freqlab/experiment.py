"""Repeated phase readout of a single spin: configuration, ground truth and records.

A record consists of ``R`` measurements spaced by ``tau``.  Each measurement
re-initialises the spin in ``|0>``, applies a control half-pulse and then a
signal half-pulse (each of duration ``t/2``) and reads the population.  The
signal precesses against the control at ``delta = omega_s - omega_c``, so the
relative phase at the start of measurement ``n`` is ``phi + (n - 1) delta tau``
and the phase at the middle of the sequence is::

    phi_m(n) = phi + (n - 1) delta tau + delta t / 2

The ground truth evaluates the exact sequential probability at that phase.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .phase import NoiseModel
from .spin import Detunings, TWO_PI, prob_excited_seq, sequential_fringe

#: Tolerance used when converting a duration into an integer number of points.
_FLOOR_EPS = 1e-9


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol parameters.  Frequencies in rad/s, times in s.

    Attributes
    ----------
    omega_s, omega_c : float
        Signal and control carriers.
    rabi : float
        Rabi frequency of both fields.
    omega0 : float, optional
        Atomic transition frequency; defaults to ``omega_c`` (resonant control).
    t : float, optional
        Interaction time per measurement; defaults to ``t_pi = pi / rabi``.
    tau : float, optional
        Period between measurement starts; defaults to ``t`` (instantaneous
        readout).  Must satisfy ``tau >= t``.
    duration, points : optional
        Record length, either as a total time (``R = floor(T / tau)``) or a
        number of points.  ``points`` wins when both are given.
    initial_phase : float
        Signal phase relative to the control at the start of the record.
    shots_per_point : int
        Repetitions averaged into each record entry.
    noise : NoiseModel
    clock_fractional_error : float
        Fractional error of the time base.  The true period is
        ``tau * (1 + clock_fractional_error)`` while the records carry the
        nominal timestamps.
    seed : int
    sign_hint : {-1, 1}, optional
        Which side of the control the signal lies on.  Population data do not
        resolve the sign of ``delta``; defaults to the sign of the configured
        offset.
    """

    omega_s: float
    omega_c: float
    rabi: float
    omega0: float | None = None
    t: float | None = None
    tau: float | None = None
    duration: float | None = None
    points: int | None = None
    initial_phase: float = 0.0
    shots_per_point: int = 1
    noise: NoiseModel = field(default_factory=NoiseModel)
    clock_fractional_error: float = 0.0
    seed: int = 0
    sign_hint: int | None = None

    def __post_init__(self):
        for name in ("omega_s", "omega_c", "rabi"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ConfigError(name, f"must be a finite number, got {v!r}")
        if not self.rabi > 0:
            raise ConfigError("rabi", "must be positive")
        if self.omega0 is not None and not self.omega0 > 0:
            raise ConfigError("omega0", "must be positive")
        if self.t is not None and not self.t > 0:
            raise ConfigError("t", "must be positive")
        if self.tau is not None and not self.tau >= self.interaction_time * (1 - 1e-12):
            raise ConfigError("tau", f"must be >= interaction time {self.interaction_time!r}")
        if self.duration is not None and not self.duration > 0:
            raise ConfigError("duration", "must be positive")
        if self.points is not None and (int(self.points) != self.points or self.points < 0):
            raise ConfigError("points", "must be a non-negative integer")
        if self.duration is None and self.points is None:
            raise ConfigError("duration", "give a duration or a number of points")
        if self.R < 1:
            raise ConfigError("points", "record must contain at least one point (R = 0)")
        if int(self.shots_per_point) != self.shots_per_point or self.shots_per_point < 1:
            raise ConfigError("shots_per_point", "must be a positive integer")
        if not (math.isfinite(self.clock_fractional_error) and abs(self.clock_fractional_error) < 0.1):
            raise ConfigError("clock_fractional_error", "must be a small finite number")
        if self.sign_hint not in (None, -1, 1):
            raise ConfigError("sign_hint", "must be -1 or 1")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ConfigError("seed", "must be a 64-bit unsigned integer")

    # derived quantities -------------------------------------------------
    @property
    def larmor(self) -> float:
        return self.omega_c if self.omega0 is None else self.omega0

    @property
    def detunings(self) -> Detunings:
        return Detunings.from_frequencies(self.larmor, self.omega_s, self.omega_c, self.rabi)

    @property
    def delta(self) -> float:
        return self.omega_s - self.omega_c

    @property
    def t_pi(self) -> float:
        return math.pi / self.rabi

    @property
    def interaction_time(self) -> float:
        return self.t_pi if self.t is None else self.t

    @property
    def period(self) -> float:
        return self.interaction_time if self.tau is None else self.tau

    @property
    def t_ro(self) -> float:
        return self.period - self.interaction_time

    @property
    def R(self) -> int:
        if self.points is not None:
            return int(self.points)
        return int(math.floor(self.duration / self.period + _FLOOR_EPS))

    @property
    def total_time(self) -> float:
        return self.R * self.period

    @property
    def sign(self) -> int:
        if self.sign_hint is not None:
            return self.sign_hint
        return -1 if self.delta < 0 else 1

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    # serialisation --------------------------------------------------------
    def to_dict(self, units: str = "hz") -> dict:
        """Plain dictionary in the same schema accepted by :func:`config_from_dict`."""
        conv = (1 / TWO_PI) if units == "hz" else 1.0
        d = {
            "units": units,
            "signal_frequency": self.omega_s * conv,
            "control_frequency": self.omega_c * conv,
            "rabi_frequency": self.rabi * conv,
            "initial_phase": self.initial_phase,
            "shots_per_point": int(self.shots_per_point),
            "clock_fractional_error": self.clock_fractional_error,
            "seed": int(self.seed),
            "noise": {k: v for k, v in asdict(self.noise).items() if v is not None},
        }
        if self.omega0 is not None:
            d["larmor_frequency"] = self.omega0 * conv
        for key, val in (("interaction_time", self.t), ("period", self.tau),
                         ("duration", self.duration), ("points", self.points),
                         ("sign_hint", self.sign_hint)):
            if val is not None:
                d[key] = val
        return d


_CONFIG_KEYS = {
    "units", "signal_frequency", "control_frequency", "rabi_frequency", "larmor_frequency",
    "interaction_time", "period", "duration", "points", "initial_phase", "shots_per_point",
    "clock_fractional_error", "seed", "sign_hint", "noise",
}


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a configuration from a parsed file.

    Frequencies are read in the unit named by the mandatory ``units`` key
    (``"hz"`` or ``"rad/s"``); tables unrelated to the experiment (``fit``,
    ``sweep``, ...) are ignored.
    """
    units = d.get("units")
    if units is None:
        raise ConfigError("units", "missing; set units = \"hz\" or \"rad/s\"")
    units = str(units).lower()
    if units not in ("hz", "rad/s"):
        raise ConfigError("units", f"must be 'hz' or 'rad/s', got {units!r}")
    conv = TWO_PI if units == "hz" else 1.0
    for req in ("signal_frequency", "control_frequency", "rabi_frequency"):
        if req not in d:
            raise ConfigError(req, "missing")

    def num(key, cast=float):
        v = d.get(key)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(key, f"must be a number, got {v!r}")
        return cast(v)

    noise_d = d.get("noise", {}) or {}
    if not isinstance(noise_d, dict):
        raise ConfigError("noise", "must be a table")
    try:
        noise = NoiseModel(noise_d.get("kind", "projection"), noise_d.get("sigma_sn"))
    except ValueError as exc:
        raise ConfigError("noise", str(exc)) from None
    larmor = num("larmor_frequency")
    return ExperimentConfig(
        omega_s=num("signal_frequency") * conv,
        omega_c=num("control_frequency") * conv,
        rabi=num("rabi_frequency") * conv,
        omega0=None if larmor is None else larmor * conv,
        t=num("interaction_time"),
        tau=num("period"),
        duration=num("duration"),
        points=num("points", int),
        initial_phase=num("initial_phase") or 0.0,
        shots_per_point=1 if d.get("shots_per_point") is None else num("shots_per_point", int),
        noise=noise,
        clock_fractional_error=num("clock_fractional_error") or 0.0,
        seed=num("seed", int) or 0,
        sign_hint=num("sign_hint", int),
    )


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

def electron_config(duration: float = 0.1, **kw) -> ExperimentConfig:
    """Electron-spin settings: 1509224897.8 Hz signal, 1509246000.0 Hz control.

    The period is 0.7520416666666667 us; a 40 MHz Rabi frequency
    (``t_pi = 12.5 ns``) is assumed and the control is resonant.
    """
    base = dict(omega_s=TWO_PI * 1509224897.8, omega_c=TWO_PI * 1509246000.0,
                rabi=TWO_PI * 40e6, tau=0.7520416666666667e-6, duration=duration)
    base.update(kw)
    return ExperimentConfig(**base)


def nuclear_config(duration: float = 1.0, **kw) -> ExperimentConfig:
    """Nuclear-spin settings: 5090821.4 Hz signal, 5090800.0 Hz control.

    The period is 14.33958333333333 us and ``t_pi = 5.25 us``.
    """
    base = dict(omega_s=TWO_PI * 5090821.4, omega_c=TWO_PI * 5090800.0,
                rabi=math.pi / 5.25e-6, tau=14.33958333333333e-6, duration=duration)
    base.update(kw)
    return ExperimentConfig(**base)


PRESETS = {"electron": electron_config, "nuclear": nuclear_config}


# --------------------------------------------------------------------------
# Ground truth and approximations
# --------------------------------------------------------------------------

def mid_phase(n, config: ExperimentConfig, true_time: bool = True):
    """Signal phase at the middle of measurement ``n`` (1-based)."""
    n = np.asarray(n, dtype=float)
    tau = config.period * (1 + config.clock_fractional_error) if true_time else config.period
    return config.initial_phase + (n - 1) * config.delta * tau + 0.5 * config.delta * config.interaction_time


def true_probability(n, config: ExperimentConfig):
    """Exact Pr(1) of measurement ``n`` (1-based), vectorised over ``n``."""
    if np.any(np.asarray(n) < 1):
        raise ValueError("measurement index starts at 1")
    det = config.detunings
    a, b, c = sequential_fringe(config.interaction_time, det.delta_s, det.delta_c, config.rabi)
    pm = mid_phase(n, config)
    out = np.clip(a + b * np.cos(pm) + c * np.sin(pm), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def true_probability_direct(n, config: ExperimentConfig):
    """Same as :func:`true_probability` via the full closed-form expression."""
    det = config.detunings
    tau = config.period * (1 + config.clock_fractional_error)
    phi_n = config.initial_phase + (np.asarray(n, dtype=float) - 1) * config.delta * tau
    return prob_excited_seq(config.interaction_time, det.delta_s, det.delta_c, phi_n, config.rabi)


def approx_probability_main(n, config: ExperimentConfig):
    """Resonant-interaction approximation with a half-rate phase index.

    ``sin(rabi t / 2) cos^2(phi_m / 2)`` with
    ``phi_m = phi + (n - 1) delta tau / 2 + delta t / 2``.
    """
    n = np.asarray(n, dtype=float)
    d, t = config.delta, config.interaction_time
    pm = config.initial_phase + (n - 1) * d * config.period / 2 + d * t / 2
    return np.sin(config.rabi * t / 2) * np.cos(pm / 2) ** 2


def approx_probability_si(n, config: ExperimentConfig):
    """Approximation ``cos^2(phi/2 + n tau delta/4) sin^2(t rabi/2)``."""
    n = np.asarray(n, dtype=float)
    return (np.cos(config.initial_phase / 2 + n * config.period * config.delta / 4) ** 2
            * np.sin(config.interaction_time * config.rabi / 2) ** 2)


def approx_probability_resonant(n, config: ExperimentConfig):
    """Resonant-interaction approximation with the full precession rate.

    ``sin^2(rabi t / 2) cos^2(phi_m(n) / 2)`` using the exact mid-point phase.
    Deviates from the ground truth only through the fields' detuning from
    the atom during the pulses.
    """
    return np.sin(config.rabi * config.interaction_time / 2) ** 2 * np.cos(mid_phase(n, config) / 2) ** 2


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------

def trial_rng(seed: int, trial: int | None = None) -> np.random.Generator:
    """Independent random stream for ``(seed, trial)``."""
    entropy = [int(seed)] if trial is None else [int(seed), int(trial)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass
class MeasurementDataset:
    """Time-stamped record.  ``timestamps[i] = n[i] * tau`` (nominal clock)."""

    n: np.ndarray
    timestamps: np.ndarray
    outcomes: np.ndarray
    config: ExperimentConfig
    trial: int | None = None

    def __post_init__(self):
        if len(self.n) == 0:
            raise EmptyDatasetError("dataset has no records")
        if not (len(self.n) == len(self.timestamps) == len(self.outcomes)):
            raise ValueError("column lengths differ")

    def __len__(self):
        return len(self.n)

    @property
    def period(self) -> float:
        """Sampling period inferred from the timestamps; raises if not uniform."""
        if len(self.timestamps) < 2:
            return self.config.period
        dt = np.diff(self.timestamps)
        tau = float(self.timestamps[-1] - self.timestamps[0]) / (len(self.timestamps) - 1)
        if not (np.all(dt > 0) and np.allclose(dt, tau, rtol=1e-6, atol=0)):
            raise ValueError("timestamps are not uniformly spaced")
        return tau

    def to_csv(self, path) -> Path:
        """Write ``n,timestamp_s,outcome`` rows and a JSON sidecar with the config."""
        path = Path(path)
        if np.issubdtype(self.outcomes.dtype, np.integer):
            outs = [str(int(x)) for x in self.outcomes]
        else:
            outs = [repr(float(x)) for x in self.outcomes]
        lines = ["n,timestamp_s,outcome"]
        lines += [f"{int(k)},{float(ts)!r},{o}" for k, ts, o in zip(self.n, self.timestamps, outs)]
        path.write_text("\n".join(lines) + "\n")
        meta = {"config": self.config.to_dict("hz"), "trial": self.trial, "records": len(self)}
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "MeasurementDataset":
        path = Path(path)
        meta = json.loads(sidecar_path(path).read_text())
        config = config_from_dict(meta["config"])
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "n,timestamp_s,outcome":
                raise ValueError(f"unexpected header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        if data.shape[0] == 0:
            raise EmptyDatasetError("dataset has no records")
        outcomes = data[:, 2]
        if np.all((outcomes == 0) | (outcomes == 1)) and config.shots_per_point == 1 \
                and config.noise.kind == "projection":
            outcomes = outcomes.astype(np.int64)
        return cls(data[:, 0].astype(np.int64), data[:, 1], outcomes, config, meta.get("trial"))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def simulate_timetrace(config: ExperimentConfig, trial: int | None = None,
                       rng: np.random.Generator | None = None) -> MeasurementDataset:
    """Draw one record.

    Projection noise: each entry is the mean of ``shots_per_point`` Bernoulli
    draws (integers 0/1 for single shots).  Gaussian readout noise: the true
    probability plus noise of variance ``sigma_sn / shots_per_point``, clipped
    to ``[0, 1]``.  The stream is fixed by ``(config.seed, trial)``.
    """
    R = config.R
    if R < 1:
        raise EmptyDatasetError("R = 0")
    if rng is None:
        rng = trial_rng(config.seed, trial)
    n = np.arange(1, R + 1, dtype=np.int64)
    p = true_probability(n, config)
    shots = int(config.shots_per_point)
    if config.noise.kind == "projection":
        k = rng.binomial(shots, p)
        outcomes = k.astype(np.int64) if shots == 1 else k / shots
    else:
        sd = math.sqrt(config.noise.sigma_sn / shots)
        outcomes = np.clip(p + sd * rng.standard_normal(R), 0.0, 1.0)
    timestamps = n * config.period
    return MeasurementDataset(n, timestamps, outcomes, config, trial)


def expected_record(config: ExperimentConfig) -> MeasurementDataset:
    """Noise-free record holding the true probabilities."""
    n = np.arange(1, config.R + 1, dtype=np.int64)
    return MeasurementDataset(n, n * config.period, true_probability(n, config), config, None)
