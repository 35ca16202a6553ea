"""Frequency estimation from a measurement record.

Two estimators are provided:

* a periodogram peak refined by fitting the finite-record line shape
  (:func:`fft_power_spectrum` then :func:`sinc_fit`);
* a nonlinear least-squares fit of the exact record model
  (:func:`least_squares_fit`), seeded by the periodogram.

Monte-Carlo helpers run many independently seeded records, optionally on a
thread pool.  Results are collected in trial order, so they do not depend on
the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import fisher
from .experiment import ExperimentConfig, MeasurementDataset, simulate_timetrace
from .spin import TWO_PI, sequential_fringe


class FitError(RuntimeError):
    """A fit did not converge; ``residual`` holds the last residual norm."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass
class Spectrum:
    """One-sided periodogram.

    ``power`` is normalised so that ``power.sum()`` equals the sum of squared
    deviations of the record from its mean.
    """

    freqs_hz: np.ndarray
    power: np.ndarray
    bin_width_hz: float
    n_samples: int
    sum_sq: float
    record: np.ndarray | None = None


@dataclass
class FitResult:
    """Frequency estimate.  All frequencies in rad/s.

    ``detuning`` is the fitted signal-control offset and ``omega_hat`` the
    implied signal frequency ``omega_c + detuning``.
    """

    method: str
    detuning: float
    omega_hat: float
    stat_error: float
    sys_error: float = 0.0
    phase: float = math.nan
    contrast: float = math.nan
    offset: float = math.nan
    cost: float = math.nan
    n_points: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def total_error(self) -> float:
        return math.hypot(self.stat_error, self.sys_error)


@dataclass
class ErrorBudget:
    """Statistical, systematic and total uncertainty of one estimate (rad/s)."""

    omega_hat: float
    stat: float
    sys: float
    crlb: float
    heisenberg: float
    T: float
    method: str = ""

    @property
    def total(self) -> float:
        return math.hypot(self.stat, self.sys)

    @property
    def ratio_to_heisenberg(self) -> float:
        return self.total / self.heisenberg

    @property
    def ratio_to_crlb(self) -> float:
        return self.stat / self.crlb if self.crlb > 0 else math.inf


# --------------------------------------------------------------------------
# Periodogram and line-shape fit
# --------------------------------------------------------------------------

def fft_power_spectrum(data, period: float | None = None) -> Spectrum:
    """Mean-subtracted one-sided power spectrum.

    Parameters
    ----------
    data : MeasurementDataset or array
        Record; for a bare array give the sampling ``period`` (s).
    """
    if isinstance(data, MeasurementDataset):
        x = np.asarray(data.outcomes, dtype=float)
        period = data.period
    else:
        x = np.asarray(data, dtype=float)
        if period is None:
            raise ValueError("period is required for raw arrays")
    R = len(x)
    if R < 2:
        raise ValueError("need at least two samples")
    y = x - x.mean()
    X = np.fft.rfft(y)
    p = np.abs(X) ** 2 / R
    p[1:] *= 2.0
    if R % 2 == 0:
        p[-1] /= 2.0
    p[0] = 0.0  # exactly zero after mean subtraction up to rounding
    freqs = np.fft.rfftfreq(R, d=period)
    return Spectrum(freqs, p, 1.0 / (R * period), R, float(np.dot(y, y)), y)


def dirichlet_kernel(u, n):
    """Complex spectrum of a unit complex tone sampled ``n`` times.

    ``u`` is the distance between evaluation and tone frequency in bins
    (``1 / (n tau)``).  The magnitude is ``|sin(pi u) / (n sin(pi u / n))|``,
    which tends to ``|sinc(u)|`` for large ``n``; the result is normalised to
    one at ``u = 0``.
    """
    u = np.asarray(u, dtype=float)
    s = np.sin(np.pi * u / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(np.abs(s) < 1e-15, np.cos(np.pi * u * (n - 1) / n) * np.sign(np.cos(np.pi * u / n)),
                       np.sin(np.pi * u) / (n * s))
    return mag * np.exp(1j * np.pi * u * (n - 1) / n)


def line_shape(f, amp, f0, bg, width, n):
    """Finite-record power profile ``amp |D(f - f0)|^2 + bg`` of one tone."""
    return amp * np.abs(dirichlet_kernel((f - f0) / width, n)) ** 2 + bg


def peak_offset(power, k0) -> float:
    """Sub-bin peak position from the two largest neighbouring magnitudes.

    For a rectangular window the magnitude ratio of the two bins straddling a
    tone gives its fractional offset directly.
    """
    a = np.sqrt(power)
    if k0 + 1 < len(a) and (k0 - 1 < 1 or a[k0 + 1] >= a[k0 - 1]):
        return float(a[k0 + 1] / (a[k0] + a[k0 + 1])) if a[k0] + a[k0 + 1] > 0 else 0.0
    if k0 - 1 >= 1:
        return -float(a[k0 - 1] / (a[k0] + a[k0 - 1])) if a[k0] + a[k0 - 1] > 0 else 0.0
    return 0.0


def tone_sigma(y, omega, period) -> float:
    """1-sigma error of ``omega`` for a sinusoid model of the record ``y``.

    At fixed ``omega`` linear least squares gives the quadrature amplitudes
    and the offset; the error is read from ``(J^T J)^-1`` of the full
    four-parameter model, scaled by the residual variance.
    """
    y = np.asarray(y, dtype=float)
    s = np.arange(len(y)) * period
    c, sn = np.cos(omega * s), np.sin(omega * s)
    M = np.column_stack([c, sn, np.ones_like(s)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    resid = y - M @ coef
    s2 = float(np.dot(resid, resid)) / max(len(y) - 4, 1)
    a, b = coef[0], coef[1]
    J = np.column_stack([s * (-a * sn + b * c), c, sn, np.ones_like(s)])
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return math.inf
    return math.sqrt(max(float(cov[0, 0]), 0.0))


def padded_spectrum(spectrum: Spectrum, pad: int):
    """Complex DFT of the zero-padded record on a grid ``pad`` times finer.

    Returns ``(frequency in bin units, complex spectrum)`` up to Nyquist.
    """
    X = np.fft.rfft(spectrum.record, n=pad * spectrum.n_samples)
    return np.arange(len(X)) / pad, X


def sinc_fit(spectrum: Spectrum, window: int = 4, sign: int = 1, omega_c: float = 0.0,
             pad: int = 8, xtol: float = 1e-10, maxiter: int = 500) -> FitResult:
    """Fit the finite-record line shape around the strongest bin.

    The complex spectrum of the zero-padded record within ``window`` bins of
    the peak is fitted by three finite-record kernels: the tone at ``x0``,
    its mirror image at ``-x0`` (the record is real) and a DC term (left over
    from mean subtraction).  Their complex amplitudes enter linearly and are
    solved for at every trial ``x0``; ``x0`` itself is found by a bounded
    scalar minimisation of the residual within one bin of the peak.  A
    noiseless tone is therefore reproduced exactly, on or between bins.

    Parameters
    ----------
    spectrum : Spectrum
        Must carry the record (as produced by :func:`fft_power_spectrum`).
    window : int
        Half-width of the fitted region in original bins.
    sign : {-1, 1}
        Sign attached to the returned ``detuning``; the periodogram is blind to it.
    omega_c : float
        Control carrier, added to the detuning to form ``omega_hat``.
    pad : int
        Zero-padding factor (samples per bin).

    Returns
    -------
    FitResult
        ``stat_error`` is the Gauss-Newton 1 sigma of a sinusoid model at the
        fitted centre (see :func:`tone_sigma`).  The covariance of the
        spectral fit itself is not used: spectral residuals are correlated
        across padded samples and heteroscedastic near the peak.

    Raises
    ------
    FitError
        If the minimisation does not converge within ``maxiter`` iterations.
    """
    if spectrum.record is None:
        raise ValueError("the spectrum does not carry its record")
    n = spectrum.n_samples
    w = spectrum.bin_width_hz
    k0 = int(np.argmax(spectrum.power[1:]) + 1)
    x_all, X_all = padded_spectrum(spectrum, max(int(pad), 1))
    sel = (np.abs(x_all - k0) <= window)
    xb, Xb = x_all[sel], X_all[sel]
    # rfft(...) of a unit complex tone at x0 equals n * conj-free kernel of (x0 - x)
    def design(x0):
        return n * np.column_stack([dirichlet_kernel(x0 - xb, n), dirichlet_kernel(-x0 - xb, n),
                                    dirichlet_kernel(-xb, n)])

    def cost(x0):
        M = design(x0)
        coef, *_ = np.linalg.lstsq(M, Xb, rcond=None)
        r = Xb - M @ coef
        return float(np.real(np.vdot(r, r)))

    res = minimize_scalar(cost, bounds=(k0 - 1.0, k0 + 1.0), method="bounded",
                          options={"xatol": xtol, "maxiter": maxiter})
    if not res.success or not np.isfinite(res.x):
        raise FitError(f"line-shape fit did not converge: {res.message}", math.sqrt(max(res.fun, 0.0)))
    x0 = float(res.x)
    coef, *_ = np.linalg.lstsq(design(x0), Xb, rcond=None)
    f0 = x0 * w
    sigma = tone_sigma(spectrum.record, TWO_PI * f0, 1.0 / (n * w))
    det = sign * TWO_PI * f0
    return FitResult("fft-sinc", det, omega_c + det, sigma, cost=math.sqrt(max(res.fun, 0.0)),
                     n_points=n, extra={"peak_bin": k0, "centre_bins": x0,
                                        "amplitude": float(2 * abs(coef[0])), "pad": int(pad)})


def fft_initial_guess(ds: MeasurementDataset, sign: int = 1) -> tuple:
    """Coarse ``(delta, phi)`` from the periodogram peak and the DFT phase."""
    pgram = fft_power_spectrum(ds)
    p = pgram.power
    k0 = int(np.argmax(p[1:]) + 1)
    delta = sign * TWO_PI * pgram.bin_width_hz * (k0 + peak_offset(p, k0))
    cfg = ds.config
    s = (ds.n - 1) * ds.period + 0.5 * cfg.interaction_time
    y = np.asarray(ds.outcomes, dtype=float)
    z = np.dot(y - y.mean(), np.exp(-1j * delta * s))
    return delta, float(np.angle(z))


# --------------------------------------------------------------------------
# Least squares on the exact record model
# --------------------------------------------------------------------------

def record_model(params, s, cfg: ExperimentConfig, fixed: dict):
    """Model record for parameters ``(delta, phi, contrast, offset)``.

    ``s`` are the mid-sequence times ``(n - 1) tau + t / 2``.  The fringe
    harmonics come from the exact sequential probability with the signal
    detuned by ``delta`` from the control.
    """
    p = dict(fixed)
    p.update(params)
    det = cfg.detunings
    a, b, c = sequential_fringe(cfg.interaction_time, det.delta_c + p["delta"], det.delta_c, cfg.rabi)
    psi = p["phi"] + p["delta"] * s
    osc = b * np.cos(psi) + c * np.sin(psi)
    return p.get("offset", a) + p.get("contrast", 1.0) * osc


def _zero_offset_phases(y, cfg: ExperimentConfig):
    """Phases that reproduce the record mean with no precession."""
    det = cfg.detunings
    a, b, c = sequential_fringe(cfg.interaction_time, det.delta_c, det.delta_c, cfg.rabi)
    amp = math.hypot(b, c)
    if amp == 0:
        return [0.0]
    base = math.atan2(c, b)
    r = math.acos(min(max((float(np.mean(y)) - a) / amp, -1.0), 1.0))
    return [base + r, base - r]


def least_squares_fit(ds: MeasurementDataset, initial_guess: float | None = None,
                      phase_guess: float | None = None, float_contrast: bool = True,
                      known_phase: float | None = None, max_nfev: int = 200) -> FitResult:
    """Levenberg-Marquardt fit of the record.

    Parameters
    ----------
    ds : MeasurementDataset
    initial_guess : float, optional
        Starting detuning (rad/s); by default the periodogram estimate with
        the configuration's sign hint.  Without an explicit guess, a start at
        zero detuning is also tried when the periodogram peak lies within two
        bins of DC or the contrast is held fixed; the start with the lower
        residual wins.
    phase_guess : float, optional
        Starting phase; by default from the DFT at the starting detuning.
    float_contrast : bool
        Fit the fringe contrast and offset as free parameters.  With a
        constant record (no offset) these are degenerate with the phase, so
        use ``False`` to estimate offsets far below one bin.
    known_phase : float, optional
        Hold the initial phase fixed at this value.

    Raises
    ------
    FitError
        On non-convergence or a singular Jacobian.
    """
    cfg = ds.config
    tau = ds.period
    s = (np.asarray(ds.n, dtype=float) - 1) * tau + 0.5 * cfg.interaction_time
    y = np.asarray(ds.outcomes, dtype=float)
    g_delta, g_phi = fft_initial_guess(ds, cfg.sign)
    if initial_guess is not None:
        g_delta = float(initial_guess)
        z = np.dot(y - y.mean(), np.exp(-1j * g_delta * s))
        g_phi = float(np.angle(z))
    if phase_guess is not None:
        g_phi = float(phase_guess)
    starts = [(g_delta, g_phi)]
    bin_rad = TWO_PI / (len(y) * tau)
    if initial_guess is None and (not float_contrast or abs(g_delta) <= 2 * bin_rad):
        starts += [(0.0, ph) for ph in _zero_offset_phases(y, cfg)]

    names = ["delta"]
    fixed = {}
    if known_phase is None:
        names.append("phi")
    else:
        fixed["phi"] = float(known_phase)
    if float_contrast:
        names += ["contrast", "offset"]
    if len(y) < len(names) + 1:
        raise FitError("too few points for the number of parameters")
    span = max(s[-1] - s[0], tau)
    scale = np.array([1.0 / span if nm == "delta" else 1.0 for nm in names])

    def resid(x):
        return record_model(dict(zip(names, x)), s, cfg, fixed) - y

    def solve(d0, ph0):
        x0 = [d0] + ([ph0] if known_phase is None else []) + ([1.0, float(y.mean())] if float_contrast else [])
        try:
            sol = least_squares(resid, np.array(x0, dtype=float), method="lm", x_scale=scale,
                                max_nfev=max_nfev * (len(names) + 1), xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise FitError(f"least-squares failed: {exc}") from None
        rnorm = float(np.sqrt(2 * sol.cost))
        if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
            raise FitError(f"least-squares did not converge: {sol.message}", rnorm)
        JTJ = sol.jac.T @ sol.jac
        if np.linalg.matrix_rank(JTJ * np.outer(scale, scale)) < len(names):
            raise FitError("rank-deficient Jacobian", rnorm)
        return sol, JTJ

    best, error = None, None
    for d0, ph0 in starts:
        try:
            sol, JTJ = solve(d0, ph0)
        except FitError as exc:
            error = error or exc
            continue
        if best is None or sol.cost < best[0].cost:
            best = (sol, JTJ)
    if best is None:
        raise error
    sol, JTJ = best
    rnorm = float(np.sqrt(2 * sol.cost))
    s2 = 2 * sol.cost / max(len(y) - len(names), 1)
    cov = np.linalg.inv(JTJ) * s2
    p = dict(zip(names, sol.x))
    sig = math.sqrt(max(cov[0, 0], 0.0))
    return FitResult("lsq", float(p["delta"]), float(cfg.omega_c + p["delta"]), sig,
                     phase=float(p.get("phi", fixed.get("phi", math.nan))),
                     contrast=float(p.get("contrast", 1.0)), offset=float(p.get("offset", math.nan)),
                     cost=rnorm, n_points=len(y),
                     extra={"nfev": int(sol.nfev), "status": int(sol.status), "starts": len(starts)})


def fit_dataset(ds: MeasurementDataset, method: str = "lsq", **kw) -> FitResult:
    """Dispatch on ``method`` (``"lsq"`` or ``"fft-sinc"``)."""
    if method == "lsq":
        return least_squares_fit(ds, **kw)
    if method == "fft-sinc":
        return sinc_fit(fft_power_spectrum(ds), sign=ds.config.sign, omega_c=ds.config.omega_c, **kw)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Error budget
# --------------------------------------------------------------------------

def crlb(config: ExperimentConfig) -> float:
    """Frequency uncertainty bound (rad/s) for the configured record.

    The per-sample phase lever arm is the sampling period, which equals
    ``t_pi`` for instantaneous readout at ``t = t_pi``.
    """
    return math.sqrt(fisher.dataset_variance_bound(config.R, config.t_pi, spacing=config.period))


def error_budget(fit: FitResult, config: ExperimentConfig) -> ErrorBudget:
    """Combine the fit error with the clock systematic.

    A fractional time-base error ``eps`` scales every synthesised and
    inferred frequency, so the absolute signal frequency is off by
    ``|omega_hat| * eps``.  Errors add in quadrature.
    """
    sys = abs(fit.omega_hat) * abs(config.clock_fractional_error)
    T = config.total_time
    return ErrorBudget(fit.omega_hat, fit.stat_error, sys, crlb(config),
                       fisher.reference_limits(T)["heisenberg"], T, fit.method)


def budget_record(budget: ErrorBudget, seed: int) -> dict:
    """Results document with Hz and rad/s fields."""
    h = 1.0 / TWO_PI
    return {
        "method": budget.method,
        "omega_hat_hz": budget.omega_hat * h,
        "stat_err_hz": budget.stat * h,
        "sys_err_hz": budget.sys * h,
        "total_err_hz": budget.total * h,
        "crlb_hz": budget.crlb * h,
        "heisenberg_hz": budget.heisenberg,
        "omega_hat_rad_s": budget.omega_hat,
        "stat_err_rad_s": budget.stat,
        "sys_err_rad_s": budget.sys,
        "total_err_rad_s": budget.total,
        "crlb_rad_s": budget.crlb,
        "heisenberg_rad_s": budget.heisenberg,
        "total_time_s": budget.T,
        "seed": int(seed),
    }


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------

def _one_trial(args):
    config, trial, method, kw = args
    ds = simulate_timetrace(config, trial=trial)
    try:
        return fit_dataset(ds, method, **kw)
    except FitError:
        return None


def monte_carlo(config: ExperimentConfig, n_trials: int, method: str = "lsq", threads: int = 1,
                **fit_kw) -> list:
    """Fit ``n_trials`` independent records; failed fits appear as ``None``."""
    jobs = [(config, k, method, fit_kw) for k in range(n_trials)]
    if threads <= 1:
        return [_one_trial(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(_one_trial, jobs))


@dataclass
class SweepRow:
    T: float
    R: int
    n_ok: int
    n_failed: int
    mc_std: float
    mc_bias: float
    fit_sigma: float
    crlb: float
    heisenberg: float
    sys: float

    @property
    def total(self) -> float:
        return math.hypot(self.mc_std, self.sys)


@dataclass
class SweepTable:
    rows: list
    slope: float
    method: str

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def uncertainty_vs_time_sweep(config: ExperimentConfig, durations, seeds: int = 20, method: str = "lsq",
                              threads: int = 1, **fit_kw) -> SweepTable:
    """Monte-Carlo frequency uncertainty as a function of record duration.

    For each duration, ``seeds`` independent records are fitted.  Failed fits
    are left out and counted.  The slope is fitted to ``log(std)`` against
    ``log(T)``.
    """
    rows = []
    for T in durations:
        cfg = config.with_(duration=float(T), points=None)
        fits = monte_carlo(cfg, seeds, method, threads, **fit_kw)
        ok = [f for f in fits if f is not None]
        est = np.array([f.detuning for f in ok])
        std = float(np.std(est, ddof=1)) if len(ok) > 1 else math.nan
        bias = float(np.mean(est) - cfg.delta) if ok else math.nan
        sig = float(np.mean([f.stat_error for f in ok])) if ok else math.nan
        rows.append(SweepRow(cfg.total_time, cfg.R, len(ok), len(fits) - len(ok), std, bias, sig,
                             crlb(cfg), 1.0 / cfg.total_time,
                             abs(cfg.omega_c + cfg.delta) * abs(cfg.clock_fractional_error)))
    slope = loglog_slope([r.T for r in rows], [r.mc_std for r in rows])
    return SweepTable(rows, slope, method)
