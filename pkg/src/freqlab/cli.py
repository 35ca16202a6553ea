"""Command-line front end: ``freqlab {simulate,fit,bounds,sweep,qft,noon,rerun}``.

Every command writes its numerical output plus a ``manifest.json`` into the
output directory (``--out``, else ``$FREQLAB_OUT``, else ``freqlab-out``).
Numerical files depend only on the configuration and the seed; floats are
written with ``repr`` precision so reruns are byte-identical.  ``freqlab rerun
MANIFEST`` replays the recorded command into a new directory and refuses to
run if the inputs no longer hash to the recorded value.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, estimation, fisher, protocols
from .estimation import FitError
from .experiment import (PRESETS, ConfigError, ExperimentConfig, MeasurementDataset, config_from_dict,
                         simulate_timetrace)
from .spin import TWO_PI, IntegrationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

OUT_ENV = "FREQLAB_OUT"
DEFAULT_OUT = "freqlab-out"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _finite(obj):
    """Replace non-finite floats by strings so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_curve(path: Path, x_label: str, y_label: str, xs, ys) -> None:
    """Two-column tab-separated plot data with a one-line comment header."""
    rows = [f"# {x_label}\t{y_label}"]
    rows += [f"{float(x)!r}\t{float(y)!r}" for x, y in zip(xs, ys)]
    path.write_text("\n".join(rows) + "\n")


def _canonical_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def load_config_file(path) -> dict:
    """Parse a TOML configuration file."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}", EXIT_IO) from None
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: malformed config: {exc}", EXIT_VALIDATION) from None


def resolve_config(args) -> tuple[ExperimentConfig, dict, str | None]:
    """Return the experiment configuration, the raw table and its source path."""
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise CliError("--config and --preset are mutually exclusive", EXIT_VALIDATION)
    raw: dict = {}
    source = None
    if getattr(args, "config", None):
        raw = load_config_file(args.config)
        source = str(args.config)
        cfg = config_from_dict(raw)
    elif getattr(args, "preset", None):
        cfg = PRESETS[args.preset]()
        source = f"preset:{args.preset}"
    else:
        raise CliError("a configuration is required (--config FILE or --preset NAME)", EXIT_VALIDATION)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=int(args.seed))
    return cfg, raw, source


def output_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}", EXIT_IO) from None
    return path


def write_manifest(out: Path, args, command: str, source, seed, inputs: dict) -> dict:
    """Write ``manifest.json``; ``inputs`` fully determine the numerical outputs.

    ``argv`` records the command line without ``--out`` and ``--threads``,
    neither of which affects the numbers.
    """
    manifest = {
        "argv": _replayable_argv(getattr(args, "argv", None) or []),
        "command": command,
        "config_path": source,
        "seed": seed,
        "output_directory": str(out),
        "tool_version": __version__,
        "config_hash": _canonical_hash(inputs),
        "inputs": inputs,
    }
    _dump_json(manifest, out / "manifest.json")
    return manifest


def _replayable_argv(argv) -> list:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--threads"):
            skip = True
            continue
        if a.startswith("--out=") or a.startswith("--threads="):
            continue
        out.append(a)
    return out


def _hz(x):
    return x / TWO_PI


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, _, source = resolve_config(args)
    out = output_dir(args)
    ds = simulate_timetrace(cfg, trial=args.trial)
    csv_path = out / "dataset.csv"
    ds.to_csv(csv_path)
    inputs = {"config": cfg.to_dict("rad/s"), "trial": args.trial}
    write_manifest(out, args, "simulate", source, cfg.seed, inputs)
    nyquist = 0.5 / cfg.period
    alias = abs(_hz(cfg.delta)) % (2 * nyquist)
    peak = min(alias, 2 * nyquist - alias)
    print(f"R = {cfg.R}")
    print(f"delta/2pi = {_hz(cfg.delta)!r} Hz ({cfg.delta!r} rad/s)")
    print(f"period = {cfg.period!r} s")
    print(f"expected FFT peak = {peak!r} Hz")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_fit(args) -> int:
    path = Path(args.dataset)
    try:
        ds = MeasurementDataset.from_csv(path)
    except FileNotFoundError as exc:
        raise CliError(f"dataset not found: {exc.filename}", EXIT_IO) from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"{path}: malformed dataset: {exc}", EXIT_VALIDATION) from None
    out = output_dir(args)
    fit = estimation.fit_dataset(ds, args.method)
    budget = estimation.error_budget(fit, ds.config)
    rec = estimation.budget_record(budget, ds.config.seed)
    rec.update({
        "detuning_hat_hz": _hz(fit.detuning), "detuning_hat_rad_s": fit.detuning,
        "true_detuning_hz": _hz(ds.config.delta), "true_detuning_rad_s": ds.config.delta,
        "phase_hat_rad": fit.phase, "contrast": fit.contrast, "offset": fit.offset,
        "n_points": fit.n_points, "residual_norm": fit.cost,
    })
    _dump_json(rec, out / "results.json")
    inputs = {"config": ds.config.to_dict("rad/s"), "trial": ds.trial, "method": args.method,
              "dataset_sha256": hashlib.sha256(path.read_bytes()).hexdigest()}
    write_manifest(out, args, "fit", str(path), ds.config.seed, inputs)
    print(f"method = {args.method}")
    print(f"delta_hat/2pi = {rec['detuning_hat_hz']!r} Hz  +- {rec['stat_err_hz']!r} Hz (1 sigma)")
    print(f"crlb = {rec['crlb_hz']!r} Hz; 1/T = {rec['heisenberg_hz']!r}")
    return EXIT_OK


def bounds_report(R: int, t_pi: float, spacing: float | None = None, atoms: int = 1) -> dict:
    var = fisher.dataset_variance_bound(R, t_pi, spacing)
    T = R * (spacing if spacing is not None else t_pi)
    lim = fisher.reference_limits(T, atoms)
    std = math.sqrt(var) / math.sqrt(atoms)
    return {
        "R": int(R), "t_pi_s": t_pi, "spacing_s": spacing if spacing is not None else t_pi,
        "atoms": int(atoms), "total_time_s": T,
        "variance_rad2_s2": var / atoms,
        "variance_hz2": var / atoms / TWO_PI ** 2,
        "uncertainty_rad_s": std,
        "uncertainty_hz": _hz(std),
        "heisenberg_rad_s": lim["heisenberg"], "heisenberg_hz": lim["heisenberg"],
        "heisenberg_N_rad_s": lim["heisenberg_N"], "heisenberg_N_hz": lim["heisenberg_N"],
        "per_measurement_fi_s2": [fisher.fi_detuning_pi(n, math.pi / t_pi) for n in
                                  range(1, min(int(R), 16) + 1)],
        "bound_type": "strict",
    }


def cmd_bounds(args) -> int:
    if args.points is not None or args.t_pi is not None:
        if args.points is None or args.t_pi is None:
            raise CliError("--points and --t-pi must be given together", EXIT_VALIDATION)
        if args.points < 1:
            raise CliError("points: must be at least 1", EXIT_VALIDATION)
        if not args.t_pi > 0:
            raise CliError("t_pi: must be positive", EXIT_VALIDATION)
        R, t_pi, spacing, source, seed = args.points, args.t_pi, None, None, None
    else:
        cfg, _, source = resolve_config(args)
        R, t_pi, spacing, seed = cfg.R, cfg.t_pi, cfg.period, cfg.seed
    if args.atoms < 1:
        raise CliError("atoms: must be at least 1", EXIT_VALIDATION)
    out = output_dir(args)
    rep = bounds_report(R, t_pi, spacing, args.atoms)
    _dump_json(rep, out / "bounds.json")
    write_manifest(out, args, "bounds", source, seed, {"R": R, "t_pi": t_pi, "spacing": spacing, "atoms": args.atoms})
    print(f"variance bound = {rep['variance_rad2_s2']!r} (rad/s)^2 = {rep['variance_hz2']!r} Hz^2")
    print(f"uncertainty bound = {rep['uncertainty_rad_s']!r} rad/s = {rep['uncertainty_hz']!r} Hz")
    return EXIT_OK


def _durations(args, raw: dict) -> list:
    if args.durations:
        try:
            vals = [float(x) for x in args.durations.split(",") if x.strip()]
        except ValueError:
            raise CliError("durations: expected comma-separated numbers", EXIT_VALIDATION) from None
    else:
        sw = raw.get("sweep", {})
        if "durations" in sw:
            vals = [float(x) for x in sw["durations"]]
        elif "start" in sw and "stop" in sw:
            per = int(sw.get("points_per_decade", 2))
            n = int(round(per * math.log10(sw["stop"] / sw["start"]))) + 1
            vals = list(np.geomspace(float(sw["start"]), float(sw["stop"]), n))
        else:
            raise CliError("sweep grid missing: give --durations or a [sweep] table", EXIT_VALIDATION)
    if len(vals) < 2 or any(not v > 0 for v in vals):
        raise CliError("durations: need at least two positive values", EXIT_VALIDATION)
    return vals


def cmd_sweep(args) -> int:
    cfg, raw, source = resolve_config(args)
    durations = _durations(args, raw)
    seeds = args.seeds if args.seeds is not None else int(raw.get("sweep", {}).get("seeds", 20))
    if seeds < 2:
        raise CliError("seeds: need at least 2", EXIT_VALIDATION)
    out = output_dir(args)
    table = estimation.uncertainty_vs_time_sweep(cfg, durations, seeds=seeds, method=args.method,
                                                 threads=args.threads)
    cols = ("T", "R", "n_ok", "n_failed", "mc_std", "mc_bias", "fit_sigma", "crlb", "heisenberg", "sys")
    lines = ["# frequency uncertainty vs total time",
             f"# method {args.method}; seeds {seeds}; units rad/s (columns 5-10) and Hz (columns 11-16)",
             "# " + " ".join(cols) + " " + " ".join(c + "_hz" for c in cols[4:]) + " total total_hz"]
    for r in table.rows:
        rad = [r.mc_std, r.mc_bias, r.fit_sigma, r.crlb, r.heisenberg, r.sys]
        hz = [_hz(x) for x in rad[:4]] + [r.heisenberg, _hz(r.sys)]
        vals = [r.T, r.R, r.n_ok, r.n_failed] + rad + hz + [r.total, _hz(r.total)]
        lines.append(" ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals))
    (out / "sweep.dat").write_text("\n".join(lines) + "\n")
    T = table.column("T")
    curves = {"statistical": table.column("mc_std"), "fit_sigma": table.column("fit_sigma"),
              "crlb": table.column("crlb"), "systematic": table.column("sys"),
              "total": np.hypot(table.column("mc_std"), table.column("sys"))}
    for name, y in curves.items():
        write_curve(out / f"curve_{name}_hz.tsv", "T_s", f"{name}_hz", T, _hz(y))
        write_curve(out / f"curve_{name}_rad_s.tsv", "T_s", f"{name}_rad_s", T, y)
    write_curve(out / "curve_heisenberg.tsv", "T_s", "one_over_T", T, 1.0 / T)
    summary = {"slope": table.slope, "method": args.method, "seeds": seeds,
               "durations_s": [float(d) for d in durations],
               "failed_fits": int(sum(r.n_failed for r in table.rows)),
               "ratio_to_crlb": [r.mc_std / r.crlb for r in table.rows]}
    _dump_json(summary, out / "sweep_summary.json")
    write_manifest(out, args, "sweep", source, cfg.seed,
                   {"config": cfg.to_dict("rad/s"), "durations": summary["durations_s"],
                    "seeds": seeds, "method": args.method})
    print(f"slope of log(std) vs log(T) = {table.slope!r}")
    print(f"wrote {out / 'sweep.dat'}")
    return EXIT_OK


def cmd_qft(args) -> int:
    if not 1 <= args.qubits <= protocols.MAX_DENSE_QUBITS:
        raise CliError(f"qubits: must be in [1, {protocols.MAX_DENSE_QUBITS}]", EXIT_VALIDATION)
    if not args.total_time > 0:
        raise CliError("total_time: must be positive", EXIT_VALIDATION)
    if args.trials < 2:
        raise CliError("trials: need at least 2", EXIT_VALIDATION)
    seed = 0 if args.seed is None else args.seed
    delta = TWO_PI * args.delta_hz
    out = output_dir(args)
    reg = protocols.encode_frequency(delta, args.total_time, args.qubits)
    dist = protocols.inverse_qft_full(reg)
    j = int(np.argmax(dist))
    rep = protocols.qft_vs_sampling_comparison(delta, args.total_time, args.qubits, trials=args.trials,
                                               seed=seed, estimator=args.estimator)
    rep.update({
        "most_likely_bits": "".join(map(str, protocols.index_to_bits(j, args.qubits))),
        "most_likely_prob": float(dist[j]),
        "delta_hat_rad_s": protocols.index_to_detuning(j, args.qubits, args.total_time),
    })
    rep["delta_hat_hz"] = _hz(rep["delta_hat_rad_s"])
    for key in ("delta", "qft_rms_error", "qft_bias", "qft_rms_error_arbitrary_phase",
                "sampling_bound", "sampling_bound_known_phase"):
        rep[key + "_rad_s"] = rep.pop(key)
        rep[key + "_hz"] = _hz(rep[key + "_rad_s"])
    rep["heisenberg_rad_s"] = rep["heisenberg_hz"] = rep.pop("heisenberg")
    _dump_json(rep, out / "qft_report.json")
    lines = ["# outcome distribution of the inverse QFT", "# index bits delta_hat_rad_s delta_hat_hz probability"]
    for k, p in enumerate(dist):
        d = protocols.index_to_detuning(k, args.qubits, args.total_time)
        lines.append(f"{k} {''.join(map(str, protocols.index_to_bits(k, args.qubits)))} {d!r} {_hz(d)!r} "
                     f"{float(p)!r}")
    (out / "qft_distribution.dat").write_text("\n".join(lines) + "\n")
    write_manifest(out, args, "qft", None, seed, {"qubits": args.qubits, "total_time": args.total_time,
                                            "delta_hz": args.delta_hz, "trials": args.trials,
                                            "estimator": args.estimator})
    print(f"most likely outcome |{rep['most_likely_bits']}> (p = {rep['most_likely_prob']!r})")
    print(f"QFT/sampling uncertainty ratio = {rep['ratio']!r} (sqrt(R) = {math.sqrt(rep['R'])!r})")
    return EXIT_OK


def cmd_noon(args) -> int:
    if not args.t_pi > 0:
        raise CliError("t_pi: must be positive", EXIT_VALIDATION)
    out = output_dir(args)
    rep = protocols.noon_budget(args.t_pi, args.phi)
    _dump_json(rep, out / "noon_report.json")
    phis = np.linspace(0, math.pi, 181)
    lines = ["# NOON readout probability", "# phi_rad closed_form circuit"]
    lines += [f"{float(p)!r} {float(protocols.noon_prob(p))!r} {protocols.noon_circuit_prob(p)!r}" for p in phis]
    (out / "noon_curve.dat").write_text("\n".join(lines) + "\n")
    write_manifest(out, args, "noon", None, None, {"t_pi": args.t_pi, "phi": args.phi})
    print(f"entangled total time = {rep['entangled']['total']!r} s "
          f"({rep['time_ratio']!r} x the unentangled {rep['unentangled']['total']!r} s)")
    print(f"information rate ratio (entangled/unentangled) = {rep['rate_ratio']!r}; winner: {rep['winner']}")
    return EXIT_OK


def cmd_rerun(args) -> int:
    path = Path(args.manifest)
    try:
        old = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(f"manifest not found: {path}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: malformed manifest: {exc}", EXIT_VALIDATION) from None
    argv = old.get("argv")
    if not argv or argv[0] == "rerun":
        raise CliError(f"{path}: manifest has no replayable command", EXIT_VALIDATION)
    new_argv = list(argv) + ["--out", str(output_dir(args))]
    if args.threads is not None:
        if argv[0] != "sweep":
            raise CliError("--threads only applies to sweep runs", EXIT_VALIDATION)
        new_argv += ["--threads", str(args.threads)]
    code = main(new_argv)
    if code != EXIT_OK:
        return code
    new = json.loads((output_dir(args) / "manifest.json").read_text())
    if new.get("config_hash") != old.get("config_hash"):
        print("error: inputs differ from the recorded manifest (config hash mismatch)", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="TOML configuration file")
            sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or {DEFAULT_OUT})")

    sp = sub.add_parser("simulate", help="simulate a measurement record")
    common(sp)
    sp.add_argument("--trial", type=int, default=None, help="trial index for independent records")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="estimate the detuning from a record")
    sp.add_argument("dataset", help="dataset CSV written by 'simulate'")
    sp.add_argument("--method", choices=("lsq", "fft-sinc"), default="lsq")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("bounds", help="Cramer-Rao bounds for a record")
    common(sp)
    sp.add_argument("--points", type=int, help="number of measurements R")
    sp.add_argument("--t-pi", type=float, help="pi-pulse time in s")
    sp.add_argument("--atoms", type=int, default=1)
    sp.set_defaults(func=cmd_bounds)

    sp = sub.add_parser("sweep", help="Monte-Carlo uncertainty vs total time")
    common(sp)
    sp.add_argument("--durations", help="comma-separated total times in s")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--method", choices=("lsq", "fft-sinc"), default="lsq")
    sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("qft", help="inverse-QFT frequency readout vs repeated sampling")
    common(sp, config=False)
    sp.add_argument("--qubits", "-N", type=int, default=3)
    sp.add_argument("--total-time", "-T", type=float, default=1.0, help="total time T in s")
    sp.add_argument("--delta-hz", type=float, default=0.5, help="signal-control offset in Hz")
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--estimator", choices=("mode", "single"), default="mode")
    sp.set_defaults(func=cmd_qft)

    sp = sub.add_parser("noon", help="two-qubit NOON time budget")
    sp.add_argument("--t-pi", type=float, default=1.0, help="pi-pulse time in s")
    sp.add_argument("--phi", type=float, default=math.pi / 8)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_noon)

    sp = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    sp.add_argument("manifest", help="manifest.json from an earlier run")
    sp.add_argument("--out")
    sp.add_argument("--threads", type=int, default=None, help="worker threads for a replayed sweep")
    sp.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, IntegrationError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        resid = getattr(exc, "residual", None)
        if resid is not None:
            print(f"  residual norm: {resid!r}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
