"""Command-line interface.

Subcommands: rates, cool, sweep, simulate, psd, fit, sense, oracle, validate.
Common flags: --config PATH, --out DIR, --seed N, --threads N, --plot.
Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
The environment variable LEVICOOL_OUT overrides --out.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance, cooling, oracle, params, spectra, \
    stochastic
from .config import ConfigError, ExperimentConfig, load
from .params import ValidationError


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


class Runner:
    """Tracks emitted files and writes the run manifest."""

    def __init__(self, args):
        self.args = args
        out = os.environ.get("LEVICOOL_OUT") or args.out
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.warnings: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(str(p))
        return p

    def write_csv(self, name: str, header: list, columns: list) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in zip(*columns):
                w.writerow([_fmt(v) for v in row])
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(payload, indent=2, default=_json_default)
                     + "\n")
        return p

    def manifest(self, cfg: ExperimentConfig | None):
        doc = {
            "tool": "levicool",
            "version": __version__,
            "command": " ".join(sys.argv),
            "seed": getattr(self.args, "seed", None),
            "config_hash": cfg.digest() if cfg is not None else None,
            "outputs": list(self.files),
            "warnings": self.warnings,
        }
        self.write_json("manifest.json", doc)

    def cleanup_partial(self):
        for f in self.files:
            try:
                Path(f).unlink(missing_ok=True)
            except OSError:
                pass


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load(args.config)
    else:
        cfg = ExperimentConfig()
        cfg.validate()
    if getattr(args, "seed", None) is not None:
        cfg.simulation.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def cmd_rates(args, run: Runner) -> int:
    cfg = _load_config(args)
    rates = params.derive_rates(cfg)
    run.warnings.extend(rates.warnings)
    run.write_json("rates.json", params.rates_document(rates, cfg))
    run.manifest(cfg)
    print(f"omega_z/2pi = {rates.omega_z / (2 * math.pi) / 1e3:.3f} kHz; "
          f"N0 = {rates.n0:.4g}; kick ratio = {rates.kick.ratio:.3g}")
    return 0


def cmd_cool(args, run: Runner) -> int:
    cfg = _load_config(args)
    rates = params.derive_rates(cfg)
    run.warnings.extend(rates.warnings)
    occ = cooling.n0_initial(rates)
    j, k, l = rates.j_rate, rates.k_rate, rates.l_rate
    if args.tmax is not None:
        tmax = args.tmax
    elif j > 0:
        tmax = 8.0 / math.sqrt((j + k) ** 2 + 8.0 * j * l) * 2.0
    else:
        tmax = 5.0 / max(k, 1e-12)
    t = np.linspace(0.0, tmax, args.points)
    curve = cooling.evolve_closed(occ.n0, j, k, l, t)
    run.warnings.extend(curve.warnings)
    run.write_csv("cooling.csv", ["t_s", "N"], [curve.t, curve.n])
    if args.plot:
        from . import plots
        plots.cooling_curve(curve, run.path("cooling.svg"))
    run.manifest(cfg)
    print(f"N0 = {curve.n0:.4g} -> N_ss = {curve.n_ss:.4g} "
          f"(tau = {curve.tau:.4g} s, branch {curve.branch})")
    return 0


def cmd_sweep(args, run: Runner) -> int:
    cfg = _load_config(args)
    grid = np.geomspace(args.pmin, args.pmax, args.points)
    sweep = cooling.pressure_sweep(cfg, grid, args.policy)
    run.write_csv("sweep.csv",
                  ["pressure_mbar", "n_ss", "gain", "modulation", "regime",
                   "converged"],
                  [sweep.pressures_mbar, sweep.n_ss, sweep.gain,
                   sweep.modulation, sweep.regime,
                   [int(c) for c in sweep.converged]])
    if args.plot:
        from . import plots
        plots.sweep_curve(sweep, run.path("sweep.svg"))
    run.manifest(cfg)
    print(f"swept {grid.size} pressures [{args.pmin:g}, {args.pmax:g}] mbar "
          f"({sweep.policy})")
    return 0


def cmd_simulate(args, run: Runner) -> int:
    cfg = _load_config(args)
    rates = params.derive_rates(cfg)
    run.warnings.extend(rates.warnings)
    traj = stochastic.simulate(rates, args.duration, dt=args.dt,
                               seed=cfg.simulation.seed)
    k = max(args.decimate, 1)
    run.write_csv("traj.csv", ["t_s", "Q", "P", "q_m", "I_h"],
                  [traj.t[::k], traj.q_quad[::k], traj.p_quad[::k],
                   traj.q_m[::k], traj.i_h[::k]])
    run.write_json("traj_meta.json", {
        "dt_s": traj.dt, "decimate": k, "master_seed": traj.master_seed,
        "sub_seed": list(traj.sub_seed), "samples": int(traj.t.size),
        "final_n_est": float(traj.n_est[-1]),
    })
    if args.plot:
        from . import plots
        plots.trajectory(traj, run.path("traj.svg"))
    run.manifest(cfg)
    print(f"simulated {traj.t.size - 1} steps, final N_est = "
          f"{traj.n_est[-1]:.4g}")
    return 0


def _read_timeseries(path: Path, column: str):
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = {name: i for i, name in enumerate(header)}
    if "t_s" not in cols or column not in cols:
        raise ValidationError(f"{path}: need columns 't_s' and '{column}', "
                              f"found {header}")
    t = np.array([float(r[cols["t_s"]]) for r in rows])
    q = np.array([float(r[cols[column]]) for r in rows])
    return t, q


def cmd_psd(args, run: Runner) -> int:
    cfg = _load_config(args)
    t, q = _read_timeseries(Path(args.input), args.column)
    q = q * args.calibration
    dt = float(t[1] - t[0])
    spec = spectra.estimate_psd(q, dt, window=args.window,
                                n_segments=args.segments)
    run.write_csv("spectrum.csv", ["freq_hz", "psd"],
                  [spec.freq_hz, spec.psd])
    run.write_json("spectrum_meta.json", {
        "window": spec.window, "n_segments": spec.n_segments, "dt_s": spec.dt,
        "calibration": args.calibration, "source": str(args.input),
    })
    run.manifest(cfg)
    print(f"PSD over [{spec.freq_hz[0]:.3g}, {spec.freq_hz[-1]:.3g}] Hz, "
          f"{spec.freq_hz.size} bins")
    return 0


def cmd_fit(args, run: Runner) -> int:
    cfg = _load_config(args)
    rates = params.derive_rates(cfg)
    with Path(args.input).open() as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    freq = np.array([float(r[0]) for r in rows])
    psd = np.array([float(r[1]) for r in rows])
    spec = spectra.Spectrum(freq, psd, math.nan, "external", 0)
    band = (args.fmin, args.fmax) if args.fmin or args.fmax else None
    fit = spectra.fit_lorentzian(spec, rates.mass, band_hz=band)
    run.write_json("fit.json", {
        "omega_z_rad_s": fit.omega_z,
        "freq_z_hz": fit.omega_z / (2 * math.pi),
        "gamma_rad_s": fit.gamma,
        "n_ss": fit.n_ss,
        "s_force_N2s": fit.s_force,
        "floor": fit.floor,
        "residual_rms_log": fit.residual,
        "iterations": fit.n_iter,
        "covariance_log_params": fit.covariance,
    })
    if args.plot:
        from . import plots
        model = spectra.position_psd_one_sided(
            freq, rates.mass, fit.omega_z, fit.gamma, fit.s_force,
            fit.floor / 2.0)
        plots.spectrum_fit(spec, fit, model, run.path("fit.svg"))
    run.manifest(cfg)
    print(f"fit: f_z = {fit.omega_z / 2 / math.pi:.1f} Hz, Gamma = "
          f"{fit.gamma:.4g} rad/s, N_ss = {fit.n_ss:.4g}")
    return 0


def cmd_sense(args, run: Runner) -> int:
    cfg = _load_config(args)
    rates = params.derive_rates(cfg)
    run.warnings.extend(rates.warnings)
    gamma = rates.gamma0 + rates.delta_gamma
    w = np.linspace(args.wmin, args.wmax, args.points) * rates.omega_z
    total, s_t, s_f, s_s = spectra.force_noise_psd(
        w, rates.omega_z, gamma, rates.s_thermal, rates.s_feedback,
        rates.s_shot_dc)
    run.write_csv("sense.csv",
                  ["omega_rad_s", "s_thermal", "s_feedback", "s_shot",
                   "total"],
                  [w, np.full_like(w, s_t), np.full_like(w, s_f), s_s, total])
    payload = None
    if args.scan_power:
        rep = spectra.sql_optimize(rates, cfg.gas.temperature_K,
                                   cfg.probe_omega)
        payload = {
            "closed_form": {
                "gamma_rad_s": rep.closed_gamma,
                "flux_1_s": rep.closed_flux,
                "probe_power_W": rep.closed_power_w,
                "sensitivity_N_rtHz": rep.closed_sensitivity,
            },
            "numeric_scan": {
                "flux_opt_1_s": rep.scan_flux_opt,
                "probe_power_W": rep.scan_power_opt_w,
                "sensitivity_N_rtHz": rep.scan_sensitivity_min,
            },
            "gap_sensitivity": rep.gap_sensitivity,
            "gap_power": rep.gap_power,
            "assumptions": rep.assumptions,
        }
        run.write_json("sql.json", payload)
        run.write_csv("sql_scan.csv",
                      ["flux_1_s", "probe_power_W", "sensitivity_N_rtHz"],
                      [rep.scan_flux, rep.scan_power_w, rep.scan_sensitivity])
        if args.plot:
            from . import plots
            plots.sensitivity_scan(rep, run.path("sense_scan.svg"))
    w_opt, overdamped = spectra.optimal_frequency(rates.omega_z, gamma)
    run.manifest(cfg)
    print(f"omega_opt/omega_z = {w_opt / rates.omega_z:.4f}"
          + (" (overdamped)" if overdamped else ""))
    if payload:
        cf = payload["closed_form"]
        ns = payload["numeric_scan"]
        print(f"SQL closed form: {cf['sensitivity_N_rtHz']:.3g} N/rtHz at "
              f"{cf['probe_power_W'] * 1e3:.3g} mW; numeric scan: "
              f"{ns['sensitivity_N_rtHz']:.3g} N/rtHz at "
              f"{ns['probe_power_W'] * 1e3:.3g} mW")
    return 0


def cmd_oracle(args, run: Runner) -> int:
    cfg = _load_config(args)
    if args.physical:
        rates = params.derive_rates(cfg)
        spec = oracle.LindbladSpec.from_rates(rates, gain=args.gain)
    else:
        spec = oracle.LindbladSpec(omega_z=2.0 * math.pi,
                                   d_prime=args.d_prime, d_q=args.d_q,
                                   friction=args.friction, gain=args.gain,
                                   chi2flux=args.chi2flux)
    state = oracle.thermal_state(args.dim, args.nbar)
    res = oracle.evolve(state, spec, args.tmax, n_samples=args.points)
    run.write_csv("oracle_moments.csv",
                  ["t", "n_mean", "n2_mean", "closure_residual", "trace_err",
                   "tail"],
                  [res.t, res.n_mean, res.n2_mean, res.closure,
                   res.trace_err, res.tail])
    ode = cooling.evolve_ode(args.nbar, *spec.phonon_ode_coefficients(),
                             res.t, tol=1e-10)
    run.write_csv("oracle_compare.csv", ["t", "n_oracle", "n_phonon_ode"],
                  [res.t, res.n_mean, ode.n])
    run.manifest(cfg)
    dev = float(np.max(np.abs(res.n_mean - ode.n)
                       / np.maximum(np.abs(ode.n), 1e-12)))
    print(f"final <N> = {res.n_mean[-1]:.4f}; max dev vs phonon ODE = "
          f"{dev:.3f}; max trace err = {res.trace_err.max():.2e}")
    return 0


def cmd_validate(args, run: Runner) -> int:
    results = acceptance.run_all(quick=args.quick)
    rows = []
    for r in results:
        print(r.line())
        rows.append([r.name, "PASS" if r.passed else "FAIL", r.measured,
                     r.target, f"{r.runtime_s:.2f}",
                     "expected" if (not r.passed and r.expected_failure)
                     else ""])
    run.write_csv("validation.csv",
                  ["criterion", "status", "measured", "target", "runtime_s",
                   "failure_class"],
                  list(map(list, zip(*rows))))
    run.manifest(None)
    hard_fail = [r for r in results if not r.passed and not r.expected_failure]
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed; "
          f"{len(hard_fail)} unexpected failures")
    return 0 if not hard_fail else 2


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levicool",
        description="Parametric-feedback cooling and force sensing of a "
                    "levitated nanoparticle: rates, dynamics, spectra, "
                    "Fock-space oracle.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (INI or JSON)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured master seed")
        p.add_argument("--threads", type=int, default=os.cpu_count(),
                       help="worker threads (results are independent of this)")
        p.add_argument("--plot", action="store_true", help="emit SVG plots")

    p = sub.add_parser("rates", help="derive every rate; write rates.json")
    common(p)

    p = sub.add_parser("cool", help="closed-form cooling curve")
    common(p)
    p.add_argument("--tmax", type=float, default=None, help="duration [s]")
    p.add_argument("--points", type=int, default=400)

    p = sub.add_parser("sweep", help="steady state vs pressure")
    common(p)
    p.add_argument("--pmin", type=float, default=1e-6)
    p.add_argument("--pmax", type=float, default=1e2)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--policy", default=None,
                   choices=["fixed_G", "fixed_M", "optimal_capped_M"])

    p = sub.add_parser("simulate", help="stochastic trajectory")
    common(p)
    p.add_argument("--duration", type=float, required=True, help="[s]")
    p.add_argument("--dt", type=float, default=None,
                   help="control interval [s]; default 1/(200 f_z)")
    p.add_argument("--decimate", type=int, default=1,
                   help="write every k-th sample")

    p = sub.add_parser("psd", help="Welch PSD from traj.csv or external CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--column", default="q_m",
                   help="column to analyze (default q_m)")
    p.add_argument("--calibration", type=float, default=1.0,
                   help="multiply the series (e.g. V -> m) before analysis")
    p.add_argument("--window", default="hann")
    p.add_argument("--segments", type=int, default=16)

    p = sub.add_parser("fit", help="Lorentzian fit of spectrum.csv")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--fmin", type=float, default=None)
    p.add_argument("--fmax", type=float, default=None)

    p = sub.add_parser("sense", help="force-noise budget and SQL")
    common(p)
    p.add_argument("--wmin", type=float, default=0.2,
                   help="scan start, units of omega_z")
    p.add_argument("--wmax", type=float, default=2.0)
    p.add_argument("--points", type=int, default=800)
    p.add_argument("--scan-power", action="store_true",
                   help="also optimize the probe power (SQL)")

    p = sub.add_parser("oracle", help="Fock-space master-equation oracle")
    common(p)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--nbar", type=float, default=5.0)
    p.add_argument("--tmax", type=float, default=20.0)
    p.add_argument("--gain", type=float, default=0.0)
    p.add_argument("--chi2flux", type=float, default=0.02)
    p.add_argument("--d-prime", type=float, default=1.0)
    p.add_argument("--d-q", type=float, default=0.0)
    p.add_argument("--friction", type=float, default=0.05)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--physical", action="store_true",
                   help="take rates from the config instead of the raw flags")

    p = sub.add_parser("validate", help="run the acceptance suite")
    common(p)
    p.add_argument("--quick", action="store_true",
                   help="identity checks only (< 10 s)")
    return ap


_COMMANDS = {
    "rates": cmd_rates, "cool": cmd_cool, "sweep": cmd_sweep,
    "simulate": cmd_simulate, "psd": cmd_psd, "fit": cmd_fit,
    "sense": cmd_sense, "oracle": cmd_oracle, "validate": cmd_validate,
}

_NUMERICAL_ERRORS = (cooling.IntegrationError, spectra.FitError,
                     oracle.TruncationError, oracle.NormDriftError,
                     FloatingPointError, np.linalg.LinAlgError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = Runner(args)
    try:
        return _COMMANDS[args.command](args, run)
    except (ConfigError, ValidationError, ValueError) as exc:
        run.cleanup_partial()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        run.cleanup_partial()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
