"""Optional SVG plots; CSV/JSON remain the source of truth."""

from __future__ import annotations

import numpy as np


def _ax(title, xlabel, ylabel):
    import matplotlib
    matplotlib.use("svg", force=False)
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    import matplotlib.pyplot as plt
    plt.close(fig)


def cooling_curve(curve, path):
    fig, ax = _ax("phonon cooling dynamics", "t [s]", "<N>")
    ax.semilogy(curve.t, np.maximum(curve.n, 1e-30))
    ax.axhline(curve.n_ss, ls="--", lw=0.8, color="gray")
    _save(fig, path)


def sweep_curve(sweep, path):
    fig, ax = _ax("steady-state occupancy vs pressure",
                  "pressure [mbar]", "N_ss")
    ax.loglog(sweep.pressures_mbar, sweep.n_ss)
    _save(fig, path)


def trajectory(traj, path, max_points=20000):
    step = max(traj.t.size // max_points, 1)
    fig, ax = _ax("trajectory", "t [s]", "q [m]")
    ax.plot(traj.t[::step], traj.q_m[::step], lw=0.5)
    _save(fig, path)


def spectrum_fit(spec, fit, model_psd, path):
    fig, ax = _ax("position PSD", "f [Hz]", "PSD [m^2/Hz]")
    ax.loglog(spec.freq_hz[1:], spec.psd[1:], lw=0.6, label="estimate")
    if model_psd is not None:
        ax.loglog(spec.freq_hz[1:], model_psd[1:], lw=1.2, label="fit")
    ax.legend()
    _save(fig, path)


def sensitivity_scan(report, path):
    fig, ax = _ax("force sensitivity vs probe power",
                  "probe power [W]", "sqrt(S_F) [N/rtHz]")
    ax.loglog(report.scan_power_w, report.scan_sensitivity)
    ax.axvline(report.closed_power_w, ls="--", lw=0.8, color="gray",
               label="closed form")
    ax.legend()
    _save(fig, path)


def force_budget(omega, s_t, s_f, s_s, path):
    fig, ax = _ax("force-noise budget", "omega/omega_z", "S [N^2/Hz]")
    total = s_t + s_f + s_s
    ax.loglog(omega, np.full_like(omega, s_t), label="thermal")
    ax.loglog(omega, np.full_like(omega, s_f), label="feedback")
    ax.loglog(omega, s_s, label="shot")
    ax.loglog(omega, total, "k", label="total")
    ax.legend()
    _save(fig, path)
