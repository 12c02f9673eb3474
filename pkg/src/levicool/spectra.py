"""Spectral estimation, Lorentzian fits, force-noise budgets and the SQL.

Conventions: analytic spectra are two-sided in angular frequency; everything
crossing an external interface (estimated spectra, fit inputs, CSV files) is
one-sided in Hz, S_one(f) = 2 S_two(2 pi f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.optimize import brentq

from .constants import HBAR, K_B
from .params import (DerivedRates, feedback_damping, feedback_force_noise,
                     shot_noise_dc)
from .cooling import steady_state


class FitError(RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass
class Spectrum:
    freq_hz: np.ndarray
    psd: np.ndarray           # one-sided density, units^2 / Hz
    dt: float
    window: str
    n_segments: int
    kind: str = "position"
    sided: str = "one"


def estimate_psd(series, dt: float, window: str = "hann",
                 n_segments: int = 8) -> Spectrum:
    """Averaged-periodogram (Welch) PSD with 50% segment overlap.

    The segment length is chosen so the requested number of half-overlapping
    segments tiles the series: nperseg = 2 L / (n_segments + 1).
    """
    series = np.asarray(series, dtype=float)
    if n_segments < 3:
        raise ValueError("need n_segments >= 3")
    nperseg = int(2 * series.size // (n_segments + 1))
    if nperseg < 8 or series.size < 2 * nperseg:
        raise ValueError(f"series too short: need at least {8 * (n_segments + 1) // 2}"
                         f" samples for {n_segments} segments")
    f, p = signal.welch(series, fs=1.0 / dt, window=window, nperseg=nperseg,
                        noverlap=nperseg // 2, detrend="constant",
                        scaling="density", return_onesided=True)
    return Spectrum(f, p, dt, window, n_segments)


def susceptibility(omega, mass: float, omega_z: float, gamma: float):
    """Mechanical response chi_m(w) = 1 / (m [(w_z^2 - w^2) - i w Gamma])."""
    omega = np.asarray(omega, dtype=float)
    return 1.0 / (mass * ((omega_z ** 2 - omega ** 2) - 1j * omega * gamma))


def position_psd_model(omega, mass: float, omega_z: float, gamma: float,
                       s_force: float, shot_floor: float):
    """Two-sided position PSD |chi_m|^2 (S_T + S_F) + l_z^2/(chi^2 Phi).

    ``s_force`` is the flat force-noise strength S_T + S_F and ``shot_floor``
    the measurement floor l_z^2 / (chi^2 Phi).
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    chi_m = susceptibility(omega, mass, omega_z, gamma)
    return np.abs(chi_m) ** 2 * s_force + shot_floor


def position_psd_one_sided(freq_hz, mass, omega_z, gamma, s_force, shot_floor):
    return 2.0 * position_psd_model(2.0 * math.pi * np.asarray(freq_hz),
                                    mass, omega_z, gamma, s_force, shot_floor)


# ---------------------------------------------------------------------------
# Lorentzian fitting (damped Gauss-Newton on the log PSD)

@dataclass
class LorentzFit:
    omega_z: float            # rad/s
    gamma: float              # rad/s
    n_ss: float
    s_force: float            # fitted S_T + S_F
    floor: float              # one-sided floor, units^2/Hz
    covariance: np.ndarray    # 4x4 in log-parameter space (w0, G, S, floor)
    residual: float           # RMS log residual
    n_iter: int


def _log_model(freq_hz, logp):
    w0, g, s, fl = np.exp(logp)
    w = 2.0 * math.pi * freq_hz
    denom = (w0 ** 2 - w ** 2) ** 2 + (w * g) ** 2
    return np.log(2.0 * s / denom + fl)


def _jacobian(freq_hz, logp):
    w0, g, s, fl = np.exp(logp)
    w = 2.0 * math.pi * freq_hz
    d2 = (w0 ** 2 - w ** 2)
    denom = d2 ** 2 + (w * g) ** 2
    model = 2.0 * s / denom + fl
    # d log(model) / d log(param)
    dm_dw0 = 2.0 * s * (-(2.0 * d2 * 2.0 * w0 ** 2)) / denom ** 2
    dm_dg = 2.0 * s * (-(2.0 * w ** 2 * g ** 2)) / denom ** 2
    dm_ds = 2.0 * s / denom
    dm_dfl = np.full_like(w, fl)
    return np.stack([dm_dw0, dm_dg, dm_ds, dm_dfl], axis=1) / model[:, None]


def _auto_init(spec: Spectrum, mass: float):
    psd = spec.psd.copy()
    psd[0] = psd[1]  # ignore the DC bin
    floor = float(np.median(psd))
    i_pk = int(np.argmax(psd))
    peak = psd[i_pk]
    if peak < 3.0 * floor or i_pk == 0:
        raise FitError("no resolvable peak (peak/floor < 3)")
    f0 = spec.freq_hz[i_pk]
    half = floor + (peak - floor) / 2.0
    above = np.nonzero(psd > half)[0]
    lo = above[above <= i_pk].min() if (above <= i_pk).any() else i_pk
    hi = above[above >= i_pk].max() if (above >= i_pk).any() else i_pk
    df = spec.freq_hz[1] - spec.freq_hz[0]
    width_hz = max((hi - lo + 1) * df, df)
    w0 = 2.0 * math.pi * f0
    g = 2.0 * math.pi * width_hz
    s = (peak - floor) * (w0 * g) ** 2 / 2.0
    return np.log([w0, g, s, max(floor, 1e-300)])


def fit_lorentzian(spec: Spectrum, mass: float,
                   initial_guess: dict | None = None,
                   band_hz: tuple | None = None,
                   max_iter: int = 200, tol: float = 1e-10) -> LorentzFit:
    """Fit w_z, Gamma, S_T+S_F and the noise floor to a measured PSD.

    Levenberg-Marquardt (damped Gauss-Newton) on the log of the one-sided
    PSD; the periodogram noise is multiplicative, so log space gives uniform
    residual weights.  The occupancy follows from the fitted area:
    2 N + 1 = (S_T + S_F) / (m hbar Gamma w_z).
    """
    freq = spec.freq_hz
    psd = spec.psd
    keep = freq > 0
    if band_hz is not None:
        keep &= (freq >= band_hz[0]) & (freq <= band_hz[1])
    freq = freq[keep]
    psd = psd[keep]
    # internal peak amplitude is the mass-reduced s = (S_T + S_F)/m^2,
    # which keeps the optimizer variables O(1); physical units are restored
    # on output.
    if initial_guess is None:
        logp = _auto_init(spec, mass)
    else:
        logp = np.log([initial_guess["omega_z"], initial_guess["gamma"],
                       initial_guess["s_force"] / mass ** 2,
                       initial_guess["floor"]])
    y = np.log(np.clip(psd, 1e-300, None))
    lam = 1e-3
    cost = float(np.sum((y - _log_model(freq, logp)) ** 2))
    it = 0
    for it in range(1, max_iter + 1):
        r = y - _log_model(freq, logp)
        J = _jacobian(freq, logp)
        jtj = J.T @ J
        jtr = J.T @ r
        step_ok = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)
                                                            + 1e-30), jtr)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = logp + delta
            c_new = float(np.sum((y - _log_model(freq, trial)) ** 2))
            if c_new <= cost:
                logp, cost = trial, c_new
                lam = max(lam / 3.0, 1e-12)
                step_ok = True
                break
            lam *= 10
        if not step_ok:
            break
        if np.max(np.abs(delta)) < tol:
            break
    else:
        raise FitError(f"no convergence after {max_iter} iterations",
                       last_iterate=np.exp(logp))

    w0, g, s, fl = np.exp(logp)
    dof = max(freq.size - 4, 1)
    sigma2 = cost / dof
    try:
        cov = sigma2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
    s_force = s * mass ** 2
    # peak area: <q^2> = S/(2 m^2 Gamma w0^2) = l^2 (2N+1) with
    # l^2 = hbar/(2 m w0), hence 2N+1 = S/(m hbar Gamma w0)
    n_ss = (s_force / (mass * HBAR * g * w0) - 1.0) / 2.0
    return LorentzFit(w0, g, n_ss, s_force, fl, cov,
                      math.sqrt(cost / freq.size), it)


# ---------------------------------------------------------------------------
# force noise and the standard quantum limit

def shot_force_psd(omega, omega_z: float, gamma: float, s_shot_dc: float):
    """S_S(w) = S_S(0) [(1 - (w/w_z)^2)^2 + (w Gamma / w_z^2)^2]."""
    omega = np.asarray(omega, dtype=float)
    return s_shot_dc * ((1.0 - (omega / omega_z) ** 2) ** 2
                        + (omega * gamma / omega_z ** 2) ** 2)


def force_noise_psd(omega, omega_z: float, gamma: float, s_thermal: float,
                    s_feedback: float, s_shot_dc: float):
    """Total force-noise PSD and its (S_T, S_F, S_S(w)) breakdown."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    s_s = shot_force_psd(omega, omega_z, gamma, s_shot_dc)
    total = s_thermal + s_feedback + s_s
    return total, s_thermal, s_feedback, s_s


def optimal_frequency(omega_z: float, gamma: float):
    """Frequency minimizing S_S: w_opt = sqrt(w_z^2 - Gamma^2/2).

    Returns (w_opt, overdamped); overdamped (Gamma^2 >= 2 w_z^2) yields 0."""
    if gamma ** 2 >= 2.0 * omega_z ** 2:
        return 0.0, True
    return math.sqrt(omega_z ** 2 - gamma ** 2 / 2.0), False


@dataclass
class SqlReport:
    """Closed-form SQL and the numeric power scan, side by side."""
    closed_gamma: float
    closed_flux: float
    closed_power_w: float
    closed_sensitivity: float        # sqrt(<|F|^2>_SQL), N/sqrt(Hz)
    scan_flux: np.ndarray
    scan_power_w: np.ndarray
    scan_sensitivity: np.ndarray
    scan_flux_opt: float
    scan_power_opt_w: float
    scan_sensitivity_min: float
    gap_sensitivity: float           # |closed - scan| / scan
    gap_power: float
    assumptions: list = field(default_factory=list)


def _operating_point(rates: DerivedRates, flux: float):
    """Self-consistent (Gamma, N, D', S_T, S_F) at optimal gain for a flux."""
    g2phi = rates.chi ** 2 * flux
    gain = 1.0 / 9.0
    a_p = (rates.a_p / rates.flux) * flux if rates.flux > 0 else 0.0
    d_prime = rates.d_p + rates.a_t + a_p
    d_total = d_prime + rates.d_q
    j = (12.0 * gain - 54.0 * gain ** 2) * g2phi
    k = rates.eta_f / (2.0 * rates.mass) + j
    l = d_total - j / 2.0
    n = steady_state(j, k, l).exact if j > 0 else rates.n0
    gamma = rates.gamma0 + feedback_damping(g2phi, gain, n)
    s_t = 2.0 * rates.mass * HBAR * rates.omega_z * d_prime
    s_f = feedback_force_noise(rates.mass, rates.omega_z, g2phi, gain, n)
    return gamma, n, d_prime, s_t, s_f


def sql_optimize(rates: DerivedRates, gas_temperature: float,
                 probe_omega: float, scan_decades: float = 4.0,
                 scan_points: int = 400) -> SqlReport:
    """Standard-quantum-limit probe power, both ways.

    Closed form: chi^2 Phi_SQL = Gamma/8 with Gamma = Gamma_0 + dGamma solved
    self-consistently at optimal feedback, then
    <|F|^2>_SQL = 2 m Gamma_0 k_B T + 4 m hbar w_z (A_t + sqrt(2) Gamma).

    Numeric: minimize S_T + S_F + S_S(w_opt) over the probe flux with every
    coefficient (A_p, N_ss, Gamma) tracking the flux self-consistently.  Both
    results are reported; neither substitutes for the other.
    """
    assumptions = ["optimal feedback (G = 1/9, J = J_max) assumed"]
    chi2 = rates.chi ** 2

    def excess(gamma):
        flux = gamma / (8.0 * chi2)
        g_new = _operating_point(rates, flux)[0]
        return gamma - g_new

    lo = rates.gamma0 * (1.0 + 1e-12) if rates.gamma0 > 0 else 1e-18
    hi = lo
    for _ in range(200):
        hi *= 2.0
        if excess(hi) > 0:
            break
    closed_gamma = brentq(excess, lo, hi, rtol=1e-12)
    closed_flux = closed_gamma / (8.0 * chi2)
    f2_closed = (2.0 * rates.mass * rates.gamma0 * K_B * gas_temperature
                 + 4.0 * rates.mass * HBAR * rates.omega_z
                 * (rates.a_t + math.sqrt(2.0) * closed_gamma))
    closed_sens = math.sqrt(f2_closed)

    # The feedback broadening cancels the 1/Phi shot divergence at w_opt, so
    # the low-power side only turns up where the bare gas damping dominates
    # delta Gamma, around chi^2 Phi ~ (9/64) Gamma_0^2 / D'.  Extend the
    # window below that point so the scan brackets its interior minimum.
    half = scan_decades / 2.0
    flux_lo = closed_flux * 10 ** (-half)
    if rates.gamma0 > 0:
        d_closed = _operating_point(rates, closed_flux)[2]
        rise = (9.0 / 64.0) * rates.gamma0 ** 2 / (d_closed * chi2)
        flux_lo = min(flux_lo, 1e-2 * rise)
    fluxes = np.geomspace(flux_lo, closed_flux * 10 ** half, scan_points)
    sens = np.empty_like(fluxes)
    for i, flux in enumerate(fluxes):
        gamma, n, d_prime, s_t, s_f = _operating_point(rates, flux)
        s_dc = shot_noise_dc(rates.mass, rates.length_z, rates.omega_z,
                             chi2 * flux)
        w_opt, _ = optimal_frequency(rates.omega_z, gamma)
        total = force_noise_psd(w_opt, rates.omega_z, gamma, s_t, s_f, s_dc)[0]
        sens[i] = math.sqrt(total)
    i_min = int(np.argmin(sens))
    flux_opt = float(fluxes[i_min])
    hbar_wp = HBAR * probe_omega
    return SqlReport(
        closed_gamma=closed_gamma, closed_flux=closed_flux,
        closed_power_w=hbar_wp * closed_flux, closed_sensitivity=closed_sens,
        scan_flux=fluxes, scan_power_w=hbar_wp * fluxes,
        scan_sensitivity=sens, scan_flux_opt=flux_opt,
        scan_power_opt_w=hbar_wp * flux_opt,
        scan_sensitivity_min=float(sens[i_min]),
        gap_sensitivity=abs(closed_sens - sens[i_min]) / sens[i_min],
        gap_power=abs(closed_flux - flux_opt) / flux_opt,
        assumptions=assumptions,
    )
