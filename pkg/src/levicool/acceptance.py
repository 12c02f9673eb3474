"""Acceptance suite: one callable per criterion, shared by the CLI
``validate`` command and the test suite.

Each check returns an :class:`AcceptanceResult`.  ``expected_failure`` marks
criteria that cannot pass as stated because the source model is internally
inconsistent at that point; the check still runs the stated assertion and
reports the measured value (see the project decision log for the analysis).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import cooling, oracle, params, spectra, stochastic
from .config import ExperimentConfig
from .constants import HBAR, K_B


@dataclass
class AcceptanceResult:
    name: str
    passed: bool
    measured: str
    target: str
    runtime_s: float
    note: str = ""
    expected_failure: bool = False

    def line(self) -> str:
        status = "PASS" if self.passed else (
            "FAIL (expected; see decision log)" if self.expected_failure
            else "FAIL")
        return (f"[{status:>4}] {self.name}: measured {self.measured}, "
                f"target {self.target} ({self.runtime_s:.2f}s)"
                + (f" -- {self.note}" if self.note else ""))


def fig3_config(pressure_mbar: float = 1e-3, temperature_K: float = 300.0,
                gain_policy: str = "fixed_G", gain: float = 0.0):
    cfg = ExperimentConfig()
    cfg.gas.pressure_mbar = pressure_mbar
    cfg.gas.temperature_K = temperature_K
    cfg.feedback.gain_policy = gain_policy
    cfg.feedback.gain = gain
    return cfg


# -- 1: SQL reproduction ----------------------------------------------------

def check_sql(quick: bool = False) -> list:
    t0 = time.time()
    cfg = fig3_config(pressure_mbar=1e-9)
    rates = params.derive_rates(cfg)
    rep = spectra.sql_optimize(rates, cfg.gas.temperature_K, cfg.probe_omega,
                               scan_points=120 if quick else 400)
    dt = time.time() - t0
    sens_ratio = rep.closed_sensitivity / 1e-21
    pow_ratio = rep.closed_power_w / 2e-3
    note = (f"numeric scan: {rep.scan_sensitivity_min:.3g} N/rtHz at "
            f"{rep.scan_power_opt_w * 1e3:.3g} mW; closed form documented in "
            f"decision log")
    sens_ok = 1.0 / 3.0 <= sens_ratio <= 3.0
    pow_ok = 0.5 <= pow_ratio <= 2.0
    return [
        AcceptanceResult(
            "1a SQL sensitivity", sens_ok,
            f"{rep.closed_sensitivity:.3g} N/rtHz ({sens_ratio:.2f}x)",
            "within 3x of 1e-21 N/rtHz", dt, note,
            expected_failure=not sens_ok),
        AcceptanceResult(
            "1b SQL probe power", pow_ok,
            f"{rep.closed_power_w * 1e3:.3g} mW ({pow_ratio:.2f}x)",
            "within 2x of 2 mW", 0.0, "",
            expected_failure=not pow_ok),
    ]


# -- 2: optimal gain ---------------------------------------------------------

def check_optimal_gain() -> list:
    t0 = time.time()
    chi, flux = 1e-7, 5.356e16
    g2phi = chi ** 2 * flux
    grid = np.arange(0.0, 2.0 / 9.0 + 1e-4, 1e-4)
    j = (12.0 * grid - 54.0 * grid ** 2) * g2phi
    g_star = grid[int(np.argmax(j))]
    jmax_ratio = np.max(j) / g2phi
    ok = abs(g_star - 1.0 / 9.0) <= 1e-4 + 1e-12 and abs(
        jmax_ratio - 2.0 / 3.0) <= 1e-6
    gain, jmax = cooling.optimal_gain(chi, flux)
    ok = ok and gain == 1.0 / 9.0 and abs(jmax / g2phi - 2.0 / 3.0) < 1e-12
    return [AcceptanceResult(
        "2 optimal gain", ok,
        f"argmax G={g_star:.5f}, Jmax/chi2Phi={jmax_ratio:.8f}",
        "G=1/9 within one step, 2/3 +/- 1e-6", time.time() - t0)]


# -- 3: closed form vs ODE ---------------------------------------------------

def check_closed_vs_ode() -> list:
    t0 = time.time()
    rng = np.random.default_rng(20250809)
    worst = 0.0
    for _ in range(20):
        j = 10.0 ** rng.uniform(-3, 3)
        k = 10.0 ** rng.uniform(-3, 3)
        l = 10.0 ** rng.uniform(-3, 3)
        n0 = 10.0 ** rng.uniform(0, 6)
        tau = 2.0 / math.sqrt((j + k) ** 2 + 8.0 * j * l)
        t = np.linspace(0.0, 6.0 * tau, 200)
        c = cooling.evolve_closed(n0, j, k, l, t)
        o = cooling.evolve_ode(n0, j, k, l, t, tol=1e-9)
        dev = float(np.max(np.abs(c.n - o.n) / np.maximum(np.abs(c.n), 1e-30)))
        worst = max(worst, dev)
    ok = worst < 1e-6
    return [AcceptanceResult(
        "3 closed form vs ODE", ok, f"max rel dev {worst:.3g}",
        "< 1e-6 over 20 draws", time.time() - t0)]


# -- 4: oracle validation of the phonon ODE ----------------------------------

def check_oracle(quick: bool = False) -> list:
    out = []
    dim, nbar = 64, 5.0
    state = oracle.thermal_state(dim, nbar)

    # instantaneous rates, hot-bath scenario (diffusion dominates friction)
    t0 = time.time()
    for gain, tag in ((0.0, "4a oracle dN/dt (G=0)"),
                      (1.0 / 9.0, "4b oracle dN/dt (G=1/9)")):
        spec = oracle.LindbladSpec(omega_z=2.0 * math.pi, d_prime=12.0,
                                   d_q=0.0, friction=0.05, gain=gain,
                                   chi2flux=0.02)
        rate = oracle.instantaneous_rate(state, spec)
        pred = spec.phonon_ode_rhs(nbar)
        dev = abs(rate - pred) / abs(pred)
        out.append(AcceptanceResult(
            tag, dev < 0.05, f"rel dev {dev:.4f}", "< 5%",
            time.time() - t0,
            f"oracle {rate:.4f} vs ODE {pred:.4f}"))
        t0 = time.time()

    # full G = 0 relaxation vs the linear closed form
    t0 = time.time()
    spec = oracle.LindbladSpec(omega_z=2.0 * math.pi, d_prime=0.05, d_q=0.0,
                               friction=0.05, gain=0.0, chi2flux=0.0)
    j, k, l = spec.phonon_ode_coefficients()
    t_final = (1.5 if quick else 3.0) / k
    res = oracle.evolve(state, spec, t_final, n_samples=40)
    lin = cooling.evolve_closed(nbar, 0.0, k, l, res.t)
    dev = float(np.max(np.abs(res.n_mean - lin.n) / np.maximum(lin.n, 1e-12)))
    # supplementary: same curve against the generator's own effective
    # linear coefficients (K = gamma_f, L = D - gamma_f/2)
    k_eff = spec.friction
    l_eff = spec.d_prime + spec.d_q - spec.friction / 2.0
    lin_eff = cooling.evolve_closed(nbar, 0.0, k_eff, l_eff, res.t)
    dev_eff = float(np.max(np.abs(res.n_mean - lin_eff.n)
                           / np.maximum(lin_eff.n, 1e-12)))
    ok = dev < 0.02
    out.append(AcceptanceResult(
        "4c oracle G=0 relaxation", ok, f"max rel dev {dev:.3f}",
        "< 2% vs linear closed form", time.time() - t0,
        note=(f"vs generator-effective coefficients (K=gamma_f, "
              f"L=D-gamma_f/2): {dev_eff:.4f}; printed master equation "
              f"relaxes at eta/m, reduced ODE at eta/2m"),
        expected_failure=not ok))
    return out


# -- 5: QSD / master equation equivalence ------------------------------------

def check_qsd(quick: bool = False) -> list:
    t0 = time.time()
    dim, nbar = 32, 2.0
    spec = oracle.LindbladSpec(omega_z=2.0 * math.pi, d_prime=0.06, d_q=0.02,
                               friction=0.12, gain=0.0, chi2flux=0.0)
    t_final = 3.0 / spec.friction
    n_traj = 60 if quick else 200
    dt = 2e-4
    ens = oracle.qsd_ensemble(spec, dim, nbar, n_traj, t_final, dt,
                              master_seed=777)
    me = oracle.evolve(oracle.thermal_state(dim, nbar), spec, t_final,
                       n_samples=60)
    n_me = np.interp(ens.t, me.t, me.n_mean)
    stderr = np.maximum(ens.n_stderr, 1e-12)
    z = np.abs(ens.n_mean - n_me) / stderr
    # compare away from t=0 (stderr vanishes at the deterministic start)
    zmax = float(np.max(z[1:]))
    ok = zmax <= 3.0
    return [AcceptanceResult(
        "5 QSD vs master equation", ok, f"max |z| {zmax:.2f}",
        "within 3 sigma at all checkpoints", time.time() - t0,
        f"{n_traj} trajectories, nbar={nbar}, dim={dim}")]


# -- 6: equipartition --------------------------------------------------------

def check_equipartition(quick: bool = False) -> list:
    t0 = time.time()
    cfg = fig3_config(pressure_mbar=10.0)
    cfg.simulation.trap_heating = False
    rates = params.derive_rates(cfg)
    dt = 2.0 * math.pi / (50.0 * rates.omega_z)
    n_damping = 1500 if quick else 12000
    tr = stochastic.simulate(rates, n_damping / rates.gamma0, dt=dt, seed=424)
    t_meas = stochastic.equipartition_temperature(rates, tr)
    dev = abs(t_meas - cfg.gas.temperature_K) / cfg.gas.temperature_K
    ok = dev < 0.03
    return [AcceptanceResult(
        "6 equipartition", ok, f"T = {t_meas:.1f} K (dev {dev:.3f})",
        "k_B T within 3%", time.time() - t0,
        f"{n_damping} damping times at 10 mbar")]


# -- 7: Lorentzian fit recovery ----------------------------------------------

def check_fit_recovery() -> list:
    t0 = time.time()
    cfg = fig3_config(pressure_mbar=10.0)
    rates = params.derive_rates(cfg)
    m = rates.mass
    w0 = rates.omega_z
    gamma = rates.gamma0
    s_force = rates.s_thermal
    floor_two = rates.length_z ** 2 / rates.chi2flux
    # band wide enough that the shot floor is identifiable beyond the
    # Lorentzian tail
    freq = np.linspace(1.0, 1.2e6, 6000)
    clean = spectra.position_psd_one_sided(freq, m, w0, gamma, s_force,
                                           floor_two)
    spec_clean = spectra.Spectrum(freq, clean, 1.0, "model", 1)
    fit0 = spectra.fit_lorentzian(spec_clean, m)
    exact_dev = max(abs(fit0.omega_z - w0) / w0,
                    abs(fit0.gamma - gamma) / gamma)
    n_true = (s_force / (m * HBAR * gamma * w0) - 1.0) / 2.0
    rng = np.random.default_rng(11)
    noisy = clean * (1.0 + 0.05 * rng.standard_normal(freq.size))
    fitn = spectra.fit_lorentzian(spectra.Spectrum(freq, noisy, 1.0,
                                                   "model", 1), m)
    dw = abs(fitn.omega_z - w0) / w0
    dg = abs(fitn.gamma - gamma) / gamma
    dn = abs(fitn.n_ss - n_true) / n_true
    ok = exact_dev < 1e-8 and dw < 0.005 and dg < 0.05 and dn < 0.05
    return [AcceptanceResult(
        "7 fit recovery", ok,
        f"noiseless {exact_dev:.2g}; noisy dw={dw:.4f} dG={dg:.4f} dN={dn:.4f}",
        "1e-8 noiseless; 0.5%/5%/5% noisy", time.time() - t0)]


# -- 8: pressure-sweep scaling -----------------------------------------------

def check_sweep_scaling() -> list:
    t0 = time.time()
    cfg = fig3_config(gain_policy="fixed_G", gain=0.0015)
    grid = np.geomspace(1e-3, 1e-2, 9)
    sweep = cooling.pressure_sweep(cfg, grid, "fixed_G")
    slope = float(np.polyfit(np.log10(sweep.pressures_mbar),
                             np.log10(sweep.n_ss), 1)[0])
    low = cooling.pressure_sweep(cfg, np.array([1e-12]), "fixed_G")
    rates = params.derive_rates(cfg)
    plateau_formula = math.sqrt((rates.a_t + rates.a_p)
                                / (2.0 * rates.j_rate))
    plat_dev = abs(low.n_ss[0] - plateau_formula) / plateau_formula
    ok = abs(slope - 0.5) <= 0.05 and plat_dev < 0.01
    return [AcceptanceResult(
        "8 pressure-sweep scaling", ok,
        f"slope {slope:.3f}, plateau dev {plat_dev:.4f}",
        "slope 0.5 +/- 0.05; plateau within 1%", time.time() - t0,
        f"plateau {low.n_ss[0]:.1f} vs sqrt((A_t+A_p)/2J) = "
        f"{plateau_formula:.1f}")]


# -- 9: ground-state feasibility ---------------------------------------------

def check_ground_state() -> list:
    t0 = time.time()
    cfg = fig3_config(pressure_mbar=1e-5, temperature_K=4.0)
    rep = cooling.ground_state_feasibility(cfg, 0.1)
    ok = rep.n_min < 1.0
    note = (f"photon-recoil plateau {rep.plateau:.1f}; "
            f"pressure for N<1: {rep.pressure_for_ground_state_mbar}")
    return [AcceptanceResult(
        "9 ground-state feasibility", ok, f"N_ss = {rep.n_min:.2f}",
        "< 1 at 4 K, M<=10%, P<=1e-5 mbar", time.time() - t0, note,
        expected_failure=not ok)]


# -- 10: determinism ----------------------------------------------------------

def check_determinism() -> list:
    t0 = time.time()
    cfg = fig3_config(pressure_mbar=1.0, gain_policy="fixed_G", gain=1e-3)
    rates = params.derive_rates(cfg)
    dur = 200.0 * 2.0 * math.pi / rates.omega_z
    dt = 2.0 * math.pi / (50.0 * rates.omega_z)
    e1 = stochastic.ensemble(rates, 6, dur, dt=dt, master_seed=99, threads=1)
    e2 = stochastic.ensemble(rates, 6, dur, dt=dt, master_seed=99, threads=4)
    same = (np.array_equal(e1.n_mean, e2.n_mean)
            and np.array_equal(e1.q_mean, e2.q_mean)
            and np.array_equal(e1.q_var, e2.q_var))
    t1 = stochastic.simulate(rates, dur, seed=5)
    t2 = stochastic.simulate(rates, dur, seed=5)
    same = same and np.array_equal(t1.i_h, t2.i_h)
    return [AcceptanceResult(
        "10 determinism", same, "bit-identical" if same else "MISMATCH",
        "identical across thread counts / reruns", time.time() - t0)]


# -- quick identity checks (validate --quick) ---------------------------------

def check_identities() -> list:
    t0 = time.time()
    notes = []
    ok = True
    p = params.derive_particle(50e-9, 2200.0, 2.1)
    ok &= abs(p.mass - 1.1519173063162574e-18) < 1e-30
    ok &= abs(p.epsilon_c - 3 * 1.1 / 4.1) < 1e-15
    rng = np.random.default_rng(4)
    for _ in range(3):
        eta = 10.0 ** rng.uniform(-20, -12)
        mass = 10.0 ** rng.uniform(-19, -16)
        temp = rng.uniform(4.0, 600.0)
        lz = 10.0 ** rng.uniform(-12, -10)
        dp, dq = params.brownian_coefficients(eta, temp, mass, lz)
        ident = dp * dq / (eta ** 2 / (12.0 * mass ** 2))
        ok &= abs(ident - 1.0) < 1e-12
    ok &= abs(params.knudsen_correction(1e-6) - 1.0) < 1e-4
    fock3 = oracle.FockState(8, np.diag([0, 0, 0, 1, 0, 0, 0, 0]).astype(complex))
    ok &= abs(oracle.closure_residual(fock3) - 12.0 / 9.0) < 1e-12
    w_opt, over = spectra.optimal_frequency(1.0, 1.0)
    ok &= abs(w_opt - 1.0 / math.sqrt(2.0)) < 1e-15 and not over
    if not ok:
        notes.append("identity failure")
    return [AcceptanceResult(
        "quick identities", bool(ok), "all identities hold" if ok else "FAIL",
        "exact formula identities", time.time() - t0, "; ".join(notes))]


ALL_CHECKS = [check_sql, check_optimal_gain, check_closed_vs_ode,
              check_oracle, check_qsd, check_equipartition,
              check_fit_recovery, check_sweep_scaling, check_ground_state,
              check_determinism]

QUICK_CHECKS = [check_identities, check_optimal_gain, check_closed_vs_ode]


def run_all(quick: bool = False) -> list:
    results = []
    if quick:
        for fn in QUICK_CHECKS:
            results.extend(fn())
        return results
    for fn in ALL_CHECKS:
        try:
            if fn in (check_sql, check_oracle, check_qsd, check_equipartition):
                results.extend(fn(quick=False))
            else:
                results.extend(fn())
        except Exception as exc:  # a crashed criterion is a failed criterion
            results.append(AcceptanceResult(
                fn.__name__, False, f"error: {exc}", "no exception", 0.0))
    return results
