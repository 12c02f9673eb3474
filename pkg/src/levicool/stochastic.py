"""Time-domain Langevin simulation of the mechanical quadratures.

The quadratures obey

    dQ = w_z P dt
    dP = (-w_z Q - Gamma P) dt + dF / (m w_z l_z),

with Gamma = Gamma_0 + dGamma(N) and two independent white forces: thermal
(strength S_T) and feedback backaction (strength S_F(N)).  The state-dependent
coefficients are frozen over one control interval, within which the system is
an exactly solvable Gaussian process; each step therefore applies the exact
transition kernel

    z' = E z + xi,   E = exp(M dt),   xi ~ N(0, Sigma_s - E Sigma_s E^T),

with Sigma_s = s_p/(2 Gamma) I the stationary covariance of the frozen system.
This keeps every run unbiased at any step size (a fixed-increment
Euler-Maruyama step at the same dt would inflate the steady-state energy by
the factor 1/(1 - w_z^2 dt / Gamma), which is far outside the acceptance
tolerances for underdamped runs).
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constants import K_B
from .params import DerivedRates, feedback_damping, feedback_force_noise


@dataclass(frozen=True)
class NoiseModel:
    """Force-noise strengths and total damping at a given occupancy."""
    s_thermal: float          # N^2 s
    s_feedback: float         # N^2 s
    shot_scale: float         # sqrt(chi^2 Phi), 1/sqrt(s)
    gamma: float              # rad/s, Gamma_0 + delta Gamma


def noise_model(rates: DerivedRates, occupancy: float,
                gain: float | None = None) -> NoiseModel:
    g = rates.gain if gain is None else gain
    s_f = feedback_force_noise(rates.mass, rates.omega_z, rates.chi2flux,
                               g, occupancy)
    dg = feedback_damping(rates.chi2flux, g, occupancy)
    return NoiseModel(rates.s_thermal, s_f, math.sqrt(rates.chi2flux),
                      rates.gamma0 + dg)


@dataclass
class Trajectory:
    dt: float
    t: np.ndarray
    q_quad: np.ndarray        # Q_z, dimensionless
    p_quad: np.ndarray        # P_z, dimensionless
    q_m: np.ndarray           # position, meters
    i_h: np.ndarray           # homodyne current
    n_est: np.ndarray         # running energy estimate
    master_seed: int
    sub_seed: tuple
    diagnostics: dict = field(default_factory=dict)


def _propagator(omega: float, gamma: float, dt: float):
    """Exact 2x2 transition matrix of the damped quadrature rotation."""
    wd = cmath.sqrt(omega ** 2 - gamma ** 2 / 4.0)
    e = cmath.exp(-gamma * dt / 2.0)
    if abs(wd) < 1e-300:
        c, s_over = e * 1.0, e * dt
    else:
        c = e * cmath.cos(wd * dt)
        s_over = e * cmath.sin(wd * dt) / wd
    # exp(M dt) = e^{-G t/2}[cos(wd t) I + sin(wd t)/wd (M + G/2 I)]
    m00 = c + (gamma / 2.0) * s_over
    m01 = omega * s_over
    m10 = -omega * s_over
    m11 = c - (gamma / 2.0) * s_over
    return np.array([[m00.real, m01.real], [m10.real, m11.real]])


def _noise_cov(E: np.ndarray, gamma: float, s_p: float):
    """Transition noise covariance Sigma_s - E Sigma_s E^T for P-only input."""
    if s_p == 0.0:
        return np.zeros((2, 2))
    sig = s_p / (2.0 * gamma)
    return sig * (np.eye(2) - E @ E.T)


def _chol2(S: np.ndarray):
    a = math.sqrt(max(S[0, 0], 0.0))
    if a == 0.0:
        return 0.0, 0.0, math.sqrt(max(S[1, 1], 0.0))
    b = S[1, 0] / a
    c = math.sqrt(max(S[1, 1] - b * b, 0.0))
    return a, b, c


def required_dt(omega_z: float) -> float:
    """Coarsest admissible control interval, 1/(50 f_z)."""
    return 2.0 * math.pi / (50.0 * omega_z)


def simulate(rates: DerivedRates, duration: float, dt: float | None = None,
             seed: int = 0, sub_index: int = 0, n0: float | None = None,
             initial: tuple | None = None, gain: float | None = None,
             diagnostics: bool = False) -> Trajectory:
    """Integrate one stochastic trajectory.

    The feedback damping and noise are re-evaluated from the running
    occupancy estimate once per step (= control interval).  Reproducible
    bit-exactly from (rates, seed, sub_index, dt).
    """
    omega = rates.omega_z
    lz = rates.length_z
    mwl = rates.mass * omega * lz
    if dt is None:
        dt = 2.0 * math.pi / (200.0 * omega)
    dt_max = required_dt(omega)
    if dt > dt_max * (1 + 1e-12):
        raise ValueError(f"dt={dt:g} too coarse; need dt <= {dt_max:g} "
                         f"(1/(50 f_z))")
    n_steps = int(round(duration / dt))
    if n_steps < 1:
        raise ValueError("duration shorter than one step")

    g = rates.gain if gain is None else gain
    g2phi = rates.chi2flux
    s_t = rates.s_thermal
    gamma0 = rates.gamma0
    mass = rates.mass
    occ0 = rates.n0 if n0 is None else n0

    ss = np.random.SeedSequence(entropy=seed, spawn_key=(sub_index,))
    rng = np.random.default_rng(ss)

    if initial is None:
        sigma0 = math.sqrt(2.0 * occ0 + 1.0)
        q = sigma0 * rng.standard_normal()
        p = sigma0 * rng.standard_normal()
    else:
        q, p = float(initial[0]), float(initial[1])

    # EMA over ten oscillation periods: slow vs the cycle, fast vs cooling
    tau_n = 10.0 * 2.0 * math.pi / omega
    ema = math.exp(-dt / tau_n)
    n_est = max((q * q + p * p - 2.0) / 4.0, 0.0)

    t = np.arange(n_steps + 1) * dt
    qs = np.empty(n_steps + 1)
    ps = np.empty(n_steps + 1)
    ih = np.empty(n_steps + 1)
    ns = np.empty(n_steps + 1)
    qs[0], ps[0], ns[0] = q, p, n_est
    shot = math.sqrt(g2phi / dt) if g2phi > 0 else 0.0
    ih[0] = g2phi * q + shot * rng.standard_normal()

    diag = {"gamma": [], "s_f": [], "f_t": [], "f_f": []} if diagnostics else None

    z = np.array([q, p])
    for k in range(1, n_steps + 1):
        dgamma = feedback_damping(g2phi, g, n_est)
        s_f = feedback_force_noise(mass, omega, g2phi, g, n_est)
        gamma = gamma0 + dgamma
        E = _propagator(omega, gamma, dt)
        if gamma > 0:
            cov_t = _noise_cov(E, gamma, s_t / mwl ** 2)
            cov_f = _noise_cov(E, gamma, s_f / mwl ** 2)
        else:
            cov_t = np.diag([0.0, s_t / mwl ** 2 * dt])
            cov_f = np.diag([0.0, s_f / mwl ** 2 * dt])
        xi_t = rng.standard_normal(2)
        xi_f = rng.standard_normal(2)
        a, b, c = _chol2(cov_t)
        w_t = np.array([a * xi_t[0], b * xi_t[0] + c * xi_t[1]])
        a, b, c = _chol2(cov_f)
        w_f = np.array([a * xi_f[0], b * xi_f[0] + c * xi_f[1]])
        z = E @ z + w_t + w_f
        if not (math.isfinite(z[0]) and math.isfinite(z[1])):
            raise FloatingPointError(f"non-finite state at step {k}")
        inst = max((z[0] ** 2 + z[1] ** 2 - 2.0) / 4.0, 0.0)
        n_est = ema * n_est + (1.0 - ema) * inst
        qs[k], ps[k], ns[k] = z[0], z[1], n_est
        ih[k] = g2phi * z[0] + shot * rng.standard_normal()
        if diagnostics:
            diag["gamma"].append(gamma)
            diag["s_f"].append(s_f)
            diag["f_t"].append(w_t[1])
            diag["f_f"].append(w_f[1])

    traj = Trajectory(dt=dt, t=t, q_quad=qs, p_quad=ps, q_m=lz * qs, i_h=ih,
                      n_est=ns, master_seed=seed, sub_seed=(seed, sub_index))
    if diagnostics:
        traj.diagnostics = {k: np.array(v) for k, v in diag.items()}
    return traj


def homodyne_current(traj: Trajectory, chi: float, flux: float,
                     seed: int = 0) -> np.ndarray:
    """Synthesize a homodyne record I_h = chi^2 Phi Q(t) + sqrt(chi^2 Phi) xi
    from an existing trajectory, with measurement noise independent of the
    dynamical noise streams."""
    g2phi = chi ** 2 * flux
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0x4821,)))
    if g2phi == 0.0:
        return np.zeros_like(traj.q_quad)
    shot = math.sqrt(g2phi / traj.dt)
    return g2phi * traj.q_quad + shot * rng.standard_normal(traj.q_quad.size)


@dataclass
class EnsembleStats:
    t: np.ndarray
    q_mean: np.ndarray
    q_var: np.ndarray
    p_mean: np.ndarray
    p_var: np.ndarray
    n_mean: np.ndarray
    n_var: np.ndarray
    n_traj: int
    master_seed: int


def ensemble(rates: DerivedRates, n_traj: int, duration: float,
             dt: float | None = None, master_seed: int = 0,
             threads: int | None = None, **kwargs) -> EnsembleStats:
    """Ensemble statistics over independent trajectories.

    Trajectory i uses the sub-seed (master_seed, i); the reduction runs in
    index order, so the result is independent of thread count and scheduling.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")

    def run(i):
        return simulate(rates, duration, dt=dt, seed=master_seed,
                        sub_index=i, **kwargs)

    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            trajs = list(ex.map(run, range(n_traj)))
    else:
        trajs = [run(i) for i in range(n_traj)]

    qs = np.stack([tr.q_quad for tr in trajs])
    ps = np.stack([tr.p_quad for tr in trajs])
    ns = np.stack([tr.n_est for tr in trajs])
    ddof = 1 if n_traj > 1 else 0
    return EnsembleStats(
        t=trajs[0].t,
        q_mean=qs.mean(axis=0), q_var=qs.var(axis=0, ddof=ddof),
        p_mean=ps.mean(axis=0), p_var=ps.var(axis=0, ddof=ddof),
        n_mean=ns.mean(axis=0), n_var=ns.var(axis=0, ddof=ddof),
        n_traj=n_traj, master_seed=master_seed,
    )


def equipartition_temperature(rates: DerivedRates, traj: Trajectory,
                              skip: float = 0.1) -> float:
    """Time-averaged m w_z^2 <q^2> / k_B over the trajectory tail."""
    i0 = int(skip * traj.q_m.size)
    q2 = float(np.mean(traj.q_m[i0:] ** 2))
    return rates.mass * rates.omega_z ** 2 * q2 / K_B
