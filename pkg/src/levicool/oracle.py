"""Brute-force Fock-space evolution of the reduced master equation.

The mechanical mode (probe already traced out; its effect folded into the
rates) evolves under

    drho/dt = -i w_z [N, rho] - (D_p'/2) D[Q] rho - (D_q/2) D[P] rho
              - i (gamma_f/4) [Q, {P, rho}]
              - i chi^2 Phi G [Q^3, {P, rho}] - (chi^2 Phi G^2 / 2) D[Q^3] rho,

with D[A] rho = A'A rho + rho A'A - 2 A rho A' (note: twice the standard
dissipator) and Q = b' + b, P = i(b' - b).  This is the validation oracle for
the closed phonon ODE: no thermal-state closure is assumed here.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .params import DerivedRates


class TruncationError(RuntimeError):
    pass


class NormDriftError(RuntimeError):
    pass


@dataclass(frozen=True)
class LindbladSpec:
    """Rates entering the reduced master equation (all in the same units)."""
    omega_z: float
    d_prime: float            # positional decoherence D_p + A_t + A_p
    d_q: float                # position diffusion
    friction: float           # gamma_f: coefficient of -i(gamma_f/4)[Q,{P,rho}]
    gain: float               # feedback gain G
    chi2flux: float           # chi^2 Phi

    @classmethod
    def from_rates(cls, rates: DerivedRates, gain: float | None = None):
        return cls(omega_z=rates.omega_z, d_prime=rates.diffusion_prime,
                   d_q=rates.d_q, friction=rates.eta_f / rates.mass,
                   gain=rates.gain if gain is None else gain,
                   chi2flux=rates.chi2flux)

    def phonon_ode_coefficients(self):
        """(J, K, L) of the reduced phonon ODE for these rates."""
        j = (12.0 * self.gain - 54.0 * self.gain ** 2) * self.chi2flux
        k = self.friction / 2.0 + j
        l = (self.d_prime + self.d_q) - j / 2.0
        return j, k, l

    def phonon_ode_rhs(self, n: float) -> float:
        j, k, l = self.phonon_ode_coefficients()
        return -2.0 * j * n * n - (j + k) * n + l


@dataclass
class FockState:
    """Truncated density matrix with its health indicators."""
    dim: int
    rho: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.rho)))

    @property
    def tail(self) -> float:
        return float(np.real(self.rho[-1, -1]))

    def expect(self, op: np.ndarray) -> float:
        return float(np.real(np.trace(op @ self.rho)))

    def validate(self, trace_tol=1e-8, herm_tol=1e-10, eig_tol=1e-8):
        problems = []
        if abs(self.trace - 1.0) > trace_tol:
            problems.append(f"trace deviates by {abs(self.trace - 1):.2e}")
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > herm_tol:
            problems.append(f"hermiticity violated by {herm:.2e}")
        w = np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))
        if w.min() < -eig_tol:
            problems.append(f"negative eigenvalue {w.min():.2e}")
        return problems


@lru_cache(maxsize=8)
def operators(dim: int):
    """Mode operators on the truncated space, built once per dimension."""
    n = np.arange(dim)
    b = np.diag(np.sqrt(n[1:]).astype(complex), 1)
    bd = b.conj().T
    num = bd @ b
    q = b + bd
    p = 1j * (bd - b)
    q3 = q @ q @ q
    return {"b": b, "bd": bd, "n": num, "q": q, "p": p,
            "q2": q @ q, "q3": q3, "q6": q3 @ q3, "p2": p @ p,
            "n2": num @ num}


def thermal_state(dim: int, nbar: float, normalize: bool = True) -> FockState:
    """Diagonal geometric (thermal) state.

    The raw truncated state has trace 1 - (nbar/(nbar+1))^dim; by default it
    is renormalized on the truncated space so downstream trace monitoring
    starts from exactly 1.
    """
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    if nbar == 0:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return FockState(dim, rho)
    r = nbar / (nbar + 1.0)
    p = r ** np.arange(dim) / (nbar + 1.0)
    if normalize:
        p = p / p.sum()
    return FockState(dim, np.diag(p.astype(complex)))


def closure_residual(state: FockState) -> float:
    """Relative residual of the thermal-closure identity <N^2> = 2<N>^2 + <N>."""
    ops = operators(state.dim)
    n1 = state.expect(ops["n"])
    n2 = state.expect(ops["n2"])
    return abs(n2 - 2.0 * n1 ** 2 - n1) / max(n2, 1.0)


def build_generator(spec: LindbladSpec, dim: int):
    """Right-hand side rho -> L[rho] of the reduced master equation."""
    if dim < 8:
        raise ValueError("need dim >= 8")
    ops = operators(dim)
    q, p, q2, q3, q6 = ops["q"], ops["p"], ops["q2"], ops["q3"], ops["q6"]
    num = ops["n"]
    w = spec.omega_z
    dp2 = spec.d_prime / 2.0
    dq2 = spec.d_q / 2.0
    fr4 = spec.friction / 4.0
    gg = spec.chi2flux * spec.gain
    gg2 = spec.chi2flux * spec.gain ** 2 / 2.0

    def gen(rho: np.ndarray) -> np.ndarray:
        out = -1j * w * (num @ rho - rho @ num)
        if dp2:
            out -= dp2 * (q2 @ rho + rho @ q2 - 2.0 * (q @ rho @ q))
        if dq2:
            p2 = ops["p2"]
            out -= dq2 * (p2 @ rho + rho @ p2 - 2.0 * (p @ rho @ p))
        if fr4:
            prp = p @ rho + rho @ p
            out -= 1j * fr4 * (q @ prp - prp @ q)
        if gg:
            prp = p @ rho + rho @ p
            out -= 1j * gg * (q3 @ prp - prp @ q3)
        if gg2:
            out -= gg2 * (q6 @ rho + rho @ q6 - 2.0 * (q3 @ rho @ q3))
        return out

    return gen


def _rate_scale(spec: LindbladSpec, dim: int) -> float:
    """Crude spectral-radius bound used to pick a stable RK4 step."""
    s = 2.0 * math.sqrt(dim)          # ||Q|| ~ ||P|| on the truncated space
    return (spec.omega_z * (dim - 1)
            + spec.d_prime * s ** 2 + spec.d_q * s ** 2
            + spec.friction * s ** 2 / 2.0
            + 2.0 * spec.chi2flux * spec.gain * s ** 4
            + spec.chi2flux * spec.gain ** 2 * s ** 6 / 2.0)


@dataclass
class EvolveResult:
    t: np.ndarray
    n_mean: np.ndarray
    n2_mean: np.ndarray
    closure: np.ndarray
    trace_err: np.ndarray
    tail: np.ndarray
    final: FockState
    dt: float


def evolve(state: FockState, spec: LindbladSpec, t_final: float,
           dt: float | None = None, n_samples: int = 60,
           tail_tol: float = 1e-5) -> EvolveResult:
    """Fixed-step RK4 integration of the master equation.

    Monitors trace, hermiticity, the closure residual and the truncation
    tail; a tail weight above ``tail_tol`` raises TruncationError advising a
    larger dimension.
    """
    dim = state.dim
    gen = build_generator(spec, dim)
    if dt is None:
        dt = 2.5 / _rate_scale(spec, dim)
    steps = max(int(math.ceil(t_final / dt)), 1)
    dt = t_final / steps
    sample_every = max(steps // max(n_samples, 1), 1)
    ops = operators(dim)
    num, n2op = ops["n"], ops["n2"]

    rho = state.rho.astype(complex).copy()
    ts, n1s, n2s, clos, trs, tails = [], [], [], [], [], []

    def record(k, rho):
        ts.append(k * dt)
        tr = float(np.real(np.trace(rho)))
        n1 = float(np.real(np.trace(num @ rho)))
        n2 = float(np.real(np.trace(n2op @ rho)))
        n1s.append(n1)
        n2s.append(n2)
        clos.append(abs(n2 - 2 * n1 ** 2 - n1) / max(n2, 1.0))
        trs.append(abs(tr - 1.0))
        tails.append(float(np.real(rho[-1, -1])))
        if tails[-1] > tail_tol:
            raise TruncationError(
                f"truncation tail {tails[-1]:.2e} > {tail_tol:.0e} at "
                f"t={ts[-1]:.3g}; increase the Fock dimension beyond {dim}")

    record(0, rho)
    for k in range(1, steps + 1):
        k1 = gen(rho)
        k2 = gen(rho + 0.5 * dt * k1)
        k3 = gen(rho + 0.5 * dt * k2)
        k4 = gen(rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)   # clip roundoff asymmetry
        if k % sample_every == 0 or k == steps:
            record(k, rho)

    return EvolveResult(np.array(ts), np.array(n1s), np.array(n2s),
                        np.array(clos), np.array(trs), np.array(tails),
                        FockState(dim, rho), dt)


def instantaneous_rate(state: FockState, spec: LindbladSpec) -> float:
    """d<N>/dt evaluated directly from the generator at this state."""
    gen = build_generator(spec, state.dim)
    num = operators(state.dim)["n"]
    return float(np.real(np.trace(num @ gen(state.rho))))


# ---------------------------------------------------------------------------
# quantum-state-diffusion unraveling

def _qsd_lindblad_ops(spec: LindbladSpec, dim: int):
    """Lindblad operators reproducing the G = 0 generator exactly.

    The friction term is not a dissipator on its own; combined with the
    position decoherence it Lindbladizes as L1 = sqrt(D_p') Q +
    i (gamma_f / 4 sqrt(D_p')) P plus a Hamiltonian correction
    (gamma_f/8){Q,P}, leaving D_q - gamma_f^2/(16 D_p') of plain P diffusion.
    The feedback superoperator has no such completion (it is not CP by
    itself), so the unraveling is provided for the Brownian/scattering part;
    feedback validation goes through evolve() instead.
    """
    if spec.gain * spec.chi2flux != 0.0:
        raise NotImplementedError(
            "QSD unraveling covers the G = 0 (Brownian + scattering) "
            "generator; validate feedback dynamics with evolve()")
    ops = operators(dim)
    q, p = ops["q"], ops["p"]
    h_corr = np.zeros((dim, dim), dtype=complex)
    lindblads = []
    if spec.d_prime > 0:
        a = math.sqrt(spec.d_prime)
        b = spec.friction / (4.0 * a)
        lindblads.append(a * q + 1j * b * p)
        h_corr = (spec.friction / 8.0) * (q @ p + p @ q)
        leftover = spec.d_q - spec.friction ** 2 / (16.0 * spec.d_prime)
        if leftover < -1e-15 * max(spec.d_q, 1.0):
            raise ValueError("rates violate complete positivity: "
                             "D_q < gamma_f^2 / (16 D_p')")
        if leftover > 0:
            lindblads.append(math.sqrt(leftover) * p)
    elif spec.friction > 0:
        raise ValueError("friction without position decoherence is not "
                         "completely positive; cannot unravel")
    elif spec.d_q > 0:
        lindblads.append(math.sqrt(spec.d_q) * p)
    return h_corr, lindblads


@dataclass
class QsdResult:
    t: np.ndarray
    n_mean: np.ndarray
    psi_final: np.ndarray
    max_norm_drift: float     # largest total per-step drift (logged, spiky)
    increments: np.ndarray    # complex Wiener increments, first channel


def _qsd_evolve_batch(psi_batch, spec: LindbladSpec, t_final: float,
                      dt: float, rngs, n_samples: int = 60,
                      record_increments: bool = False, chunk: int = 2048):
    """Batched integrator of the diffusion equation

      |dpsi> = -i H dt |psi> + sum_j [ (<Lj'> Lj - Lj'Lj/2 - <Lj'><Lj>/2) dt
               + (Lj - <Lj>) dWj ] |psi>,

    with independent complex Wiener increments E[dW dW*] = dt.  The free
    rotation exp(-i w_z N dt) is applied exactly as diagonal half-steps
    around the Euler update of the dissipative terms (Strang split).  The
    norm is restored after every step.  The "dt too large" gate applies to
    the deterministic part of the step only: the stochastic norm kick is
    proportional to (|dW|^2 - dt) and has heavy tails at any step size, and
    the renormalization absorbs it by construction; a deterministic drift
    beyond 1e-3 per step is the genuine discretization-failure signal.

    Trajectory i consumes only rngs[i], in a fixed order, so results are
    identical however trajectories are grouped into batches.
    """
    psis = np.array(psi_batch, dtype=complex)
    n_traj, dim = psis.shape
    h_corr, lindblads = _qsd_lindblad_ops(spec, dim)
    n_diag = np.arange(dim, dtype=float)
    steps = max(int(math.ceil(t_final / dt)), 1)
    dt = t_final / steps
    sample_every = max(steps // max(n_samples, 1), 1)
    half_rot = np.exp(-0.5j * spec.omega_z * dt * n_diag)
    lds = [(L, L.conj().T @ L) for L in lindblads]
    n_ch = len(lds)
    use_corr = np.any(h_corr)

    ts = [0.0]
    ns = [np.einsum("ij,j,ij->i", psis.conj(), n_diag, psis).real.copy()]
    max_drift = 0.0
    incs = []
    scale = math.sqrt(dt / 2.0)
    k = 0
    while k < steps:
        m = min(chunk, steps - k)
        _check_det_drift(psis, spec, dt)
        # each trajectory's noise comes from its own generator, sequentially
        dws = np.empty((n_traj, m, max(n_ch, 1)), dtype=complex)
        for i, rng in enumerate(rngs):
            g = rng.standard_normal((m, n_ch, 2))
            dws[i] = scale * (g[..., 0] + 1j * g[..., 1])
        if record_increments and n_ch:
            incs.append(dws[0, :, 0].copy())
        for s in range(m):
            k += 1
            psis *= half_rot
            dpsi = np.zeros_like(psis)
            if use_corr:
                dpsi -= 1j * dt * (psis @ h_corr.T)
            for j, (L, LdL) in enumerate(lds):
                lpsi = psis @ L.T
                ell = np.einsum("ij,ij->i", psis.conj(), lpsi)
                ell_c = ell.conj()
                dpsi += ((ell_c[:, None] * lpsi
                          - 0.5 * (psis @ LdL.T)
                          - 0.5 * (ell_c * ell)[:, None] * psis) * dt)
                dpsi += (lpsi - ell[:, None] * psis) * dws[:, s, j, None]
            psis = half_rot * (psis + dpsi)
            nrm = np.linalg.norm(psis, axis=1)
            max_drift = max(max_drift, float(np.max(np.abs(nrm - 1.0))))
            psis /= nrm[:, None]
            if k % sample_every == 0 or k == steps:
                ts.append(k * dt)
                ns.append(np.einsum("ij,j,ij->i", psis.conj(), n_diag,
                                    psis).real.copy())
    return (np.array(ts), np.stack(ns, axis=1), psis, max_drift,
            np.concatenate(incs) if incs else np.array([], dtype=complex))


def qsd_trajectory(psi0, spec: LindbladSpec, t_final: float, dt: float,
                   seed: int = 0, sub_index: int = 0,
                   n_samples: int = 60) -> QsdResult:
    """One quantum-state-diffusion trajectory of the G = 0 generator.

    Deterministic given (seed, sub_index); see _qsd_evolve_batch for the
    scheme and the step-size gate.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("psi0 must be normalized")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(sub_index,)))
    t, ns, psis, drift, incs = _qsd_evolve_batch(
        psi0[None, :], spec, t_final, dt, [rng], n_samples,
        record_increments=True)
    return QsdResult(t, ns[0], psis[0], drift, incs)


def _check_det_drift(psis, spec: LindbladSpec, dt: float):
    """Gate on the deterministic per-step norm drift, (1/2)||(L-<L>)psi||^2 dt."""
    dim = psis.shape[1]
    _, lindblads = _qsd_lindblad_ops(spec, dim)
    worst = 0.0
    for L in lindblads:
        lpsi = psis @ L.T
        ell = np.einsum("ij,ij->i", psis.conj(), lpsi)
        dev = lpsi - ell[:, None] * psis
        worst = max(worst, 0.5 * float(np.max(
            np.einsum("ij,ij->i", dev.conj(), dev).real)) * dt)
    if worst > 1e-3:
        raise NormDriftError(
            f"deterministic norm drift {worst:.2e} per step > 1e-3; "
            f"reduce dt below {1e-3 * dt / worst:.2e}")


@dataclass
class QsdEnsemble:
    t: np.ndarray
    n_mean: np.ndarray
    n_stderr: np.ndarray
    rho_mean_final: np.ndarray
    n_traj: int
    max_norm_drift: float


def qsd_ensemble(spec: LindbladSpec, dim: int, nbar: float, n_traj: int,
                 t_final: float, dt: float, master_seed: int = 0,
                 threads: int | None = None) -> QsdEnsemble:
    """Ensemble of QSD trajectories from a thermal mixture.

    Trajectory i samples its initial Fock state and noise from generators
    keyed deterministically to (master_seed, i); the result is independent
    of how the batch is executed.  (``threads`` is accepted for interface
    symmetry; the batch runs vectorized.)
    """
    if n_traj < 2:
        raise ValueError("need n_traj >= 2")
    r = nbar / (nbar + 1.0) if nbar > 0 else 0.0
    probs = r ** np.arange(dim) / max(nbar + 1.0, 1.0)
    probs = probs / probs.sum()
    cdf = np.cumsum(probs)

    psis = np.zeros((n_traj, dim), dtype=complex)
    rngs = []
    for i in range(n_traj):
        rng0 = np.random.default_rng(
            np.random.SeedSequence(entropy=master_seed, spawn_key=(i, 0xF0)))
        n0 = int(np.searchsorted(cdf, rng0.random()))
        psis[i, n0] = 1.0
        rngs.append(np.random.default_rng(
            np.random.SeedSequence(entropy=master_seed, spawn_key=(i,))))
    t, ns, psis_f, drift, _ = _qsd_evolve_batch(psis, spec, t_final, dt,
                                                rngs)
    rho_mean = (psis_f.conj().T @ psis_f).T / n_traj
    return QsdEnsemble(t, ns.mean(axis=0),
                       ns.std(axis=0, ddof=1) / math.sqrt(n_traj),
                       rho_mean, n_traj, drift)
