import math

import numpy as np
import pytest

from levicool import cooling, oracle
from levicool.constants import HBAR, K_B


def brownian_spec(omega=2 * math.pi, d_prime=0.1, d_q=0.0, friction=0.1,
                  gain=0.0, chi2flux=0.0):
    return oracle.LindbladSpec(omega_z=omega, d_prime=d_prime, d_q=d_q,
                               friction=friction, gain=gain,
                               chi2flux=chi2flux)


class TestThermalState:
    def test_vacuum(self):
        st = oracle.thermal_state(16, 0.0)
        assert st.rho[0, 0] == 1.0
        assert st.trace == pytest.approx(1.0)

    def test_moment_closure(self):
        st = oracle.thermal_state(64, 2.0)
        assert oracle.closure_residual(st) < 1e-6

    def test_truncated_trace_geometric_tail(self):
        st = oracle.thermal_state(64, 2.0, normalize=False)
        tail = (2.0 / 3.0) ** 64
        assert st.trace == pytest.approx(1.0 - tail, abs=1e-15)

    def test_mean_occupancy(self):
        st = oracle.thermal_state(96, 3.0)
        num = oracle.operators(96)["n"]
        assert st.expect(num) == pytest.approx(3.0, rel=1e-6)

    def test_validate_clean(self):
        assert oracle.thermal_state(32, 1.0).validate() == []


class TestClosureResidual:
    def test_fock_three(self):
        rho = np.zeros((8, 8), dtype=complex)
        rho[3, 3] = 1.0
        res = oracle.closure_residual(oracle.FockState(8, rho))
        assert res == pytest.approx(12.0 / 9.0, rel=1e-12)


class TestGenerator:
    def test_unitary_limit_keeps_populations(self):
        spec = brownian_spec(d_prime=0.0, d_q=0.0, friction=0.0)
        st = oracle.thermal_state(24, 1.5)
        res = oracle.evolve(st, spec, 3.0)
        np.testing.assert_allclose(np.diag(res.final.rho).real,
                                   np.diag(st.rho).real, atol=1e-10)

    def test_fock_populations_constant_under_unitary(self):
        spec = brownian_spec(d_prime=0.0, d_q=0.0, friction=0.0)
        rho = np.zeros((16, 16), dtype=complex)
        rho[1, 1] = 1.0
        res = oracle.evolve(oracle.FockState(16, rho), spec, 2.0)
        assert res.final.rho[1, 1].real == pytest.approx(1.0, abs=1e-10)

    def test_trace_free_on_random_hermitian(self):
        rng = np.random.default_rng(3)
        spec = brownian_spec(d_prime=0.3, d_q=0.01, friction=0.2,
                             gain=1 / 9, chi2flux=0.05)
        gen = oracle.build_generator(spec, 24)
        for _ in range(10):
            a = rng.normal(size=(24, 24)) + 1j * rng.normal(size=(24, 24))
            a = a + a.conj().T
            assert abs(np.trace(gen(a))) < 1e-12 * np.linalg.norm(a)

    def test_minimum_dimension(self):
        with pytest.raises(ValueError):
            oracle.build_generator(brownian_spec(), 4)

    def test_thermalization_toward_equipartition(self):
        # Brownian generator drives the vacuum toward k_B T / (hbar w):
        # rates chosen so D/gamma = nbar_target
        nbar_target = 2.5
        spec = brownian_spec(d_prime=0.25 * nbar_target, friction=0.25)
        res = oracle.evolve(oracle.thermal_state(48, 0.0), spec,
                            40.0 / spec.friction)
        assert res.n_mean[-1] == pytest.approx(nbar_target, rel=0.25)


class TestEvolve:
    def test_trace_and_positivity_maintained(self):
        spec = brownian_spec(d_prime=0.1, friction=0.1)
        res = oracle.evolve(oracle.thermal_state(48, 3.0), spec, 10.0)
        assert res.trace_err.max() < 1e-8
        probs = res.final.validate()
        assert probs == []

    def test_linear_branch_vs_generator_effective_ode(self):
        # with the oracle's own effective coefficients (K = gamma_f,
        # L = D - gamma_f/2) the curve is exponential to high accuracy
        spec = brownian_spec(d_prime=0.05, friction=0.05)
        res = oracle.evolve(oracle.thermal_state(64, 5.0), spec, 60.0)
        k_eff = spec.friction
        l_eff = spec.d_prime - spec.friction / 2.0
        lin = cooling.evolve_closed(5.0, 0.0, k_eff, l_eff, res.t)
        dev = np.max(np.abs(res.n_mean - lin.n) / np.maximum(lin.n, 1e-12))
        assert dev < 0.02

    @pytest.mark.xfail(reason="printed master equation relaxes <N> at "
                              "eta_f/m while the reduced ODE uses "
                              "eta_f/2m; see decision log", strict=False)
    def test_linear_branch_vs_printed_ode(self):
        spec = brownian_spec(d_prime=0.05, friction=0.05)
        res = oracle.evolve(oracle.thermal_state(64, 2.0), spec,
                            3.0 / (spec.friction / 2))
        j, k, l = spec.phonon_ode_coefficients()
        lin = cooling.evolve_closed(2.0, 0.0, k, l, res.t)
        dev = np.max(np.abs(res.n_mean - lin.n) / np.maximum(lin.n, 1e-12))
        assert dev < 0.02

    def test_instantaneous_rate_matches_ode(self):
        st = oracle.thermal_state(64, 5.0)
        for gain in (0.0, 1.0 / 9.0):
            spec = brownian_spec(d_prime=12.0, friction=0.05, gain=gain,
                                 chi2flux=0.02)
            rate = oracle.instantaneous_rate(st, spec)
            pred = spec.phonon_ode_rhs(5.0)
            assert rate == pytest.approx(pred, rel=0.05)

    def test_feedback_cools(self):
        spec = brownian_spec(d_prime=0.02, friction=0.02, gain=1 / 9,
                             chi2flux=0.05)
        res = oracle.evolve(oracle.thermal_state(64, 5.0), spec, 8.0)
        assert res.n_mean[-1] < 2.5

    def test_closure_residual_small_over_validated_window(self):
        # thermal start stays close to the closure along the full generator
        spec = brownian_spec(d_prime=0.05, friction=0.05, gain=1 / 9,
                             chi2flux=0.02)
        res = oracle.evolve(oracle.thermal_state(64, 5.0), spec, 20.0)
        assert np.max(res.closure) < 0.1

    def test_truncation_convergence(self):
        spec = brownian_spec(d_prime=0.3, friction=0.1)
        n_small = oracle.evolve(oracle.thermal_state(40, 2.0), spec,
                                5.0).n_mean[-1]
        n_large = oracle.evolve(oracle.thermal_state(80, 2.0), spec,
                                5.0).n_mean[-1]
        assert abs(n_small - n_large) / n_large < 1e-4

    def test_tail_gate_raises(self):
        spec = brownian_spec(d_prime=0.5, friction=0.01)
        with pytest.raises(oracle.TruncationError, match="dimension"):
            oracle.evolve(oracle.thermal_state(12, 5.0), spec, 50.0)


class TestQsd:
    def test_zero_noise_reduces_to_schroedinger(self):
        spec = brownian_spec(d_prime=0.0, d_q=0.0, friction=0.0)
        psi0 = np.zeros(16, dtype=complex)
        psi0[2] = 1.0
        res = oracle.qsd_trajectory(psi0, spec, 2.0, 1e-3, seed=1)
        assert res.max_norm_drift < 1e-12
        np.testing.assert_allclose(res.n_mean, 2.0, atol=1e-10)

    def test_wiener_increment_statistics(self):
        spec = brownian_spec(d_prime=0.2, d_q=0.01, friction=0.1)
        psi0 = np.zeros(24, dtype=complex)
        psi0[1] = 1.0
        dt = 1e-3
        res = oracle.qsd_trajectory(psi0, spec, 20.0, dt, seed=2)
        dw = res.increments
        n = dw.size
        assert abs(dw.mean()) < 4 * math.sqrt(dt / n)
        assert np.mean(np.abs(dw) ** 2) == pytest.approx(dt, rel=0.05)
        assert abs(np.mean(dw ** 2)) < 5 * dt / math.sqrt(n)

    def test_deterministic_given_seed(self):
        spec = brownian_spec(d_prime=0.1, d_q=0.01, friction=0.1)
        psi0 = np.zeros(16, dtype=complex)
        psi0[0] = 1.0
        a = oracle.qsd_trajectory(psi0, spec, 1.0, 1e-3, seed=5, sub_index=3)
        b = oracle.qsd_trajectory(psi0, spec, 1.0, 1e-3, seed=5, sub_index=3)
        np.testing.assert_array_equal(a.n_mean, b.n_mean)

    def test_feedback_not_unravelable(self):
        spec = brownian_spec(gain=1 / 9, chi2flux=0.1)
        psi0 = np.zeros(16, dtype=complex)
        psi0[0] = 1.0
        with pytest.raises(NotImplementedError):
            oracle.qsd_trajectory(psi0, spec, 1.0, 1e-3)

    def test_cp_violation_rejected(self):
        # friction too strong for the available position diffusion
        spec = brownian_spec(d_prime=1e-4, d_q=0.0, friction=1.0)
        psi0 = np.zeros(16, dtype=complex)
        psi0[0] = 1.0
        with pytest.raises(ValueError, match="positiv"):
            oracle.qsd_trajectory(psi0, spec, 1.0, 1e-4)

    def test_coarse_dt_rejected(self):
        spec = brownian_spec(d_prime=50.0, friction=1.0, d_q=1.0)
        psi0 = np.zeros(32, dtype=complex)
        psi0[10] = 1.0
        with pytest.raises(oracle.NormDriftError):
            oracle.qsd_trajectory(psi0, spec, 1.0, 0.05)

    def test_ensemble_matches_master_equation(self):
        spec = brownian_spec(d_prime=0.06, d_q=0.02, friction=0.12)
        dim, nbar = 32, 2.0
        ens = oracle.qsd_ensemble(spec, dim, nbar, 60, 12.0, 5e-4,
                                  master_seed=42)
        me = oracle.evolve(oracle.thermal_state(dim, nbar), spec, 12.0)
        n_me = np.interp(ens.t, me.t, me.n_mean)
        z = np.abs(ens.n_mean - n_me) / np.maximum(ens.n_stderr, 1e-9)
        assert np.max(z[1:]) < 4.0
        # ensemble density matrix agrees entrywise within sampling error
        assert np.max(np.abs(ens.rho_mean_final
                             - me.final.rho)) < 6.0 / math.sqrt(60)

    def test_ensemble_determinism(self):
        spec = brownian_spec(d_prime=0.06, d_q=0.02, friction=0.12)
        a = oracle.qsd_ensemble(spec, 16, 1.0, 4, 2.0, 1e-3, master_seed=9)
        b = oracle.qsd_ensemble(spec, 16, 1.0, 4, 2.0, 1e-3, master_seed=9)
        np.testing.assert_array_equal(a.n_mean, b.n_mean)
