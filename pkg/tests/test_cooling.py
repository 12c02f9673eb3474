import math

import numpy as np
import pytest

from levicool import cooling, params
from levicool.config import ExperimentConfig
from levicool.constants import HBAR, K_B


def coeffs(j=2.0, k=1.0, l=30.0):
    return j, k, l


class TestInitialOccupancy:
    def test_room_temperature_value(self):
        cfg = ExperimentConfig()
        cfg.simulation.trap_heating = False
        rates = params.derive_rates(cfg)
        occ = cooling.n0_initial(rates)
        assert occ.n0 == pytest.approx(1.64499624758e8, rel=1e-9)
        assert occ.t_eff == pytest.approx(300.0, rel=1e-12)
        assert occ.optical_part == 0.0

    def test_optical_part_dominates_at_cold_gas(self):
        cfg = ExperimentConfig()
        cfg.gas.temperature_K = 1e-3
        cfg.gas.pressure_mbar = 1e-9
        rates = params.derive_rates(cfg)
        occ = cooling.n0_initial(rates)
        assert occ.optical_part > 0
        assert occ.n0 == pytest.approx(
            rates.mass * (rates.a_t + rates.a_p) / rates.eta_f
            + occ.gas_part, rel=1e-12)

    def test_doubling_temperature_doubles_gas_part(self):
        cfg = ExperimentConfig()
        r1 = params.derive_rates(cfg)
        cfg.gas.temperature_K = 600.0
        r2 = params.derive_rates(cfg)
        g1 = cooling.n0_initial(r1).gas_part
        g2 = cooling.n0_initial(r2).gas_part
        assert g2 == pytest.approx(2 * g1, rel=1e-12)


class TestClosedForm:
    def test_initial_condition_exact(self):
        j, k, l = coeffs()
        for n0 in (0.0, 1.0, 5.0, 1e6):
            c = cooling.evolve_closed(n0, j, k, l, np.array([0.0, 1e-4]))
            assert c.n[0] == pytest.approx(n0, abs=1e-9 * max(n0, 1))

    def test_steady_state_is_quadratic_root(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            j = 10 ** rng.uniform(-3, 3)
            k = 10 ** rng.uniform(-3, 3)
            l = 10 ** rng.uniform(-3, 3)
            n_ss = cooling.steady_state(j, k, l).exact
            resid = -2 * j * n_ss ** 2 - (j + k) * n_ss + l
            assert abs(resid) < 1e-12 * max(l, (j + k) * n_ss)

    def test_infinite_time_limit_matches_steady_state(self):
        j, k, l = coeffs()
        tau = 2 / math.sqrt((j + k) ** 2 + 8 * j * l)
        c = cooling.evolve_closed(100.0, j, k, l, np.array([0.0, 60 * tau]))
        assert c.n[-1] == pytest.approx(cooling.steady_state(j, k, l).exact,
                                        rel=1e-12)

    def test_linear_branch(self):
        k, l, n0 = 0.7, 2.0, 50.0
        t = np.linspace(0, 10, 50)
        c = cooling.evolve_closed(n0, 0.0, k, l, t)
        assert c.branch == "linear"
        np.testing.assert_allclose(c.n, l / k + (n0 - l / k)
                                   * np.exp(-k * t), rtol=1e-12)

    def test_cooling_uses_coth_branch(self):
        j, k, l = coeffs()
        n_ss = cooling.steady_state(j, k, l).exact
        t = np.linspace(0, 5, 100)
        c = cooling.evolve_closed(10 * n_ss, j, k, l, t)
        assert c.branch == "coth"
        assert np.all(np.isfinite(c.n))

    def test_heating_uses_tanh_branch(self):
        j, k, l = coeffs()
        n_ss = cooling.steady_state(j, k, l).exact
        c = cooling.evolve_closed(0.2 * n_ss, j, k, l, np.linspace(0, 5, 100))
        assert c.branch == "tanh"

    def test_near_fixed_point_constant(self):
        j, k, l = coeffs()
        n_ss = cooling.steady_state(j, k, l).exact
        c = cooling.evolve_closed(n_ss * (1 + 1e-14), j, k, l,
                                  np.linspace(0, 5, 20))
        assert c.branch == "constant"
        np.testing.assert_allclose(c.n, n_ss, rtol=1e-12)

    def test_ode_residual_centered_differences(self):
        # 4th-order centered stencil so the differentiation error sits far
        # below the residual bound on a 1e3-point grid
        j, k, l = 0.5, 0.3, 8.0
        n0 = 4.0
        tau = 2 / math.sqrt((j + k) ** 2 + 8 * j * l)
        t = np.linspace(0, 3 * tau, 1001)
        c = cooling.evolve_closed(n0, j, k, l, t)
        dt = t[1] - t[0]
        n = c.n
        dn = (-n[4:] + 8 * n[3:-1] - 8 * n[1:-3] + n[:-4]) / (12 * dt)
        mid = n[2:-2]
        resid = dn + 2 * j * mid ** 2 + (j + k) * mid - l
        assert np.max(np.abs(resid)) < 1e-6 * (j + k) * n0

    def test_monotone_relaxation(self):
        j, k, l = coeffs()
        n_ss = cooling.steady_state(j, k, l).exact
        t = np.linspace(0, 20, 500)
        for n0 in (20 * n_ss, 0.05 * n_ss):
            c = cooling.evolve_closed(n0, j, k, l, t)
            gaps = np.abs(c.n - n_ss)
            sign = np.sign(c.n - n_ss)
            settled = gaps < 1e-12 * n_ss
            assert np.all((sign == sign[0]) | settled)
            assert np.all(np.diff(gaps) <= 1e-12 * n_ss)

    def test_nonexponential_signature(self):
        # strong nonlinear regime J N0 >> K: a single exponential cannot
        # track the curve, while the closed form fits itself exactly
        j, k, l = 1.0, 1e-3, 1e-3
        n0 = 1e4
        t = np.geomspace(1e-6, 2.0, 400)
        t = np.concatenate([[0.0], t])
        c = cooling.evolve_closed(n0, j, k, l, t)
        misfit = cooling.exponential_misfit(c)
        assert misfit > 0.05

    def test_negative_n0_rejected(self):
        with pytest.raises(ValueError):
            cooling.evolve_closed(-1.0, 1.0, 1.0, 1.0, np.array([0.0, 1.0]))


class TestOde:
    def test_cross_method_agreement(self):
        rng = np.random.default_rng(17)
        for _ in range(6):
            j = 10 ** rng.uniform(-2, 2)
            k = 10 ** rng.uniform(-2, 2)
            l = 10 ** rng.uniform(-2, 2)
            n0 = 10 ** rng.uniform(0, 5)
            tau = 2 / math.sqrt((j + k) ** 2 + 8 * j * l)
            t = np.linspace(0, 6 * tau, 150)
            c = cooling.evolve_closed(n0, j, k, l, t)
            o = cooling.evolve_ode(n0, j, k, l, t, tol=1e-9)
            assert np.max(np.abs(c.n - o.n) / np.maximum(c.n, 1e-30)) < 1e-6

    def test_pure_exponential_limit(self):
        t = np.linspace(0, 5, 60)
        o = cooling.evolve_ode(7.0, 0.0, 1.3, 0.0, t, tol=1e-10)
        np.testing.assert_allclose(o.n, 7.0 * np.exp(-1.3 * t), rtol=1e-7,
                                   atol=1e-12)

    def test_fixed_point_stays_constant(self):
        j, k, l = coeffs()
        n_ss = cooling.steady_state(j, k, l).exact
        o = cooling.evolve_ode(n_ss, j, k, l, np.linspace(0, 10, 50),
                               tol=1e-10)
        np.testing.assert_allclose(o.n, n_ss, rtol=1e-8)

    def test_invalid_tolerance(self):
        with pytest.raises(ValueError):
            cooling.evolve_ode(1.0, 1.0, 1.0, 1.0, np.array([0.0, 1.0]),
                               tol=0.0)


class TestSteadyState:
    def test_approx_close_for_hot_start(self):
        cfg = ExperimentConfig()
        cfg.gas.pressure_mbar = 1.0
        cfg.feedback.gain = 1.0 / 9.0
        rates = params.derive_rates(cfg)
        ss = cooling.steady_state(rates.j_rate, rates.k_rate, rates.l_rate)
        assert ss.gap < 0.01

    def test_l_to_zero(self):
        assert cooling.steady_state(1.0, 1.0, 1e-30).exact < 1e-29

    def test_requires_positive_j(self):
        with pytest.raises(ValueError):
            cooling.steady_state(0.0, 1.0, 1.0)

    def test_continuity_in_gain(self):
        # scan straddles G_opt = 1/9, away from the J -> 0 root at 2/9
        g2phi = 500.0
        eta_over_2m, d = 1.0, 1e4
        grid = np.linspace(0.06, 0.17, 301)
        n = []
        for g in grid:
            j = (12 * g - 54 * g * g) * g2phi
            n.append(cooling.steady_state(j, eta_over_2m + j,
                                          d - j / 2).exact)
        n = np.array(n)
        rel_jump = np.abs(np.diff(n)) / n[:-1]
        assert np.max(rel_jump) < 0.01


class TestOptimalGain:
    def test_value_and_maximum(self):
        og = cooling.optimal_gain(1e-7, 5.356e16)
        assert og.gain == 1.0 / 9.0
        assert og.j_max / (1e-14 * 5.356e16) == pytest.approx(2.0 / 3.0,
                                                              rel=1e-12)

    def test_grid_scan_attains_max_at_one_ninth(self):
        grid = np.arange(0.0, 2 / 9 + 1e-4, 1e-4)
        j = (12 * grid - 54 * grid ** 2)
        assert abs(grid[np.argmax(j)] - 1 / 9) <= 1e-4 + 1e-15

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            cooling.optimal_gain(0.0, 1e16)


class TestPressureSweep:
    def test_gas_dominated_sqrt_scaling(self):
        cfg = ExperimentConfig()
        cfg.feedback.gain = 0.0015
        grid = np.geomspace(1e-3, 1e-2, 7)
        sw = cooling.pressure_sweep(cfg, grid, "fixed_G")
        slope = np.polyfit(np.log10(sw.pressures_mbar), np.log10(sw.n_ss),
                           1)[0]
        assert slope == pytest.approx(0.5, abs=0.05)
        assert all(r == "gas-dominated" for r in sw.regime)

    def test_low_pressure_plateau(self):
        cfg = ExperimentConfig()
        cfg.feedback.gain = 0.0015
        rates = params.derive_rates(cfg)
        sw = cooling.pressure_sweep(cfg, np.array([1e-12]), "fixed_G")
        plateau = math.sqrt((rates.a_t + rates.a_p) / (2 * rates.j_rate))
        assert sw.n_ss[0] == pytest.approx(plateau, rel=0.01)
        assert sw.regime[0] == "photon-recoil-dominated"

    def test_fixed_modulation_policy_converges(self):
        cfg = ExperimentConfig()
        cfg.feedback.modulation = 1e-3
        grid = np.geomspace(1e-4, 1.0, 5)
        sw = cooling.pressure_sweep(cfg, grid, "fixed_M")
        assert all(sw.converged)
        # the realized modulation matches the requested one
        np.testing.assert_allclose(sw.modulation, 1e-3, rtol=1e-6)

    def test_rejects_unsorted_grid(self):
        cfg = ExperimentConfig()
        with pytest.raises(ValueError):
            cooling.pressure_sweep(cfg, np.array([1.0, 0.5]), "fixed_G")


class TestFeasibility:
    def test_no_modulation_means_no_cooling(self):
        # the G -> 0 fixed point of the published reduced ODE is
        # L/K = 2 N0 (the eta/2m vs eta/m bookkeeping; decision log),
        # so "no cooling" parks the curve there rather than at N0
        cfg = ExperimentConfig()
        rates = params.derive_rates(cfg)
        rep = cooling.ground_state_feasibility(cfg, 1e-12)
        assert rep.n_min == pytest.approx(2 * rates.n0, rel=1e-3)
        assert rep.gain_final < 1e-6

    @pytest.mark.xfail(reason="published reduced ODE heats to 2 N0 at G=0; "
                              "see decision log", strict=False)
    def test_no_modulation_spec_wording(self):
        cfg = ExperimentConfig()
        rates = params.derive_rates(cfg)
        rep = cooling.ground_state_feasibility(cfg, 1e-12)
        assert rep.n_min == pytest.approx(rates.n0, rel=1e-3)

    def test_schedule_respects_cap(self):
        cfg = ExperimentConfig()
        cfg.gas.pressure_mbar = 1e-4
        rep = cooling.ground_state_feasibility(cfg, 0.05)
        assert np.all(rep.schedule_modulation <= 0.05 * (1 + 1e-9))
        assert np.all(rep.schedule_gain <= 1 / 9 + 1e-12)
        # occupancy falls monotonically along the schedule
        assert np.all(np.diff(rep.schedule_n) <= 1e-9 * rep.schedule_n[0])

    def test_fig3_cold_claim_documented(self):
        # at the nominal chi = 1e-7 and 10 mW probe the photon-recoil plateau
        # alone sits near N ~ 9, so N_ss < 1 is out of reach (decision log)
        cfg = ExperimentConfig()
        cfg.gas.temperature_K = 4.0
        cfg.gas.pressure_mbar = 1e-5
        rep = cooling.ground_state_feasibility(cfg, 0.1)
        assert not rep.feasible
        assert rep.plateau > 1.0
        assert rep.pressure_for_ground_state_mbar is None

    def test_invalid_cap(self):
        cfg = ExperimentConfig()
        with pytest.raises(ValueError):
            cooling.ground_state_feasibility(cfg, 0.0)
