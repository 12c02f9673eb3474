"""Derived constants and rates for the levitated-nanoparticle model.

Everything here is a pure function of the experiment description, in SI
units.  The formulas are collected from the trap/scattering/gas analysis of
the underlying model; each derived quantity carries a short formula id in the
provenance map emitted with ``rates.json``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constants import (
    HBAR, K_B, EPS0, C_LIGHT, GAS_MASS, P_ATM, MFP_ATM,
)
from .config import ExperimentConfig


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# particle

@dataclass(frozen=True)
class Nanoparticle:
    radius: float            # m
    density: float           # kg/m^3
    epsilon_r: float
    volume: float            # m^3
    mass: float              # kg
    epsilon_c: float         # Clausius-Mossotti factor, 3(er-1)/(er+2)


def derive_particle(radius: float, density: float, epsilon_r: float) -> Nanoparticle:
    """Fill in volume, mass and the Clausius-Mossotti polarizability factor."""
    if radius <= 0:
        raise ValidationError("radius must be > 0")
    if density <= 0:
        raise ValidationError("density must be > 0")
    if epsilon_r <= 1:
        raise ValidationError("epsilon_r must be > 1")
    volume = 4.0 / 3.0 * math.pi * radius ** 3
    mass = density * volume
    eps_c = 3.0 * (epsilon_r - 1.0) / (epsilon_r + 2.0)
    return Nanoparticle(radius, density, epsilon_r, volume, mass, eps_c)


# ---------------------------------------------------------------------------
# trap geometry and mechanical modes

@dataclass(frozen=True)
class MechanicalMode:
    axis: str
    omega: float             # rad/s
    length: float            # m, oscillator length sqrt(hbar / 2 m omega)


@dataclass(frozen=True)
class TrapGeometry:
    wavelength: float        # m
    power: float             # W
    waist: float             # m
    rayleigh: float          # m
    e0_squared: float        # V^2/m^2 at the focus
    calibrated: bool         # True if (w0, E0^2) were solved from measured omegas
    modes: dict = field(default_factory=dict)   # axis -> MechanicalMode

    @property
    def omega_t(self) -> float:
        return 2.0 * math.pi * C_LIGHT / self.wavelength


def oscillator_length(mass: float, omega: float) -> float:
    return math.sqrt(HBAR / (2.0 * mass * omega))


def _modes_from_field(particle: Nanoparticle, waist: float, rayleigh: float,
                      e0_squared: float) -> dict:
    m = particle.mass
    common = particle.epsilon_c * EPS0 * e0_squared * particle.volume / m
    omega_z = math.sqrt(common / rayleigh ** 2)
    omega_xy = math.sqrt(2.0 * common / waist ** 2)
    return {
        "x": MechanicalMode("x", omega_xy, oscillator_length(m, omega_xy)),
        "y": MechanicalMode("y", omega_xy, oscillator_length(m, omega_xy)),
        "z": MechanicalMode("z", omega_z, oscillator_length(m, omega_z)),
    }


def derive_trap(particle: Nanoparticle, wavelength: float, power: float,
                waist: float | None = None,
                omega_z: float | None = None,
                omega_y: float | None = None) -> TrapGeometry:
    """Trap geometry and mechanical modes.

    Forward mode (``waist`` given): the focal field follows from the beam
    power, E0^2 = 4 P / (pi w0^2 eps0 c), and the mode frequencies from
    omega_z = sqrt(eps_c eps0 E0^2 V / (m z_R^2)),
    omega_xy = sqrt(2 eps_c eps0 E0^2 V / (m w0^2)).

    Calibrated mode (measured ``omega_z`` and ``omega_y`` given): solves the
    same two relations for (w0, E0^2) instead, via
    omega_y / omega_z = sqrt(2) z_R / w0 = sqrt(2) pi w0 / lambda.
    This reproduces a measured trap without guessing the focusing optics.
    """
    if wavelength <= 0 or power <= 0:
        raise ValidationError("wavelength and power must be > 0")
    if waist is not None:
        z_r = math.pi * waist ** 2 / wavelength
        e02 = 4.0 * power / (math.pi * waist ** 2 * EPS0 * C_LIGHT)
        modes = _modes_from_field(particle, waist, z_r, e02)
        return TrapGeometry(wavelength, power, waist, z_r, e02, False, modes)
    if omega_z is None or omega_y is None:
        raise ValidationError("give a waist or both measured frequencies")
    if omega_y <= omega_z:
        raise ValidationError("omega_y must exceed omega_z")
    w0 = (omega_y / omega_z) * wavelength / (math.sqrt(2.0) * math.pi)
    z_r = math.pi * w0 ** 2 / wavelength
    e02 = omega_z ** 2 * particle.mass * z_r ** 2 / (
        particle.epsilon_c * EPS0 * particle.volume)
    modes = _modes_from_field(particle, w0, z_r, e02)
    return TrapGeometry(wavelength, power, w0, z_r, e02, True, modes)


# ---------------------------------------------------------------------------
# gas damping

def knudsen_number(pressure: float, radius: float) -> float:
    """Kn = lambda_mfp / r_d with lambda_mfp = 70 nm at atmospheric pressure."""
    if pressure <= 0 or radius <= 0:
        raise ValidationError("pressure and radius must be > 0")
    return (MFP_ATM * P_ATM / pressure) / radius


def knudsen_correction(kn: float) -> float:
    """Rarefied-gas correction to Stokes drag; tends to 1 as Kn -> 0."""
    return 0.619 / (0.619 + kn) * (
        1.0 + 0.31 * kn / (0.785 + 1.152 * kn + kn ** 2))


def gas_damping(pressure: float, radius: float, mass: float,
                viscosity: float = 1.81e-5, model: str = "matched"):
    """Friction coefficient eta_f [kg/s] and damping rate Gamma_0 [rad/s].

    ``stokes``: Gamma_0 = (6 pi mu r_d / m) x knudsen_correction(Kn).
    ``matched``: the pressure-calibrated form
    Gamma_0 = (r_d / 70 nm) (2 pi 1e6) / (0.619 + Kn)
              x (1 + 0.31 Kn / (0.785 + 1.152 Kn + Kn^2)),
    which matches measured damping rates across the full pressure range.
    """
    kn = knudsen_number(pressure, radius)
    if model == "stokes":
        gamma0 = 6.0 * math.pi * viscosity * radius / mass * knudsen_correction(kn)
    elif model == "matched":
        gamma0 = (radius / MFP_ATM) * (2.0 * math.pi * 1e6) / (0.619 + kn) * (
            1.0 + 0.31 * kn / (0.785 + 1.152 * kn + kn ** 2))
    else:
        raise ValidationError(f"unknown gas model {model!r}")
    return mass * gamma0, gamma0


# ---------------------------------------------------------------------------
# photon scattering

def scattering_rates(trap: TrapGeometry, particle: Nanoparticle,
                     probe_omega: float, probe_bandwidth: float,
                     probe_flux: float):
    """Heating and photon-loss rates (A_t, B, A_p), all in 1/s.

    A_t: positional decoherence from trap-photon scattering,
        A_t = 7 w_t^5 E0^2 eps0 eps_c^2 V^2 l_z^2 / (60 pi hbar c^5).
    B: probe photon-loss rate.  Dimensional bookkeeping of the quoted
        prefactor (hbar w_p)^4 / (hbar^4 c^3) * eps_c^2 V^2 /
        (24 pi^3 w0^2 (c/dw)) resolves to
        B = w_p^4 eps_c^2 V^2 dw / (24 pi^3 w0^2 c^4)   [1/s].
    A_p: probe-scattering heating.  The source text names A_p but never
        prints its formula; we linearize the D[a Q_z] channel with the
        coherent amplitude alpha (alpha^2 = Phi/dw), giving
        A_p = 2 alpha^2 B (7 w_p^2 l_z^2) / (5 c^2).
        This assumption is flagged in the output metadata.
    """
    lz = trap.modes["z"].length
    w_t = trap.omega_t
    a_t = (7.0 * w_t ** 5 * trap.e0_squared * EPS0 * particle.epsilon_c ** 2
           * particle.volume ** 2 * lz ** 2) / (60.0 * math.pi * HBAR * C_LIGHT ** 5)
    b_rate = (probe_omega ** 4 * particle.epsilon_c ** 2 * particle.volume ** 2
              * probe_bandwidth) / (24.0 * math.pi ** 3 * trap.waist ** 2
                                    * C_LIGHT ** 4)
    alpha_sq = probe_flux / probe_bandwidth
    a_p = 2.0 * alpha_sq * b_rate * (7.0 * probe_omega ** 2 * lz ** 2) / (
        5.0 * C_LIGHT ** 2)
    return a_t, b_rate, a_p


def optomechanical_couplings(trap: TrapGeometry, particle: Nanoparticle,
                             probe_omega: float, probe_bandwidth: float,
                             offset: tuple[float, float, float]) -> dict:
    """Linear couplings g_j [rad/s] from a probe focus displaced by ``offset``.

    Coefficients follow the quadratic expansion of the probe intensity around
    the shifted focus: the q_z term carries 2 dz / z_R^2, the transverse terms
    4 dx / w0^2.  All vanish for a centered probe; chi is then supplied from
    experiment instead.
    """
    dx, dy, dz = offset
    pref = particle.epsilon_c * particle.volume * probe_omega * probe_bandwidth / (
        2.0 * math.pi ** 2 * trap.waist ** 2 * C_LIGHT)
    gz = pref * (2.0 * dz / trap.rayleigh ** 2) * trap.modes["z"].length
    gx = pref * (4.0 * dx / trap.waist ** 2) * trap.modes["x"].length
    gy = pref * (4.0 * dy / trap.waist ** 2) * trap.modes["y"].length
    return {"x": gx, "y": gy, "z": gz}


# ---------------------------------------------------------------------------
# gas momentum/position diffusion

def brownian_coefficients(eta_f: float, temperature: float, mass: float,
                          length_z: float):
    """Momentum/position diffusion rates (D_p, D_q), each in 1/s.

    D_p = 2 eta_f k_B T l_z^2 / hbar^2 and
    D_q = eta_f hbar^2 / (24 k_B T m^2 l_z^2); their product is exactly
    eta_f^2 / (12 m^2) independent of temperature and length.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be > 0")
    d_p = 2.0 * eta_f * K_B * temperature * length_z ** 2 / HBAR ** 2
    d_q = eta_f * HBAR ** 2 / (24.0 * K_B * temperature * mass ** 2 * length_z ** 2)
    return d_p, d_q


# ---------------------------------------------------------------------------
# feedback coefficients

def feedback_coefficients(gain: float, chi: float, flux: float,
                          eta_f: float, mass: float, diffusion_total: float):
    """Phonon-ODE coefficients (J, K, L) [1/s].

    J = (12 G - 54 G^2) chi^2 Phi,  K = eta_f / 2m + J,  L = D - J/2.
    G beyond 2/9 makes J negative (backaction outruns cooling); that is
    allowed but reported through the returned ``heating`` flag.
    """
    if gain < 0:
        raise ValidationError("gain must be >= 0")
    g2phi = chi ** 2 * flux
    j = (12.0 * gain - 54.0 * gain ** 2) * g2phi
    k = eta_f / (2.0 * mass) + j
    l = diffusion_total - j / 2.0
    return j, k, l, (j < 0.0)


def gain_for_modulation(modulation: float, omega_z: float, chi: float,
                        flux: float, occupancy: float) -> float:
    """G from the trap-modulation relation M = G chi^2 Phi <N> / omega_z."""
    return modulation * omega_z / (chi ** 2 * flux * max(occupancy, 1e-300))


# ---------------------------------------------------------------------------
# momentum-kick validity of the Brownian treatment

@dataclass(frozen=True)
class KickCheck:
    ratio: float             # Delta p * l_z / hbar
    ok: bool
    gas_species: str
    temperature: float


def kick_validity(temperature: float, length_z: float,
                  species: str = "N2") -> KickCheck:
    """Linearized-Brownian validity: Delta p l_z / hbar < 1 with the maximum
    RMS thermal momentum transfer Delta p = 2 sqrt(3 m_gas k_B T)."""
    m_gas = GAS_MASS[species]
    dp = 2.0 * math.sqrt(3.0 * m_gas * K_B * temperature)
    ratio = dp * length_z / HBAR
    return KickCheck(ratio, ratio < 1.0, species, temperature)


# ---------------------------------------------------------------------------
# full assembly

@dataclass
class DerivedRates:
    """Every coefficient entering the dynamics, plus provenance metadata."""

    particle: Nanoparticle
    trap: TrapGeometry
    chi: float               # scaled optomechanical coupling (config)
    flux: float              # probe photon flux Phi [1/s]
    alpha_sq: float          # coherent amplitude squared Phi / dw
    couplings: dict          # axis -> g_j [rad/s]
    eta_f: float             # kg/s
    gamma0: float            # rad/s
    knudsen: float
    a_t: float               # 1/s
    b_loss: float            # 1/s
    a_p: float               # 1/s
    d_p: float               # 1/s
    d_q: float               # 1/s
    gain: float              # operating G
    j_rate: float            # 1/s
    k_rate: float            # 1/s
    l_rate: float            # 1/s
    n0: float                # initial/bath occupancy
    n_ss: float              # steady state at the operating gain
    t_eff: float             # K
    delta_gamma: float       # rad/s, linearized feedback damping at N_ss
    s_thermal: float         # N^2 s
    s_feedback: float        # N^2 s
    s_shot_dc: float         # N^2 s, S_S(0)
    kick: KickCheck
    warnings: list = field(default_factory=list)

    @property
    def omega_z(self) -> float:
        return self.trap.modes["z"].omega

    @property
    def length_z(self) -> float:
        return self.trap.modes["z"].length

    @property
    def mass(self) -> float:
        return self.particle.mass

    @property
    def diffusion_prime(self) -> float:
        """Positional decoherence D_p' = D_p + A_t + A_p."""
        return self.d_p + self.a_t + self.a_p

    @property
    def diffusion_total(self) -> float:
        return self.diffusion_prime + self.d_q

    @property
    def chi2flux(self) -> float:
        return self.chi ** 2 * self.flux


def shot_noise_dc(mass: float, length_z: float, omega_z: float,
                  chi2flux: float) -> float:
    """S_S(0) = (m l_z w_z^2)^2 / (chi^2 Phi)."""
    return (mass * length_z * omega_z ** 2) ** 2 / chi2flux


def thermal_force_noise(mass: float, gamma0: float, t_eff: float) -> float:
    """S_T = 2 m Gamma_0 k_B T_eff."""
    return 2.0 * mass * gamma0 * K_B * t_eff


def feedback_force_noise(mass: float, omega_z: float, chi2flux: float,
                         gain: float, occupancy: float) -> float:
    """S_F = 27 m hbar w_z chi^2 Phi G^2 (2<N>^2 + 2<N> + 1)."""
    n = occupancy
    return 27.0 * mass * HBAR * omega_z * chi2flux * gain ** 2 * (
        2.0 * n ** 2 + 2.0 * n + 1.0)


def feedback_damping(chi2flux: float, gain: float, occupancy: float) -> float:
    """delta Gamma = 12 chi^2 Phi G (<N> + 1/2)."""
    return 12.0 * chi2flux * gain * (occupancy + 0.5)


def bath_occupancy(d_prime: float, eta_f: float, mass: float) -> float:
    """Bath occupancy N0 = m D_p' / eta_f = k_B T_eff / (hbar w_z).

    Written with m/eta_f (not 2m/eta_f) so that the effective-temperature
    identity holds exactly and N0 reduces to k_B T / (hbar w_z) when optical
    heating is absent.
    """
    return mass * d_prime / eta_f


def derive_rates(cfg: ExperimentConfig) -> DerivedRates:
    """Assemble every derived coefficient for a validated configuration."""
    from .cooling import steady_state  # local import; cooling depends on us

    cfg.validate()
    warnings = []
    particle = derive_particle(cfg.radius_m, cfg.particle.density_kg_m3,
                               cfg.particle.epsilon_r)
    if cfg.calibrated:
        trap = derive_trap(particle, cfg.trap_wavelength_m, cfg.trap_power_W,
                           omega_z=2e3 * math.pi * cfg.trap.freq_z_kHz,
                           omega_y=2e3 * math.pi * cfg.trap.freq_y_kHz)
        warnings.append("trap calibrated from measured frequencies; E0^2 "
                        "decoupled from nominal beam power")
    else:
        trap = derive_trap(particle, cfg.trap_wavelength_m, cfg.trap_power_W,
                           waist=cfg.waist_m)

    flux = cfg.probe_power_W / (HBAR * cfg.probe_omega)
    alpha_sq = flux / cfg.probe_bandwidth
    couplings = optomechanical_couplings(
        trap, particle, cfg.probe_omega, cfg.probe_bandwidth,
        (cfg.probe.offset_x_um * 1e-6, cfg.probe.offset_y_um * 1e-6,
         cfg.probe.offset_z_um * 1e-6))

    eta_f, gamma0 = gas_damping(cfg.pressure_Pa, cfg.radius_m, particle.mass,
                                cfg.gas.viscosity_Pa_s, cfg.gas.model)
    kn = knudsen_number(cfg.pressure_Pa, cfg.radius_m)
    a_t, b_loss, a_p = scattering_rates(trap, particle, cfg.probe_omega,
                                        cfg.probe_bandwidth, flux)
    warnings.append("A_p uses the coherent-amplitude linearization of the "
                    "D[a Q_z] channel (assumption)")
    if not cfg.simulation.trap_heating:
        a_t = 0.0
        a_p = 0.0
        warnings.append("optical heating disabled by configuration")

    mode_z = trap.modes["z"]
    d_p, d_q = brownian_coefficients(eta_f, cfg.gas.temperature_K,
                                     particle.mass, mode_z.length)
    d_prime = d_p + a_t + a_p
    d_total = d_prime + d_q
    n0 = bath_occupancy(d_prime, eta_f, particle.mass)
    t_eff = HBAR * mode_z.omega * n0 / K_B

    chi = cfg.probe.chi
    g2phi = chi ** 2 * flux
    gain = _resolve_gain(cfg, mode_z.omega, g2phi, eta_f, particle.mass,
                         d_total, n0, warnings)
    j, k, l, heating = feedback_coefficients(gain, chi, flux, eta_f,
                                             particle.mass, d_total)
    if heating:
        warnings.append(f"gain G={gain:g} exceeds 2/9: J < 0 (net heating)")
    if j > 0:
        n_ss = steady_state(j, k, l)[0]
    else:
        n_ss = n0 if k <= 0 else l / k
    occ = n_ss
    kick = kick_validity(cfg.gas.temperature_K, mode_z.length, cfg.gas.species)
    if not kick.ok:
        warnings.append(f"momentum-kick ratio {kick.ratio:.3g} >= 1: "
                        "linearized Brownian treatment marginal")

    return DerivedRates(
        particle=particle, trap=trap, chi=chi, flux=flux, alpha_sq=alpha_sq,
        couplings=couplings, eta_f=eta_f, gamma0=gamma0, knudsen=kn,
        a_t=a_t, b_loss=b_loss, a_p=a_p, d_p=d_p, d_q=d_q,
        gain=gain, j_rate=j, k_rate=k, l_rate=l,
        n0=n0, n_ss=n_ss, t_eff=t_eff,
        delta_gamma=feedback_damping(g2phi, gain, occ),
        s_thermal=thermal_force_noise(particle.mass, gamma0, t_eff),
        s_feedback=feedback_force_noise(particle.mass, mode_z.omega, g2phi,
                                        gain, occ),
        s_shot_dc=shot_noise_dc(particle.mass, mode_z.length, mode_z.omega,
                                g2phi),
        kick=kick, warnings=warnings,
    )


def _resolve_gain(cfg, omega_z, g2phi, eta_f, mass, d_total, n0, warnings):
    """Operating gain per the configured policy."""
    from .cooling import steady_state

    policy = cfg.feedback.gain_policy
    if policy == "fixed_G":
        return cfg.feedback.gain
    if policy == "optimal":
        return 1.0 / 9.0
    # fixed_M: G = M w_z / (chi^2 Phi <N>) solved self-consistently with
    # <N> = N_ss(G); damped fixed-point iteration.
    m_target = cfg.feedback.modulation
    g = min(m_target * omega_z / (g2phi * n0), 2.0 / 9.0)
    for _ in range(100):
        chi = 1.0  # work directly with g2phi
        j = (12.0 * g - 54.0 * g ** 2) * g2phi
        if j <= 0:
            n = n0
        else:
            k = eta_f / (2.0 * mass) + j
            l = d_total - j / 2.0
            n = steady_state(j, k, l)[0]
        g_new = m_target * omega_z / (g2phi * max(n, 1e-300))
        g_new = min(g_new, 2.0 / 9.0)
        if abs(g_new - g) <= 1e-10 * max(g, 1e-300):
            g = g_new
            break
        g = 0.5 * (g + g_new)
    else:
        warnings.append("fixed-M gain iteration did not converge to 1e-10")
    return g


# ---------------------------------------------------------------------------
# serialization

_UNITS = {
    "volume": "m^3", "mass": "kg", "epsilon_c": "1",
    "waist": "m", "rayleigh": "m", "e0_squared": "V^2/m^2",
    "omega": "rad/s", "length": "m", "flux": "1/s", "alpha_sq": "1",
    "eta_f": "kg/s", "gamma0": "rad/s", "knudsen": "1",
    "a_t": "1/s", "b_loss": "1/s", "a_p": "1/s", "d_p": "1/s", "d_q": "1/s",
    "j_rate": "1/s", "k_rate": "1/s", "l_rate": "1/s",
    "n0": "1", "n_ss": "1", "t_eff": "K", "delta_gamma": "rad/s",
    "s_thermal": "N^2 s", "s_feedback": "N^2 s", "s_shot_dc": "N^2 s",
    "chi": "1", "gain": "1",
}

_FORMULAS = {
    "epsilon_c": "3(er-1)/(er+2)",
    "mass": "rho (4/3) pi r^3",
    "omega_z": "sqrt(ec e0 E0^2 V / m zR^2)",
    "omega_xy": "sqrt(2 ec e0 E0^2 V / m w0^2)",
    "length": "sqrt(hbar / 2 m omega)",
    "gamma0": "pressure-calibrated Knudsen drag",
    "a_t": "7 wt^5 E0^2 e0 ec^2 V^2 lz^2 / (60 pi hbar c^5)",
    "b_loss": "wp^4 ec^2 V^2 dw / (24 pi^3 w0^2 c^4)",
    "a_p": "2 a^2 B 7 wp^2 lz^2 / 5 c^2 (linearized)",
    "d_p": "2 eta kB T lz^2 / hbar^2",
    "d_q": "eta hbar^2 / (24 kB T m^2 lz^2)",
    "j_rate": "(12G - 54G^2) chi^2 Phi",
    "k_rate": "eta/2m + J",
    "l_rate": "D - J/2",
    "n0": "m D_p' / eta  (= kB T_eff / hbar w_z)",
    "delta_gamma": "12 chi^2 Phi G (N + 1/2)",
    "s_thermal": "2 m Gamma0 kB T_eff",
    "s_feedback": "27 m hbar w_z chi^2 Phi G^2 (2N^2+2N+1)",
    "s_shot_dc": "(m lz w_z^2)^2 / chi^2 Phi",
}


def rates_document(rates: DerivedRates, cfg: ExperimentConfig) -> dict:
    """JSON-serializable rates.json payload with units and provenance."""
    def q(value, unit, formula=None):
        d = {"value": value, "unit": unit}
        if formula:
            d["formula"] = formula
        return d

    modes = {
        ax: {
            "omega": q(m.omega, "rad/s", _FORMULAS["omega_z" if ax == "z"
                                                   else "omega_xy"]),
            "freq_kHz": q(m.omega / (2e3 * math.pi), "kHz"),
            "length": q(m.length, "m", _FORMULAS["length"]),
            "coupling_g": q(rates.couplings[ax], "rad/s"),
        }
        for ax, m in rates.trap.modes.items()
    }
    doc = {
        "inputs_hash": cfg.digest(),
        "calibrated_trap": rates.trap.calibrated,
        "particle": {
            "volume": q(rates.particle.volume, "m^3"),
            "mass": q(rates.particle.mass, "kg", _FORMULAS["mass"]),
            "epsilon_c": q(rates.particle.epsilon_c, "1",
                           _FORMULAS["epsilon_c"]),
        },
        "trap": {
            "waist": q(rates.trap.waist, "m"),
            "rayleigh": q(rates.trap.rayleigh, "m"),
            "e0_squared": q(rates.trap.e0_squared, "V^2/m^2"),
        },
        "modes": modes,
        "probe": {
            "chi": q(rates.chi, "1"),
            "flux": q(rates.flux, "1/s"),
            "alpha_sq": q(rates.alpha_sq, "1"),
        },
        "rates": {
            name: q(getattr(rates, name), _UNITS[name], _FORMULAS.get(name))
            for name in ("eta_f", "gamma0", "knudsen", "a_t", "b_loss", "a_p",
                         "d_p", "d_q", "gain", "j_rate", "k_rate", "l_rate",
                         "n0", "n_ss", "t_eff", "delta_gamma", "s_thermal",
                         "s_feedback", "s_shot_dc")
        },
        "kick_validity": {
            "ratio": rates.kick.ratio,
            "ok": rates.kick.ok,
            "gas": rates.kick.gas_species,
        },
        "warnings": rates.warnings,
    }
    return doc
