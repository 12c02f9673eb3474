"""Physical constants (SI, CODATA 2018) and unit conversions."""

import math

HBAR = 1.054571817e-34      # J s
K_B = 1.380649e-23          # J / K
EPS0 = 8.8541878128e-12     # F / m
C_LIGHT = 299792458.0       # m / s
AMU = 1.66053906660e-27     # kg

# molar masses of common residual gases, kg per molecule
GAS_MASS = {
    "N2": 28.0134 * AMU,
    "O2": 31.9988 * AMU,
    "He": 4.002602 * AMU,
    "H2": 2.01588 * AMU,
    "Ar": 39.948 * AMU,
    "air": 28.9647 * AMU,
}

P_ATM = 101325.0            # Pa, reference for the mean-free-path scaling
MFP_ATM = 70e-9             # m, gas mean free path at atmospheric pressure

MBAR = 100.0                # Pa per mbar


def mbar_to_pa(p_mbar: float) -> float:
    return p_mbar * MBAR


def pa_to_mbar(p_pa: float) -> float:
    return p_pa / MBAR


def two_pi(f: float) -> float:
    """Angular frequency from ordinary frequency."""
    return 2.0 * math.pi * f
