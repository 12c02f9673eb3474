"""Experiment configuration: parsing, validation and serialization.

The on-disk format is a flat-sectioned key-value file (INI style) with
unit-suffixed keys, e.g. ``radius_nm = 50``.  A JSON document with the same
section/key structure is accepted as an alternative.  All values are converted
to SI at this boundary; the rest of the package works in SI only.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .constants import GAS_MASS, MBAR


class ConfigError(ValueError):
    """Invalid configuration.  ``problems`` lists every offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(
            f"  - {p}" for p in self.problems))


@dataclass
class ParticleSection:
    radius_nm: float = 50.0
    density_kg_m3: float = 2200.0
    epsilon_r: float = 2.1


@dataclass
class TrapSection:
    wavelength_nm: float = 1064.0
    power_mW: float = 100.0
    # forward mode: give the waist; calibrated mode: give both frequencies
    waist_um: float | None = None
    freq_z_kHz: float | None = 38.0
    freq_y_kHz: float | None = 138.0


@dataclass
class ProbeSection:
    wavelength_nm: float = 1064.0
    power_mW: float = 10.0
    bandwidth_MHz: float = 1.0       # detection bandwidth, delta_omega / 2 pi
    chi: float = 1e-7                # scaled optomechanical coupling (from experiment)
    offset_x_um: float = 0.0
    offset_y_um: float = 0.0
    offset_z_um: float = 0.0


@dataclass
class GasSection:
    pressure_mbar: float = 1e-3
    temperature_K: float = 300.0
    viscosity_Pa_s: float = 1.81e-5
    species: str = "N2"
    model: str = "matched"           # "matched" (pressure-calibrated) or "stokes"


@dataclass
class FeedbackSection:
    gain: float = 0.0                # dimensionless G
    gain_policy: str = "fixed_G"     # fixed_G | fixed_M | optimal
    modulation: float = 0.001        # target M for fixed_M policy
    modulation_cap: float = 0.1


@dataclass
class SimulationSection:
    seed: int = 1234567
    trap_heating: bool = True        # include A_t, A_p in noise budgets


@dataclass
class ExperimentConfig:
    particle: ParticleSection = field(default_factory=ParticleSection)
    trap: TrapSection = field(default_factory=TrapSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    gas: GasSection = field(default_factory=GasSection)
    feedback: FeedbackSection = field(default_factory=FeedbackSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)

    # -- SI accessors (conversion happens here, nowhere else) ------------

    @property
    def radius_m(self) -> float:
        return self.particle.radius_nm * 1e-9

    @property
    def trap_wavelength_m(self) -> float:
        return self.trap.wavelength_nm * 1e-9

    @property
    def trap_power_W(self) -> float:
        return self.trap.power_mW * 1e-3

    @property
    def waist_m(self) -> float | None:
        return None if self.trap.waist_um is None else self.trap.waist_um * 1e-6

    @property
    def probe_power_W(self) -> float:
        return self.probe.power_mW * 1e-3

    @property
    def probe_omega(self) -> float:
        return 2.0 * math.pi * 299792458.0 / (self.probe.wavelength_nm * 1e-9)

    @property
    def probe_bandwidth(self) -> float:
        """Detection bandwidth as angular frequency [rad/s]."""
        return 2.0 * math.pi * self.probe.bandwidth_MHz * 1e6

    @property
    def pressure_Pa(self) -> float:
        return self.gas.pressure_mbar * MBAR

    @property
    def gas_mass_kg(self) -> float:
        return GAS_MASS[self.gas.species]

    @property
    def calibrated(self) -> bool:
        return self.trap.waist_um is None

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        probs = []
        p = self.particle
        if p.radius_nm <= 0:
            probs.append("particle.radius_nm must be > 0")
        if p.density_kg_m3 <= 0:
            probs.append("particle.density_kg_m3 must be > 0")
        if p.epsilon_r <= 1:
            probs.append("particle.epsilon_r must be > 1 (polarizability degenerate)")
        t = self.trap
        if t.wavelength_nm <= 0:
            probs.append("trap.wavelength_nm must be > 0")
        if t.power_mW <= 0:
            probs.append("trap.power_mW must be > 0")
        if t.waist_um is None and (t.freq_z_kHz is None or t.freq_y_kHz is None):
            probs.append("trap: give waist_um (forward mode) or both "
                         "freq_z_kHz and freq_y_kHz (calibrated mode)")
        if t.waist_um is not None and t.waist_um <= 0:
            probs.append("trap.waist_um must be > 0")
        if t.freq_z_kHz is not None and t.freq_y_kHz is not None \
                and t.waist_um is None and t.freq_y_kHz <= t.freq_z_kHz:
            probs.append("trap: freq_y_kHz must exceed freq_z_kHz for a "
                         "focused Gaussian trap (z_R > w0/sqrt(2))")
        pr = self.probe
        if pr.power_mW <= 0:
            probs.append("probe.power_mW must be > 0")
        if pr.bandwidth_MHz <= 0:
            probs.append("probe.bandwidth_MHz must be > 0")
        if pr.chi <= 0:
            probs.append("probe.chi must be > 0")
        g = self.gas
        if g.pressure_mbar <= 0:
            probs.append("gas.pressure_mbar must be > 0")
        if g.temperature_K <= 0:
            probs.append("gas.temperature_K must be > 0")
        if g.viscosity_Pa_s <= 0:
            probs.append("gas.viscosity_Pa_s must be > 0")
        if g.species not in GAS_MASS:
            probs.append(f"gas.species must be one of {sorted(GAS_MASS)}")
        if g.model not in ("matched", "stokes"):
            probs.append("gas.model must be 'matched' or 'stokes'")
        fb = self.feedback
        if fb.gain < 0:
            probs.append("feedback.gain must be >= 0")
        if fb.gain_policy not in ("fixed_G", "fixed_M", "optimal"):
            probs.append("feedback.gain_policy must be fixed_G, fixed_M or optimal")
        if not 0 < fb.modulation_cap <= 1:
            probs.append("feedback.modulation_cap must be in (0, 1]")
        if not 0 <= fb.modulation <= 1:
            probs.append("feedback.modulation must be in [0, 1]")
        if probs:
            raise ConfigError(probs)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def dump(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
            return
        cp = configparser.ConfigParser()
        for section, values in self.to_dict().items():
            cp[section] = {k: repr(v) if not isinstance(v, str) else v
                           for k, v in values.items() if v is not None}
        with path.open("w") as fh:
            cp.write(fh)


_SECTIONS = {
    "particle": ParticleSection,
    "trap": TrapSection,
    "probe": ProbeSection,
    "gas": GasSection,
    "feedback": FeedbackSection,
    "simulation": SimulationSection,
}

_BOOL_STRINGS = {"true": True, "false": False, "yes": True, "no": False,
                 "1": True, "0": False}


def _coerce(section: str, key: str, raw, problems: list) -> object:
    cls = _SECTIONS[section]
    ftypes = {f: t for f, t in cls.__annotations__.items()}
    if key not in ftypes:
        problems.append(f"unknown key {section}.{key}")
        return None
    want = ftypes[key]
    if isinstance(raw, str):
        raw = raw.strip()
        if raw.lower() == "none":
            return None
        if want == "bool" or want is bool:
            if raw.lower() in _BOOL_STRINGS:
                return _BOOL_STRINGS[raw.lower()]
            problems.append(f"{section}.{key}: expected boolean, got {raw!r}")
            return None
        if want == "str" or want is str:
            return raw
        if want == "int" or want is int:
            try:
                return int(raw)
            except ValueError:
                problems.append(f"{section}.{key}: expected integer, got {raw!r}")
                return None
        try:
            return float(raw)
        except ValueError:
            problems.append(f"{section}.{key}: expected number, got {raw!r}")
            return None
    return raw


def from_mapping(data: dict) -> ExperimentConfig:
    problems = []
    kwargs = {}
    for section, values in data.items():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        svals = {}
        for key, raw in values.items():
            val = _coerce(section, key, raw, problems)
            if f"unknown key {section}.{key}" in problems[-1:]:
                continue
            svals[key] = val
        kwargs[section] = svals
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(**{
        name: cls(**kwargs.get(name, {})) for name, cls in _SECTIONS.items()
    })
    # forward mode wins if a waist is given explicitly
    cfg.validate()
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    """Load a configuration file (INI-style key/value or JSON)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        return from_mapping(json.loads(text))
    cp = configparser.ConfigParser()
    cp.read_string(text)
    data = {s: dict(cp[s]) for s in cp.sections()}
    return from_mapping(data)
