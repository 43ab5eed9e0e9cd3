"""Scenario configuration: a plain ``key = value [unit]`` text format.

Lines starting with ``#`` and blank lines are ignored; trailing ``#``
comments are allowed.  A value may carry a unit suffix (``50 km``,
``25 s``, ``1.25e8 Pa``); without a suffix the key's SI unit is assumed.
Every key has a default, so an empty file is a complete scenario.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigParseError, ConfigurationError

UNITS = {
    "length": {"m": 1.0, "km": 1000.0, "cm": 0.01},
    "time": {"s": 1.0, "min": 60.0, "h": 3600.0, "hour": 3600.0, "hours": 3600.0,
             "day": 86400.0, "days": 86400.0},
    "pressure": {"Pa": 1.0, "kPa": 1e3, "MPa": 1e6, "GPa": 1e9},
    "density": {"kg/m3": 1.0, "kg/m^3": 1.0},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
    "none": {},
}
SI_UNIT = {"length": "m", "time": "s", "pressure": "Pa", "density": "kg/m3", "angle": "rad",
           "none": ""}


@dataclass(frozen=True)
class Key:
    kind: type
    dimension: str
    default: object
    doc: str
    choices: tuple = ()


KEYS: dict[str, Key] = {
    # domain and material
    "domain.side": Key(float, "length", 50_000.0, "side of the periodic square domain"),
    "material.rho_ice": Key(float, "density", 900.0, "ice density"),
    "material.young": Key(float, "pressure", 1.25e8, "Young's modulus of the contact law"),
    "material.shear": Key(float, "pressure", 1.25e8, "shear modulus of the contact law"),
    "material.friction": Key(float, "none", 0.2, "Coulomb friction coefficient"),
    "material.drag": Key(float, "none", 3e-3, "ocean drag coefficient"),
    "material.rho_ocean": Key(float, "density", 1000.0, "seawater density"),
    "contact.thickness_ref": Key(float, "length", 0.0,
                                 "if > 0, contact chords are scaled by min(h)/thickness_ref"),
    # floe population
    "floes.count": Key(int, "none", 18, "number of floes L"),
    "floes.large": Key(int, "none", 6, "number of retained large floes L0"),
    "floes.super": Key(int, "none", 6, "number of superfloes Ls"),
    "size.exponent": Key(float, "none", 1.0, "power-law exponent of the radius distribution"),
    "size.scale": Key(float, "length", 1500.0, "lower end (scale) of the radius power law"),
    "size.r_min": Key(float, "length", 1000.0, "rejection cap: smallest radius"),
    "size.r_max": Key(float, "length", 10_000.0, "rejection cap: largest radius"),
    "thickness.shape": Key(float, "none", 2.0, "gamma shape of the thickness distribution"),
    "thickness.scale": Key(float, "length", 1.3, "gamma scale of the thickness distribution"),
    "thickness.h_min": Key(float, "length", 0.1, "rejection cap: thinnest floe"),
    "thickness.h_max": Key(float, "length", 3.5, "rejection cap: thickest floe"),
    "init.sweeps": Key(int, "none", 50, "overlap relaxation sweeps at initialisation"),
    "reduction.isolation_factor": Key(float, "none", math.sqrt(2.0),
                                      "delete the smallest floe if farther than this times the radius sum"),
    "reduction.literal_pi_squared": Key(bool, "none", False, "use the pi^2 superfloe thickness variant"),
    # ocean
    "ocean.k_max": Key(int, "none", 1, "largest |k1|, |k2| of the mode lattice"),
    "ocean.rossby": Key(float, "none", 0.1, "Rossby number"),
    "ocean.time_unit": Key(float, "time", 86400.0, "time unit of the mode coefficients"),
    "ocean.gravity": Key(bool, "none", True, "include gravity modes"),
    "ocean.gb_damping": Key(float, "none", 0.5, "GB damping per time unit"),
    "ocean.gb_sigma": Key(float, "none", 0.1, "GB noise strength (m/s per sqrt time unit)"),
    "ocean.gb_forcing": Key(float, "none", 0.0, "GB periodic forcing amplitude (m/s per time unit)"),
    "ocean.gb_forcing_period": Key(float, "time", 14 * 86400.0, "period of the GB forcing"),
    "ocean.gravity_damping": Key(float, "none", 0.5, "gravity damping per time unit"),
    "ocean.gravity_sigma": Key(float, "none", 0.05, "gravity noise strength"),
    "ocean.stationary_start": Key(bool, "none", True, "draw initial amplitudes from the stationary law"),
    # integrator
    "integrator.dt": Key(float, "time", 25.0, "time step"),
    "integrator.t_final": Key(float, "time", 120 * 86400.0, "simulation length"),
    "integrator.record_every": Key(int, "none", 144, "steps between trajectory records"),
    "integrator.substep": Key(bool, "none", True, "sub-step stiff contacts"),
    "integrator.max_substeps": Key(int, "none", 100_000, "upper bound on sub-steps per step"),
    "integrator.neighbor_grid": Key(bool, "none", True, "use the cell grid (false: all pairs)"),
    "integrator.contact_log": Key(bool, "none", False, "write the per-step contact log"),
    # uncertainty quantification
    "uq.members": Key(int, "none", 1000, "ensemble size for forecasts"),
    "uq.t_final": Key(float, "time", 2 * 86400.0, "ensemble forecast length"),
    "uq.record_every": Key(int, "none", 144, "steps between ensemble records"),
    "uq.long_run": Key(float, "time", 120 * 86400.0, "long-run statistics length"),
    "uq.burn_in": Key(float, "none", 0.25, "discarded fraction of long runs"),
    "uq.bins": Key(int, "none", 100, "histogram bins"),
    "uq.spinup": Key(float, "time", 86400.0, "deterministic spin-up before forecasts"),
    # data assimilation
    "da.members": Key(int, "none", 1000, "EAKF ensemble size"),
    "da.cycles": Key(int, "none", 20, "assimilation cycles"),
    "da.obs_interval_steps": Key(int, "none", 100, "steps between observations"),
    "da.sigma_x": Key(float, "length", 80.0, "position observation noise"),
    "da.sigma_angle": Key(float, "angle", 0.01, "angle observation noise"),
    "da.forecast_model": Key(str, "none", "inflation", "forecast model",
                             ("full", "bare", "inflation")),
    "da.forecast_gravity": Key(bool, "none", True, "keep gravity modes in the forecast ocean"),
    "da.inflation_steps": Key(int, "none", 10_000, "superfloe run length for the inflation"),
    "da.inflation_spinup": Key(int, "none", 1_000, "spin-up steps before the inflation run"),
    # run control
    "seed": Key(int, "none", 0, "master seed"),
    "output.dir": Key(str, "none", "output", "output directory"),
}

_LINE = re.compile(r"^\s*([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*$")
_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


class ScenarioConfig:
    """Validated settings; attribute access replaces dots with ``__``."""

    def __init__(self, values: dict | None = None, source: str | None = None):
        self.values = {k: key.default for k, key in KEYS.items()}
        self.explicit: dict = {}
        self.source = source
        for k, v in (values or {}).items():
            if k not in KEYS:
                raise ConfigurationError(f"unknown key {k!r}")
            self.values[k] = _coerce(k, v)
            self.explicit[k] = self.values[k]
        self.validate()

    def __getitem__(self, key):
        return self.values[key]

    def replace(self, **updates) -> "ScenarioConfig":
        vals = dict(self.explicit)
        vals.update({k.replace("__", "."): v for k, v in updates.items()})
        return ScenarioConfig(vals, self.source)

    def deviations(self) -> dict:
        return {k: v for k, v in self.explicit.items() if v != KEYS[k].default}

    def validate(self):
        v = self.values
        if v["floes.count"] < 1:
            raise ConfigurationError("floes.count must be >= 1")
        if v["floes.large"] < 0 or v["floes.super"] < 1:
            raise ConfigurationError("floes.large must be >= 0 and floes.super >= 1")
        if v["floes.large"] + v["floes.super"] >= v["floes.count"]:
            raise ConfigurationError("floes.large + floes.super must be below floes.count")
        for k in ("domain.side", "integrator.dt", "ocean.rossby", "ocean.time_unit",
                  "material.rho_ice", "material.young", "material.shear", "material.friction",
                  "material.drag", "material.rho_ocean", "size.scale", "size.exponent",
                  "thickness.shape", "thickness.scale", "ocean.gb_damping", "ocean.gravity_damping",
                  "da.sigma_x", "da.sigma_angle"):
            if not v[k] > 0:
                raise ConfigurationError(f"{k} must be > 0")
        if v["size.r_min"] >= v["size.r_max"] or v["thickness.h_min"] >= v["thickness.h_max"]:
            raise ConfigurationError("rejection caps must satisfy min < max")
        if v["da.members"] < 2 or v["uq.members"] < 2:
            raise ConfigurationError("ensembles need at least two members")
        if not 0 <= v["uq.burn_in"] < 1:
            raise ConfigurationError("uq.burn_in must be in [0, 1)")
        if v["da.obs_interval_steps"] < 1 or v["integrator.record_every"] < 1:
            raise ConfigurationError("step intervals must be >= 1")

    def digest(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_text(self) -> str:
        lines = []
        for k, key in KEYS.items():
            val = self.values[k]
            unit = SI_UNIT[key.dimension]
            if isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{k} = {val}{(' ' + unit) if unit else ''}")
        return "\n".join(lines) + "\n"

    # builders --------------------------------------------------------------
    def domain(self):
        from .floes import Domain
        return Domain(self["domain.side"])

    def material(self):
        from .floes import MaterialParams
        return MaterialParams(self["material.rho_ice"], self["material.young"], self["material.shear"],
                              self["material.friction"], self["material.drag"], self["material.rho_ocean"])

    def size_distribution(self):
        from .floes import SizeDistribution
        return SizeDistribution(self["size.exponent"], self["size.scale"])

    def thickness_distribution(self):
        from .floes import ThicknessDistribution
        return ThicknessDistribution(self["thickness.shape"], self["thickness.scale"])

    def reduction(self):
        from .superfloe import ReductionConfig
        return ReductionConfig(self["floes.large"], self["floes.super"],
                               self["reduction.isolation_factor"], self["reduction.literal_pi_squared"])

    def integrator(self):
        from .integrator import IntegratorSettings
        return IntegratorSettings(dt=self["integrator.dt"], substep=self["integrator.substep"],
                                  max_substeps=self["integrator.max_substeps"],
                                  neighbor_grid=self["integrator.neighbor_grid"],
                                  thickness_ref=self["contact.thickness_ref"])

    def ocean(self):
        from .ocean import ModeClassParams, build_mode_set
        unit = self["ocean.time_unit"]
        gb = ModeClassParams(self["ocean.gb_damping"], self["ocean.gb_sigma"], self["ocean.gb_forcing"],
                             2 * math.pi * unit / self["ocean.gb_forcing_period"])
        grav = ModeClassParams(self["ocean.gravity_damping"], self["ocean.gravity_sigma"])
        return build_mode_set(self["ocean.k_max"], self["ocean.rossby"], gb, grav,
                              include_gravity=self["ocean.gravity"], side=self["domain.side"],
                              time_unit=unit)

    def field(self, seed=None):
        from .floes import initialize_field
        return initialize_field(
            self["floes.count"], self.domain(), self.size_distribution(), self.thickness_distribution(),
            seed=self["seed"] if seed is None else seed,
            radius_caps=(self["size.r_min"], self["size.r_max"]),
            thickness_caps=(self["thickness.h_min"], self["thickness.h_max"]),
            rho_ice=self["material.rho_ice"], sweeps=self["init.sweeps"])


def _coerce(name: str, value):
    key = KEYS[name]
    if key.kind is bool:
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s not in _BOOL:
            raise ConfigurationError(f"{name}: expected a boolean, got {value!r}")
        return _BOOL[s]
    if key.kind is str:
        s = str(value)
        if key.choices and s not in key.choices:
            raise ConfigurationError(f"{name}: expected one of {key.choices}, got {s!r}")
        return s
    if key.kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigurationError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def parse_value(name: str, text: str):
    """Parse one value with an optional unit suffix into the key's SI unit."""
    key = KEYS[name]
    text = text.strip()
    if key.kind in (bool, str):
        if not text:
            raise ConfigurationError(f"{name}: missing value")
        return _coerce(name, text)
    parts = text.split()
    if len(parts) not in (1, 2):
        raise ConfigurationError(f"{name}: cannot parse {text!r}")
    try:
        number = float(parts[0])
    except ValueError:
        raise ConfigurationError(f"{name}: {parts[0]!r} is not a number") from None
    if len(parts) == 2:
        unit = parts[1]
        table = UNITS[key.dimension]
        if unit not in table:
            allowed = ", ".join(table) or "no unit"
            raise ConfigurationError(f"{name}: unit {unit!r} does not fit (allowed: {allowed})")
        number *= table[unit]
    if key.kind is int:
        if not float(number).is_integer():
            raise ConfigurationError(f"{name}: expected an integer, got {text!r}")
        return int(number)
    return number


def parse_text(text: str, path: str | None = None) -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        name, val = m.group(1), m.group(2)
        if name not in KEYS:
            raise ConfigParseError(f"unknown key {name!r}", lineno, path)
        if name in values:
            raise ConfigParseError(f"duplicate key {name!r}", lineno, path)
        try:
            values[name] = parse_value(name, val)
        except ConfigurationError as exc:
            raise ConfigParseError(str(exc), lineno, path) from None
    try:
        return ScenarioConfig(values, source=path)
    except ConfigParseError:
        raise
    except ConfigurationError as exc:
        raise ConfigParseError(str(exc), None, path) from None


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigParseError("file not found", None, str(p))
    return parse_text(p.read_text(), str(p))


def reference_page() -> str:
    """Markdown table of every key with default, SI unit and accepted suffixes."""
    rows = ["| key | default | SI unit | suffixes | meaning |", "|---|---|---|---|---|"]
    for k, key in KEYS.items():
        suffixes = ", ".join(UNITS[key.dimension]) or "-"
        default = key.default
        if isinstance(default, float):
            default = f"{default:g}"
        extra = f" ({'/'.join(key.choices)})" if key.choices else ""
        rows.append(f"| `{k}` | {default} | {SI_UNIT[key.dimension] or '-'} | {suffixes} | {key.doc}{extra} |")
    return "# Configuration keys\n\n" + __doc__.split("\n\n", 1)[1].strip() + "\n\n" + "\n".join(rows) + "\n"
