"""Run configuration: a TOML file with one table per subsystem.

Every numeric key carries its unit as a suffix (``_m``, ``_hz``, ``_k``,
``_t``, ...).  Keys not in the schema are rejected with their dotted path so
typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli

from .axion import AxionEnvironment, SensorConfig
from .errors import ConfigError
from .field import CoilCalibration
from .inversion import MeasuredInput
from .langevin import SimConfig
from .trap import MagnetParams, TrapGeometry

SCHEMA_VERSION = "1"

UNIT_SUFFIXES = (
    "_m", "_hz", "_k", "_t", "_a", "_s", "_kg_m3", "_a_m", "_m_s2", "_t_per_a", "_deg",
    "_h", "_pa_s", "_gev_cm3", "_c", "_phi0_per_rad", "_phi0_rthz",
)

_SENSOR = {
    "radius_m": float,
    "density_kg_m3": float,
    "magnetization_a_m": float,
    "temperature_k": float,
    "q": float,
    "f0_hz": float,
}

# section -> key -> (type, default); a default of None marks a required key
SCHEMA: dict[str, dict] = {
    "": {"schema_version": (str, SCHEMA_VERSION)},
    "magnet": {
        "radius_m": (float, None),
        "density_kg_m3": (float, None),
        "magnetization_a_m": (float, None),
    },
    "trap": {
        "radius_m": (float, None),
        "g_m_s2": (float, 9.80674),
    },
    "measurement": {
        "f_z_hz": (float, None),
        "f_z_sigma_hz": (float, 0.0),
        "f_beta_hz": (float, None),
        "f_beta_sigma_hz": (float, 0.0),
        "density_sigma_kg_m3": (float, 0.0),
        "trap_radius_sigma_m": (float, 0.0),
        "g_sigma_m_s2": (float, 0.0),
        "f_alpha_hz": (float, None),
        "q": (float, None),
        "temperature_k": (float, None),
        "b0_t": (float, None),
        "viscous_linewidth_hz": (float, 0.852),
        "viscosity_pa_s": (float, 1.13e-6),
    },
    "coils": {
        "coil1_coupling_t_per_a": (float, None),
        "coil1_angle_deg": (float, None),
        "coil2_coupling_t_per_a": (float, None),
        "coil2_angle_deg": (float, None),
        "default_sigma_hz": (float, 1e-3),
        "fit_quantity": (str, "f"),
    },
    "noise": {
        "theta_deg": (float, 90.0),
        "input_inductance_h": (float, 1.8e-6),
        "total_inductance_h": (float, 1.8e-6),
        "backaction_excess_factor": (float, 1.0),
    },
    "lockin": {
        "noise_bandwidth_hz": (float, 1.0 / 64.0),
        "order": (int, 4),
        "scale": (str, "rms"),
    },
    "simulation": {
        "sample_rate_hz": (float, 3000.0),
        "duration_s": (float, 600.0),
        "detector_coupling_phi0_per_rad": (float, 1.0),
        "detector_noise_phi0_rthz": (float, 5e-6),
        "current_min_a": (float, 1e-12),
        "current_max_a": (float, 10 ** -9.5),
        "current_points": (int, 8),
        "n_seeds": (int, 50),
        "drive_amplitude_t": (float, 0.0),
    },
    "axion": {
        "rho_gev_cm3": (float, 0.4),
        "velocity_c": (float, 1e-3),
        "t_int_s": (float, 365.25 * 86400.0),
        "coherence_variant": (str, "omega"),
        "tuning": (str, "fixed"),
        "grid_min_hz": (float, 1e-4),
        "grid_max_hz": (float, 1e3),
        "grid_points": (int, 200),
        "current": (dict, None),
        "improved": (dict, None),
    },
}

# dimensionless or otherwise suffix-free keys
_UNITLESS = {
    "schema_version", "q", "order", "scale", "n_seeds", "current_points", "grid_points",
    "coherence_variant", "tuning", "fit_quantity", "backaction_excess_factor", "current", "improved",
}

# keys allowed to be zero
_NONNEG = {
    "f_z_sigma_hz", "f_beta_sigma_hz", "density_sigma_kg_m3", "trap_radius_sigma_m",
    "g_sigma_m_s2", "drive_amplitude_t",
}

_CHOICES = {
    ("coils", "fit_quantity"): ("f", "f2"),
    ("lockin", "scale"): ("rms", "peak"),
    ("axion", "coherence_variant"): ("omega", "literal"),
    ("axion", "tuning"): ("fixed", "tuned"),
}


def _has_unit(key: str) -> bool:
    return key in _UNITLESS or any(key.endswith(s) for s in UNIT_SUFFIXES)


def _coerce(path: str, value, typ):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if typ is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a table")
        return value
    raise AssertionError(typ)


def _validate_sensor(path: str, table: dict) -> dict:
    out = {}
    for k, v in table.items():
        if k not in _SENSOR:
            raise ConfigError(f"{path}.{k}: unknown key")
        out[k] = _coerce(f"{path}.{k}", v, _SENSOR[k])
        if not out[k] > 0:
            raise ConfigError(f"{path}.{k}: must be > 0")
    missing = set(_SENSOR) - set(out)
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    return out


@dataclass
class RunConfig:
    data: dict
    path: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def schema_version(self) -> str:
        return self.data[""]["schema_version"]

    # typed views ---------------------------------------------------------

    def magnet(self):
        m = self["magnet"]
        return MagnetParams(m["radius_m"], m["density_kg_m3"], m["magnetization_a_m"])

    def trap(self):
        return TrapGeometry(self["trap"]["radius_m"], self["trap"]["g_m_s2"])

    def measured_inputs(self) -> dict:
        m, t = self["measurement"], self["trap"]
        return {
            "f_z": MeasuredInput(m["f_z_hz"], m["f_z_sigma_hz"]),
            "f_beta": MeasuredInput(m["f_beta_hz"], m["f_beta_sigma_hz"]),
            "density": MeasuredInput(self["magnet"]["density_kg_m3"], m["density_sigma_kg_m3"]),
            "trap_radius": MeasuredInput(t["radius_m"], m["trap_radius_sigma_m"]),
            "g": MeasuredInput(t["g_m_s2"], m["g_sigma_m_s2"]),
        }

    def coil(self, k: int):
        c = self["coils"]
        return CoilCalibration(c[f"coil{k}_coupling_t_per_a"], np.radians(c[f"coil{k}_angle_deg"]))

    def sensor(self, name: str):
        s = self["axion"][name]
        mag = MagnetParams(s["radius_m"], s["density_kg_m3"], s["magnetization_a_m"])
        return SensorConfig(mag, s["temperature_k"], s["q"], s["f0_hz"])

    def environment(self):
        return AxionEnvironment(self["axion"]["rho_gev_cm3"], self["axion"]["velocity_c"])

    def sim_config(self, magnet=None, seed: int = 0, **overrides):
        s, m = self["simulation"], self["measurement"]
        kw = dict(
            magnet=magnet if magnet is not None else self.magnet(),
            Q=m["q"],
            temperature=m["temperature_k"],
            sample_rate=s["sample_rate_hz"],
            duration=s["duration_s"],
            B0=m["b0_t"],
            detector_coupling=s["detector_coupling_phi0_per_rad"],
            detector_noise_psd=s["detector_noise_phi0_rthz"] ** 2,
            seed=seed,
        )
        kw.update(overrides)
        return SimConfig(**kw)

    def current_grid(self) -> np.ndarray:
        s = self["simulation"]
        return np.geomspace(s["current_min_a"], s["current_max_a"], s["current_points"])

    def frequency_grid(self) -> np.ndarray:
        a = self["axion"]
        return np.geomspace(a["grid_min_hz"], a["grid_max_hz"], a["grid_points"])


def validate(raw: dict, path: str | None = None) -> RunConfig:
    """Check ``raw`` against the schema, fill defaults and return a RunConfig."""
    data: dict[str, dict] = {}
    for key in raw:
        if key not in SCHEMA and key not in SCHEMA[""]:
            raise ConfigError(f"{key}: unknown key")
    top = {}
    for key, (typ, default) in SCHEMA[""].items():
        top[key] = _coerce(key, raw[key], typ) if key in raw else default
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION!r}, got {top['schema_version']!r}")
    data[""] = top
    for section, fields in SCHEMA.items():
        if not section:
            continue
        table = raw.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"{section}: expected a table")
        out = {}
        for key, value in table.items():
            if key not in fields:
                raise ConfigError(f"{section}.{key}: unknown key")
        for key, (typ, default) in fields.items():
            p = f"{section}.{key}"
            if key in table:
                v = _coerce(p, table[key], typ)
            elif default is None:
                raise ConfigError(f"{p}: required key is missing")
            else:
                v = default
            if typ is dict:
                v = _validate_sensor(p, v)
            elif typ in (float, int) and key in _NONNEG:
                if v < 0:
                    raise ConfigError(f"{p}: must be >= 0, got {v!r}")
            elif typ in (float, int) and not v > 0:
                raise ConfigError(f"{p}: must be > 0, got {v!r}")
            choices = _CHOICES.get((section, key))
            if choices and v not in choices:
                raise ConfigError(f"{p}: must be one of {choices}, got {v!r}")
            out[key] = v
        data[section] = out
    c = data["coils"]
    for k in (1, 2):
        ang = c[f"coil{k}_angle_deg"]
        if not 0.0 <= ang <= 180.0:
            raise ConfigError(f"coils.coil{k}_angle_deg: must lie in [0, 180], got {ang!r}")
    if not 0.0 < data["axion"]["velocity_c"] < 1.0:
        raise ConfigError("axion.velocity_c: must lie in (0, 1)")
    if data["noise"]["backaction_excess_factor"] < 1.0:
        raise ConfigError("noise.backaction_excess_factor: must be >= 1")
    return RunConfig(data, path)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: config file not found")
    try:
        raw = tomli.loads(p.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return validate(raw, str(p))


def default_config_path() -> Path:
    """The shipped reference configuration."""
    return Path(__file__).resolve().parent / "data" / "reference.toml"


def default_config() -> RunConfig:
    return load_config(default_config_path())
