"""Run configuration: nested dataclasses read from and written to JSON.

Unknown keys are rejected. Powers are given in dBm and converted to watts
by the accessors on :class:`PowerConfig`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .patterns import SolverConfig
from .pointcloud import DetectionConfig
from .slam import RegistrationConfig, SlamConfig

MODES = ("rhs-optimized", "rhs-random", "phased-array")
CONFIG_SCHEMA = "rhsslam.config/1"

DEFAULT_OBSTACLES = [[10.0, 65.0], [25.0, 10.0], [30.0, 65.0], [35.0, 10.0], [50.0, 65.0]]
DEFAULT_WAYPOINTS = [[0.0, 37.5], [15.0, 36.5], [30.0, 37.5], [45.0, 38.5], [60.0, 37.5]]


@dataclass
class ScenarioConfig:
    """Obstacles as ``[x, y]`` or ``[x, y, reflectivity]`` rows in metres."""

    obstacles: list = field(default_factory=lambda: [list(o) for o in DEFAULT_OBSTACLES])
    waypoints: list = field(default_factory=lambda: [list(w) for w in DEFAULT_WAYPOINTS])
    cycles: int = 50
    reflectivity: float = 0.02
    max_range: float = 100.0


@dataclass
class ApertureConfig:
    elements: int = 60
    spacing_wavelengths: float = 0.25
    surface_index: float = 1.2
    cost_ratio: float = 6.0
    phased_spacing_wavelengths: float = 0.5


@dataclass
class WaveformConfig:
    center_frequency: float = 24.125e9
    bandwidth: float = 250e6
    chirp_duration: float = 10e-6
    sample_rate: float = 250e6


@dataclass
class GridConfig:
    step_deg: float = 1.0
    sector_deg: float = 90.0


@dataclass
class PowerConfig:
    tx_power_dbm: float = 30.0
    noise_dbm: float = -40.0

    @property
    def tx_power(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watt(self.noise_dbm)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.noise_power))


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    aperture: ApertureConfig = field(default_factory=ApertureConfig)
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    slam: SlamConfig = field(default_factory=SlamConfig)
    mode: str = "rhs-optimized"
    seed: int = 0
    out: str = "out"
    bank_cache: str = ".bank_cache"

    def to_dict(self) -> dict:
        doc = {"schema": CONFIG_SCHEMA}
        doc.update(dataclasses.asdict(self))
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def dbm_to_watt(dbm: float) -> float:
    return float(10 ** ((dbm - 30) / 10))


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ValidationError(path or "<root>", f"expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValidationError(f"{path}.{unknown[0]}".lstrip("."), "unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}".lstrip(".")
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, sub)
        elif tp is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(sub, "expected a number")
            kwargs[name] = float(value)
        elif tp is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(sub, "expected an integer")
            kwargs[name] = value
        elif tp is str:
            if not isinstance(value, str):
                raise ValidationError(sub, "expected a string")
            kwargs[name] = value
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ValidationError(path or "<root>", str(exc)) from exc


def _positive(value, name):
    if not value > 0:
        raise ValidationError(name, f"must be positive, got {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    """Raise ``ValidationError`` naming the first bad field."""
    if cfg.mode not in MODES:
        raise ValidationError("mode", f"must be one of {', '.join(MODES)}")
    if cfg.seed < 0:
        raise ValidationError("seed", "must be non-negative")
    sc = cfg.scenario
    _positive(sc.cycles, "scenario.cycles")
    _positive(sc.reflectivity, "scenario.reflectivity")
    _positive(sc.max_range, "scenario.max_range")
    for k, ob in enumerate(sc.obstacles):
        if not isinstance(ob, (list, tuple)) or len(ob) not in (2, 3):
            raise ValidationError(f"scenario.obstacles[{k}]", "expected [x, y] or [x, y, reflectivity]")
        if len(ob) == 3:
            _positive(ob[2], f"scenario.obstacles[{k}][2]")
    if not sc.waypoints or any(len(w) != 2 for w in sc.waypoints):
        raise ValidationError("scenario.waypoints", "expected a non-empty list of [x, y]")
    ap = cfg.aperture
    _positive(ap.elements, "aperture.elements")
    _positive(ap.spacing_wavelengths, "aperture.spacing_wavelengths")
    _positive(ap.phased_spacing_wavelengths, "aperture.phased_spacing_wavelengths")
    _positive(ap.cost_ratio, "aperture.cost_ratio")
    if ap.surface_index < 1:
        raise ValidationError("aperture.surface_index", "must be >= 1")
    for name in ("center_frequency", "bandwidth", "chirp_duration", "sample_rate"):
        _positive(getattr(cfg.waveform, name), f"waveform.{name}")
    if cfg.waveform.sample_rate < cfg.waveform.bandwidth:
        raise ValidationError("waveform.sample_rate", "must be at least the bandwidth")
    _positive(cfg.grid.step_deg, "grid.step_deg")
    _positive(cfg.grid.sector_deg, "grid.sector_deg")
    ratio = cfg.grid.sector_deg / cfg.grid.step_deg
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValidationError("grid.step_deg", "must divide the sector evenly")
    sl = cfg.slam
    _positive(sl.particles, "slam.particles")
    _positive(sl.gate, "slam.gate")
    _positive(sl.obs_std, "slam.obs_std")
    _positive(sl.init_std, "slam.init_std")
    _positive(sl.registration.cell, "slam.registration.cell")
    return cfg


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    schema = data.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ValidationError("schema", f"unsupported schema {schema!r}")
    return validate(_build(RunConfig, data, ""))


def load_config(path) -> RunConfig:
    """Read, fill defaults and validate a JSON run configuration."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")


__all__ = [
    "ApertureConfig", "DetectionConfig", "GridConfig", "MODES", "PowerConfig",
    "RegistrationConfig", "RunConfig", "ScenarioConfig", "SlamConfig", "SolverConfig",
    "WaveformConfig", "config_from_dict", "dbm_to_watt", "load_config", "save_config",
    "validate",
]
