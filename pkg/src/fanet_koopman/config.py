"""Experiment configuration and its flat ``section.key = value`` text format.

Example::

    # comments start with '#'
    scenario.uavs = 4
    channel.radius = 500.0
    evaluation.horizons = 20, 50
"""
from __future__ import annotations

import dataclasses
import hashlib
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelParams, kappa_from_radius
from .dynamics import SEPARATION_RULES, FleetSampling, WindParams
from .koopman import TrainingConfig

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass
class ScenarioConfig:
    uavs: int = 4
    steps: int = 2000
    area_width: float = 1000.0
    area_height: float = 1000.0
    velocity_min: float = 10.0
    velocity_max: float = 15.0
    turn_rate_min: float = 0.01
    turn_rate_max: float = 0.05
    wind_velocity: float = 1e-8
    wind_angle: float = 1e-8
    separation: str = "centers"
    seed: int = 0

    def validate(self):
        if self.uavs < 2:
            raise ConfigError(f"scenario.uavs must be >= 2, got {self.uavs}")
        if self.steps < 1:
            raise ConfigError(f"scenario.steps must be >= 1, got {self.steps}")
        if self.area_width <= 0 or self.area_height <= 0:
            raise ConfigError("scenario area must be positive")
        if self.velocity_min > self.velocity_max or self.velocity_min < 0:
            raise ConfigError("scenario velocity range is invalid")
        if self.turn_rate_min > self.turn_rate_max:
            raise ConfigError("scenario turn-rate range is invalid")
        if self.separation not in SEPARATION_RULES:
            raise ConfigError(f"scenario.separation must be one of {sorted(SEPARATION_RULES)}")

    def sampling(self) -> FleetSampling:
        return FleetSampling(
            uavs=self.uavs, area=(self.area_width, self.area_height),
            velocity_range=(self.velocity_min, self.velocity_max),
            turn_rate_range=(self.turn_rate_min, self.turn_rate_max),
            wind=WindParams(self.wind_velocity, self.wind_angle),
            separation=self.separation)


@dataclass
class ChannelConfig:
    power: float = 0.1
    path_loss_exponent: float = 2.0
    noise_dbm_per_hz: float = -174.0
    bandwidth: float = 1e6
    kappa_db: float | None = None
    radius: float | None = 500.0
    self_interference: bool = False

    def validate(self):
        if (self.kappa_db is None) == (self.radius is None):
            raise ConfigError("give exactly one of channel.kappa_db and channel.radius")
        if self.radius is not None and self.radius <= 0:
            raise ConfigError("channel.radius must be positive")
        if self.power <= 0 or self.bandwidth <= 0 or self.path_loss_exponent <= 0:
            raise ConfigError("channel power, bandwidth and path-loss exponent must be positive")

    def params(self) -> ChannelParams:
        base = ChannelParams(self.power, self.noise_dbm_per_hz, self.bandwidth,
                             self.path_loss_exponent, 1.0, self.self_interference)
        if self.radius is not None:
            return base.with_kappa(kappa_from_radius(self.radius, base))
        return base.with_kappa(10.0 ** (self.kappa_db / 10.0))


@dataclass
class EvaluationConfig:
    horizons: list[int] = field(default_factory=lambda: [20, 50])
    kappa_db: list[float] = field(default_factory=lambda: [-2.0, 0.0, 2.0])
    radii: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    error_domain: str = "db"

    def validate(self):
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigError("evaluation.horizons must list positive step counts")
        if not self.kappa_db and not self.radii:
            raise ConfigError("evaluation needs at least one kappa_db or radius sweep point")
        if any(r <= 0 for r in self.radii):
            raise ConfigError("evaluation.radii must be positive")
        if self.error_domain not in ("db", "linear"):
            raise ConfigError("evaluation.error_domain must be 'db' or 'linear'")
        if not self.seeds:
            raise ConfigError("evaluation.seeds must not be empty")

    def sweep_points(self, channel: ChannelParams) -> list[tuple[str, float, float]]:
        """(kind, value, linear kappa) for every sweep point, kappa points first."""
        points = [("kappa_db", v, 10.0 ** (v / 10.0)) for v in self.kappa_db]
        points += [("radius", r, kappa_from_radius(r, channel)) for r in self.radii]
        return points


@dataclass
class RunConfig:
    mode: str = "centralized"
    seed: int = 0

    def validate(self):
        if self.mode not in ("centralized", "distributed"):
            raise ConfigError("training mode must be 'centralized' or 'distributed'")


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    run: RunConfig = field(default_factory=RunConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def validate(self) -> ExperimentConfig:
        self.scenario.validate()
        self.channel.validate()
        self.run.validate()
        self.evaluation.validate()
        return self

    def to_text(self, sections=None) -> str:
        lines = []
        for name in sections or SECTIONS:
            section = getattr(self, name)
            for f in dataclasses.fields(section):
                lines.append(f"{name}.{f.name} = {_render(getattr(section, f.name))}")
        return "\n".join(lines) + "\n"

    def dataset_hash(self) -> str:
        """Fingerprint of everything that determines a generated dataset."""
        text = f"format {FORMAT_VERSION}\n" + self.to_text(("scenario", "channel"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def set(self, key: str, raw: str):
        section_name, _, name = key.partition(".")
        if section_name not in SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        section = getattr(self, section_name)
        hints = typing.get_type_hints(type(section))
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = _parse(raw, hints[name])
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        setattr(section, name, value)


SECTIONS = ("scenario", "channel", "training", "run", "evaluation")


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(raw: str, hint):
    raw = raw.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if raw.lower() == "none":
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _parse(raw, inner)
    if origin is list:
        if not raw:
            return []
        return [_parse(part, args[0]) for part in raw.split(",")]
    if hint is bool:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    config = base or ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        config.set(key.strip(), value)
    return config


def preset(name: str) -> ExperimentConfig:
    """Named presets. ``table1`` is the reference 4-UAV, 1 km^2 setup."""
    if name == "table1":
        return ExperimentConfig()
    if name == "smoke":
        # tiny setup for quick end-to-end checks
        config = ExperimentConfig()
        config.scenario.steps = 300
        config.scenario.uavs = 3
        config.training = TrainingConfig(latent_dim=4, hidden_width=16, hidden_layers=2,
                                         horizon=5, epochs=3, embedding_dim=8,
                                         decoder_width=16)
        config.evaluation.horizons = [5]
        config.evaluation.seeds = [0, 1]
        return config
    raise ConfigError(f"unknown preset {name!r}; choose from table1, smoke")


def load_config(path: str | os.PathLike | None = None, preset_name: str = "table1",
                overrides: dict[str, str] | None = None) -> ExperimentConfig:
    config = preset(preset_name)
    if path is not None:
        config = parse_config(Path(path).read_text(), config)
    for key, value in (overrides or {}).items():
        config.set(key, value)
    return config.validate()
