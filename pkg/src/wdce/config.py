"""Run configuration: one JSON document with ``synth``, ``train``, ``backbone``
and ``run`` sections.

Precedence is flag > config file > ``WDCE_SEED`` (seeds only) > built-in
default.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .backbone import BackboneConfig
from .data import SynthSpec
from .model import TrainConfig

SEED_ENV = "WDCE_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class RunOptions:
    train_fraction: float = 0.8
    split_seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


SECTIONS = {"synth": SynthSpec, "train": TrainConfig, "backbone": BackboneConfig, "run": RunOptions}
SEEDED = (("synth", "seed"), ("train", "seed"))


@dataclass
class RunConfig:
    synth: SynthSpec = field(default_factory=SynthSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    run: RunOptions = field(default_factory=RunOptions)

    def to_dict(self) -> dict:
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        _check_sections(doc)
        return cls(**{name: build_section(name, doc.get(name, {})) for name in SECTIONS})


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _check_sections(doc) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s) {unknown}; expected {sorted(SECTIONS)}")


def field_defaults(section: str) -> dict:
    return _plain(asdict(SECTIONS[section]()))


def coerce(key: str, default, value):
    """Check/convert ``value`` to the type of ``default``; strings are parsed as flag text."""
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                low = value.lower()
                if low not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return low in ("true", "1", "yes")
            if not isinstance(value, bool):
                raise TypeError(value)
            return value
        if isinstance(default, int):
            if isinstance(value, str):
                return int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(value)
            return value
        if isinstance(default, float):
            if isinstance(value, str):
                return float(value)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(value)
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError(value)
            return value
        if isinstance(default, list):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, list) or not value:
                raise TypeError(value)
            proto = default[0] if default else 0.0
            return [coerce(key, proto, v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot use {value!r} where a {type(default).__name__} is expected") from None
    raise ConfigError(f"{key}: unsupported field type {type(default).__name__}")


def build_section(name: str, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    defaults = field_defaults(name)
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {name!r}")
    merged = dict(defaults)
    for k, v in values.items():
        merged[k] = coerce(f"{name}.{k}", defaults[k], v)
    try:
        return SECTIONS[name](**merged)
    except ValueError as e:
        raise ConfigError(f"section {name!r}: {e}") from None


def flag_names() -> list[tuple[str, str]]:
    """Every overridable ``(section, key)`` pair, exposed as ``--section.key``."""
    return [(s, f.name) for s, cls in SECTIONS.items() for f in fields(cls)]


def read_json_object(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a JSON object, got {type(doc).__name__}")
    return doc


def read_config_file(path) -> dict:
    doc = read_json_object(path)
    _check_sections(doc)
    return doc


def resolve(path=None, overrides: dict[str, str] | None = None, env=None) -> RunConfig:
    """Merge defaults, ``WDCE_SEED``, a config file and ``section.key`` flag overrides."""
    env = os.environ if env is None else env
    doc = read_config_file(path) if path else {}
    doc = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    seed_env = env.get(SEED_ENV)
    if seed_env not in (None, ""):
        try:
            seed = int(seed_env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed_env!r}") from None
        for section, key in SEEDED:
            sec = doc.setdefault(section, {})
            if isinstance(sec, dict):
                sec.setdefault(key, seed)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigError(f"unknown option {dotted!r}")
        sec = doc.setdefault(section, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {section!r} must be an object")
        sec[key] = value
    return RunConfig.from_dict(doc)
