"""Simulation configuration: flat ``key: value`` YAML files over the per-module configs."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import RadioConfig
from .errors import ConfigError
from .planner import PlannerParams
from .qnet import TrainConfig
from .world import TaskConfig

POLICIES = ("gosc", "trad", "periodic", "event")
_SECTIONS = (("radio", RadioConfig), ("task", TaskConfig), ("planner", PlannerParams), ("train", TrainConfig))
_TOP_LEVEL = ("seeds", "policy", "out_dir")


def _init_fields(cls):
    return [f for f in dataclasses.fields(cls) if f.init]


def _key_owner():
    owner = {}
    for section, cls in _SECTIONS:
        for f in _init_fields(cls):
            owner[f.name] = section
    return owner


@dataclass(frozen=True)
class SimConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    planner: PlannerParams = field(default_factory=PlannerParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = tuple(range(20))
    policy: str = "gosc"
    out_dir: str = "results"

    def to_dict(self) -> dict:
        out = {}
        for section, _ in _SECTIONS:
            obj = getattr(self, section)
            for f in _init_fields(type(obj)):
                v = getattr(obj, f.name)
                out[f.name] = list(v) if isinstance(v, tuple) else v
        out["seeds"] = list(self.seeds)
        out["policy"] = self.policy
        out["out_dir"] = self.out_dir
        return out


def _coerce(name, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}", key=name)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{name}: expected an integer, got {value!r}", key=name)
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}", key=name)
        if not math.isfinite(value):
            raise ConfigError(f"{name}: must be finite", key=name)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise ConfigError(f"{name}: expected a list of {len(default)} numbers", key=name)
        return tuple(_coerce(name, v, d) for v, d in zip(value, default))
    return value


def config_from_dict(data: dict | None) -> SimConfig:
    """Build and validate a SimConfig; absent keys take the default parameter set."""
    data = dict(data or {})
    owner = _key_owner()
    unknown = sorted(k for k in data if k not in owner and k not in _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown configuration key {unknown[0]!r}", key=unknown[0])

    parts = {}
    for section, cls in _SECTIONS:
        defaults = cls()
        kwargs = {}
        for f in _init_fields(cls):
            if f.name in data:
                kwargs[f.name] = _coerce(f.name, data[f.name], getattr(defaults, f.name))
        obj = cls(**kwargs)
        bad = obj.validate()
        if bad:
            raise ConfigError(f"invalid value for {bad[0]!r}: {getattr(obj, bad[0])!r}", key=bad[0])
        parts[section] = obj

    seeds = data.get("seeds", SimConfig().seeds)
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = list(range(seeds))
    if not isinstance(seeds, (list, tuple)) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("seeds: expected a non-empty list of non-negative integers", key="seeds")
    policy = data.get("policy", "gosc")
    if policy not in POLICIES:
        raise ConfigError(f"policy: expected one of {POLICIES}, got {policy!r}", key="policy")
    out_dir = str(data.get("out_dir", "results"))
    return SimConfig(seeds=tuple(seeds), policy=policy, out_dir=out_dir, **parts)


def load_config(path) -> SimConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{path}:{line}: cannot parse configuration: {exc}", line=line) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected key: value pairs at top level", line=1)
    return config_from_dict(data)


def dump_config(cfg: SimConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save_config(cfg: SimConfig, path):
    Path(path).write_text(dump_config(cfg))
