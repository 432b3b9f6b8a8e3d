"""Scenario settings and their key/value file format.

A scenario file is INI-style::

    [scenario]
    scenario = thin
    arena_length = 20.0
    max_obstacles = 20
    seed = 7
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

SCENARIOS = ("thin", "rugged", "dynamic")
_ALIASES = {"thin-obstacle": "thin", "thin_obstacle": "thin", "rugged-terrain": "rugged",
            "dynamic-obstacle": "dynamic", "dynamic_obstacle": "dynamic"}


def canonical_scenario(name: str) -> str:
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    return key


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "thin"
    # arena: corridor along +x, |y| <= arena_width / 2
    arena_length: float = 20.0
    arena_width: float = 3.0
    obstacle_start: float = 1.5
    max_obstacles: int = 20
    obstacle_height: float = 0.5
    obstacle_thickness: float = 0.05
    obstacle_half_span: tuple = (0.2, 0.6)
    obstacle_speed: tuple = (0.2, 0.6)
    height_amplitude: float = 0.05
    height_cell: float = 0.25
    # agent and timing
    agent_radius: float = 0.15
    dt: float = 0.02
    horizon: int = 500
    action_dim: int = 3
    proprio_dim: int = 15
    # camera
    depth_height: int = 16
    depth_width: int = 16
    frames: int = 4
    fov_h_deg: float = 90.0
    fov_v_deg: float = 60.0
    max_range: float = 5.0
    camera_height: float = 0.25
    salt_noise: bool = True
    randomize: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", canonical_scenario(self.scenario))
        if self.height_amplitude < 0 or self.height_amplitude > 0.05:
            raise ValueError("height amplitude must lie in [0, 0.05] m")
        if self.action_dim < 3:
            raise ValueError("the corridor plant needs at least 3 action dims")
        needed = 6 + 3 * self.action_dim
        if self.proprio_dim < needed:
            raise ValueError(f"proprio_dim {self.proprio_dim} < {needed} required for {self.action_dim}-D actions")

    @property
    def dynamic(self) -> bool:
        return self.scenario == "dynamic"

    @property
    def rugged(self) -> bool:
        return self.scenario == "rugged"

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(v) for v in value.replace(",", " ").split())
    return value.strip()


def scenario_from_mapping(items: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(ScenarioConfig)}
    kw = {}
    for key, value in items.items():
        if key not in defaults:
            raise KeyError(f"unknown scenario key {key!r}")
        kw[key] = _coerce(value, defaults[key]) if isinstance(value, str) else value
    return replace(base, **kw)


def load_scenario(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    if "scenario" not in parser:
        raise KeyError(f"{path}: missing [scenario] section")
    return scenario_from_mapping(dict(parser["scenario"]), base)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["scenario"] = {k: (" ".join(str(x) for x in v) if isinstance(v, tuple) else str(v))
                          for k, v in cfg.to_dict().items()}
    with open(Path(path), "w") as fh:
        parser.write(fh)
