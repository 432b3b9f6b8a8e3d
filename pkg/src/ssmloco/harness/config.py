"""Run configuration and its sectioned key/value file format.

Example::

    [run]
    variant = ssm-fusion
    seeds = 0 1 2
    iterations = 200

    [ppo]
    samples_per_iter = 1024

    [arch]
    token_width = 32

    [scenario]
    scenario = thin

    [curriculum]
    ramp_iters = 100
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..config import DESK_ARCH, PAPER_ARCH, ArchConfig
from ..envsim import CurriculumSchedule, ScenarioConfig, scenario_from_mapping
from ..models import VARIANTS
from ..ppo import PpoConfig


@dataclass(frozen=True)
class RunConfig:
    variant: str = "ssm-fusion"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    arch: ArchConfig = field(default_factory=lambda: DESK_ARCH)
    curriculum: CurriculumSchedule = field(default_factory=CurriculumSchedule)
    seeds: tuple = (0,)
    iterations: int = 200
    n_envs: int = 8
    eval_every: int = 50          # 0 disables periodic evaluation; the final one always runs
    eval_repeats: int = 10
    eval_episodes: int = 3
    eval_seed: int = 10_000
    out_dir: str = "runs"
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.n_envs < 1 or self.iterations < 0 or self.eval_repeats < 1 or self.eval_episodes < 1:
            raise ValueError("n_envs, eval_repeats and eval_episodes must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.arch.action_dim != self.scenario.action_dim:
            raise ValueError("architecture and scenario disagree on the action dimension")
        if self.arch.proprio_dim != self.scenario.proprio_dim:
            raise ValueError("architecture and scenario disagree on the proprio dimension")
        if (self.arch.height, self.arch.width, self.arch.frames) != (
                self.scenario.depth_height, self.scenario.depth_width, self.scenario.frames):
            raise ValueError("architecture and scenario disagree on the depth layout")
        if self.ppo.horizon != self.scenario.horizon:
            raise ValueError("ppo and scenario disagree on the episode horizon")
        self.arch.validate()

    @property
    def steps_per_env(self) -> int:
        return -(-self.ppo.samples_per_iter // self.n_envs)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def to_sections(self) -> dict:
        run = {f.name: getattr(self, f.name) for f in fields(self)
               if f.name not in ("scenario", "ppo", "arch", "curriculum")}
        return {"run": run, "ppo": self.ppo.to_dict(), "arch": self.arch.to_dict(),
                "scenario": self.scenario.to_dict(), "curriculum": asdict(self.curriculum)}


def desk_config(**kw) -> RunConfig:
    """Reduced settings that train in minutes on one CPU core."""
    ppo = PpoConfig(horizon=500, samples_per_iter=1024, minibatch=256, epochs=3,
                    lr_policy=1e-3, lr_value=1e-3)
    scenario = ScenarioConfig(horizon=500)
    return RunConfig(scenario=scenario, ppo=ppo, arch=DESK_ARCH,
                     curriculum=CurriculumSchedule(0.3, 1.0, 100), **kw)


def paper_config(**kw) -> RunConfig:
    """Full-width architecture, 64x64 depth and the original PPO budget."""
    arch = PAPER_ARCH.with_(proprio_dim=15, action_dim=3)
    scenario = ScenarioConfig(horizon=999, depth_height=64, depth_width=64)
    return RunConfig(scenario=scenario, ppo=PpoConfig(), arch=arch,
                     curriculum=CurriculumSchedule(0.3, 1.0, 100), **kw)


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return str(v)


def _coerce(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        vals = raw.replace(",", " ").split()
        kind = type(default[0]) if default else int
        return tuple(kind(float(x)) if kind is int else kind(x) for x in vals)
    return raw


def _merge(obj, items: dict, section: str):
    names = {f.name for f in fields(obj)}
    kw = {}
    for k, raw in items.items():
        if k not in names:
            raise KeyError(f"[{section}] unknown key {k!r}")
        kw[k] = _coerce(raw, getattr(obj, k))
    return replace(obj, **kw)


def load_run_config(path, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(path)
    cfg = base or desk_config()
    known = {"run", "ppo", "arch", "scenario", "curriculum"}
    extra = set(parser.sections()) - known
    if extra:
        raise KeyError(f"{path}: unknown sections {sorted(extra)}")
    ppo = _merge(cfg.ppo, dict(parser["ppo"]), "ppo") if "ppo" in parser else cfg.ppo
    arch = _merge(cfg.arch, dict(parser["arch"]), "arch") if "arch" in parser else cfg.arch
    scen = scenario_from_mapping(dict(parser["scenario"]), cfg.scenario) if "scenario" in parser else cfg.scenario
    cur = _merge(cfg.curriculum, dict(parser["curriculum"]), "curriculum") if "curriculum" in parser else cfg.curriculum
    run_items = dict(parser["run"]) if "run" in parser else {}
    kw = {}
    for k, raw in run_items.items():
        if k not in {f.name for f in fields(RunConfig)} or k in known:
            raise KeyError(f"[run] unknown key {k!r}")
        kw[k] = _coerce(raw, getattr(cfg, k))
    return replace(cfg, ppo=ppo, arch=arch, scenario=scen, curriculum=cur, **kw)


def save_run_config(cfg: RunConfig, path) -> None:
    parser = configparser.ConfigParser()
    for name, section in cfg.to_sections().items():
        parser[name] = {k: _fmt(v) for k, v in section.items()}
    with open(Path(path), "w") as fh:
        parser.write(fh)
