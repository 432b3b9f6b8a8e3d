"""The training loop: curriculum, collection, GAE, PPO epochs, evaluation."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ArchConfig
from ..diffcore import NonFiniteError, load_checkpoint, save_checkpoint
from ..envsim import CurriculumSchedule, scenario_from_mapping, write_episode_csv
from ..models import Agent
from ..ppo import STATS_COLUMNS, PpoConfig, PpoDivergence, make_optimizers, update
from .analytics import efficiency_stats, stability_stats
from .config import RunConfig
from .evaluate import evaluate, summary_rows
from .rollout import VecEnv, collect

log = logging.getLogger(__name__)

TRAIN_COLUMNS = ("iter", "samples", "density", "epoch_return", "episodes_done", "mean_abs_adv",
                 "loss_value")
EVAL_COLUMNS = ("iter", "repeat", "mean_return", "collision_times", "distance")


@dataclass
class RunMetrics:
    variant: str
    seed: int
    returns: list = field(default_factory=list)          # per-epoch mean return
    value_loss: list = field(default_factory=list)
    mean_abs_adv: list = field(default_factory=list)
    evals: dict = field(default_factory=dict)            # iter -> EvalSummary
    diverged: bool = False

    @property
    def final_eval(self):
        return self.evals[max(self.evals)] if self.evals else None

    def stability(self, window: int = 200) -> dict | None:
        if len(self.value_loss) < window:
            return None
        return stability_stats({"value_loss": self.value_loss, "advantage": self.mean_abs_adv}, window)

    def efficiency(self, early_window: int = 120) -> dict | None:
        if len(self.returns) <= early_window:
            return None
        return efficiency_stats(self.returns, early_window)


def _dtype(name: str):
    return np.float64 if name == "float64" else np.float32


def build_agent(cfg: RunConfig, seed: int) -> Agent:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    return Agent(cfg.variant, cfg.arch, rng, _dtype(cfg.dtype))


def _fill_returns(raw: list) -> list:
    """Carry the last observed epoch return forward; leading gaps take the first value."""
    out, last = [], None
    for v in raw:
        last = v if v is not None else last
        out.append(last)
    first = next((v for v in raw if v is not None), 0.0)
    return [first if v is None else v for v in out]


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def save_agent(agent: Agent, cfg: RunConfig, seed: int, path, rng_state=None, extra=None) -> None:
    meta = {"variant": agent.variant, "seed": seed, "config": cfg.to_sections()}
    meta.update(extra or {})
    save_checkpoint(path, agent.state_arrays(), "double" if cfg.dtype == "float64" else "single",
                    rng_state, meta)


def run_config_from_sections(sections: dict) -> RunConfig:
    def tup(d):
        return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    run = tup(sections["run"])
    return RunConfig(scenario=scenario_from_mapping(tup(sections["scenario"])),
                     ppo=PpoConfig(**sections["ppo"]), arch=ArchConfig.from_dict(sections["arch"]),
                     curriculum=CurriculumSchedule(**sections["curriculum"]), **run)


def load_agent(path) -> tuple[Agent, RunConfig, dict]:
    arrays, header = load_checkpoint(path)
    meta = header["meta"]
    cfg = run_config_from_sections(meta["config"])
    agent = build_agent(cfg, int(meta["seed"]))
    agent.load_arrays(arrays)
    return agent, cfg, meta


def _dump_divergence(out: Path | None, it: int, agent: Agent, exc: Exception) -> None:
    if out is None:
        return
    norms = {k: float(np.linalg.norm(v.data)) if np.all(np.isfinite(v.data)) else "non-finite"
             for k, v in agent.named_parameters().items()}
    with open(out / "divergence.json", "w") as fh:
        json.dump({"iter": it, "error": str(exc), "param_norms": norms}, fh, indent=1)


def train(cfg: RunConfig, seed: int | None = None, out_dir=None, progress: bool = False) -> RunMetrics:
    """Train one variant with one seed; writes CSV logs and a checkpoint to ``out_dir``."""
    seed = cfg.seeds[0] if seed is None else int(seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    ss = np.random.SeedSequence([seed, 0])
    act_seq, shuffle_seq, env_seq = ss.spawn(3)
    act_rng = np.random.default_rng(act_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    env_seeds = env_seq.generate_state(cfg.n_envs)
    agent = build_agent(cfg, seed)
    opt = make_optimizers(agent, cfg.ppo)
    venv = VecEnv(cfg.scenario, env_seeds)
    metrics = RunMetrics(cfg.variant, seed)
    stats_rows, train_rows, eval_rows, raw_returns = [], [], [], []
    samples = 0
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        density = cfg.curriculum.density(it)
        try:
            res = collect(agent, venv, cfg.steps_per_env, density, act_rng, cfg.ppo.gamma, cfg.ppo.lam)
            stats = update(agent, opt, res.batch, cfg.ppo, shuffle_rng)
        except (PpoDivergence, NonFiniteError, FloatingPointError) as exc:
            metrics.diverged = True
            _dump_divergence(out, it, agent, exc)
            log.error("run diverged at iteration %d: %s", it, exc)
            raise
        samples += len(res.batch)
        raw_returns.append(float(np.mean(res.episode_returns)) if res.episode_returns else None)
        mean_abs_adv = float(np.mean(np.abs(res.raw_advantages)))
        metrics.value_loss.append(stats["loss_value"])
        metrics.mean_abs_adv.append(mean_abs_adv)
        stats_rows.append(dict(stats, iter=it, samples=samples))
        train_rows.append({"iter": it, "samples": samples, "density": density,
                           "epoch_return": raw_returns[-1] if raw_returns[-1] is not None else "NA",
                           "episodes_done": len(res.episode_returns), "mean_abs_adv": mean_abs_adv,
                           "loss_value": stats["loss_value"]})
        last = it == cfg.iterations - 1
        if last or (cfg.eval_every and (it + 1) % cfg.eval_every == 0):
            summary = evaluate(agent, cfg.scenario, repeats=cfg.eval_repeats, episodes=cfg.eval_episodes,
                               seed=cfg.eval_seed)
            metrics.evals[it] = summary
            eval_rows.extend(summary_rows(summary, iter=it))
        if progress:
            log.info("%s seed %d iter %d/%d return %s kl %.4f (%.0fs)", cfg.variant, seed, it + 1,
                     cfg.iterations, raw_returns[-1], stats["approx_kl"], time.perf_counter() - t0)
    metrics.returns = _fill_returns(raw_returns)
    if out is not None:
        _write_csv(out / "update_stats.csv", STATS_COLUMNS, stats_rows)
        _write_csv(out / "train_log.csv", TRAIN_COLUMNS, train_rows)
        _write_csv(out / "eval.csv", EVAL_COLUMNS, eval_rows)
        if metrics.final_eval is not None:
            write_episode_csv(out / "eval_episodes.csv", metrics.final_eval.episodes)
        save_agent(agent, cfg, seed, out / "model.ckpt",
                   rng_state=act_rng.bit_generator.state, extra={"iterations": cfg.iterations})
        with open(out / "summary.json", "w") as fh:
            json.dump(run_summary(metrics), fh, indent=1, sort_keys=True)
    return metrics


def run_summary(m: RunMetrics) -> dict:
    fe = m.final_eval
    out = {"variant": m.variant, "seed": m.seed, "epochs": len(m.returns), "diverged": m.diverged,
           "efficiency": m.efficiency(min(120, max(len(m.returns) - 1, 1))) if len(m.returns) > 2 else None,
           "stability": m.stability(min(200, len(m.returns))) if m.returns else None}
    if fe is not None:
        out["eval"] = {k: dict(zip(("mean", "std"), fe.mean_std(k)))
                       for k in ("mean_return", "collision_times", "distance")}
    return out
