"""Deterministic-policy evaluation in repeated 3-episode runs."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..envsim import CorridorEnv, EpisodeRecord, ScenarioConfig, eval_metrics
from .rollout import stack_obs

ABSENT = "NA"


@dataclass
class EvalSummary:
    runs: list                 # EvalResult per repeat
    episodes: list             # EpisodeRecord per episode, repeat-major

    def _series(self, name):
        vals = [getattr(r, name) for r in self.runs]
        return None if any(v is None for v in vals) else np.array(vals, dtype=np.float64)

    def mean_std(self, name):
        s = self._series(name)
        if s is None:
            return None, None
        return float(s.mean()), float(s.std())

    @property
    def mean_return(self) -> float:
        return self.mean_std("mean_return")[0]

    @property
    def distance(self) -> float:
        return self.mean_std("distance")[0]

    @property
    def collisions(self):
        return self.mean_std("collision_times")[0]


def reports_collisions(variant: str) -> bool:
    # vision-only agents are scored on return and distance only
    return not variant.startswith("vision-only")


def agent_policy(agent):
    def act(obs, states, steps, rng):
        h, new_states = agent.features(obs, states, steps)
        return agent.policy.act(h, rng, deterministic=True).a, new_states
    return act, (lambda n: agent.initial_state(n))


def random_policy(action_dim: int, a_max: float = 1.0):
    """Uniformly uninformed baseline: a = a_max * tanh(z), z ~ N(0, I)."""
    def act(obs, states, steps, rng):
        z = rng.standard_normal((obs.proprio.shape[0], action_dim))
        return a_max * np.tanh(z), states
    return act, (lambda n: [])


def evaluate_policy(policy, scenario: ScenarioConfig, repeats: int = 10, episodes: int = 3,
                    seed: int = 10_000, density: float = 1.0, report_collisions: bool = True) -> EvalSummary:
    """Run ``repeats`` evaluation runs of ``episodes`` episodes each.

    All repeats*episodes episodes are simulated side by side; episode k of
    repeat r uses env seed ``seed + 1000 * r + k`` so results do not depend on
    how many episodes run in parallel.
    """
    act, init_state = policy
    envs, obs = [], []
    for r in range(repeats):
        for k in range(episodes):
            env = CorridorEnv(scenario, seed=seed + 1000 * r + k)
            obs.append(env.reset(density))
            envs.append(env)
    n = len(envs)
    records = [EpisodeRecord(start_x=e.state.x) for e in envs]
    states = init_state(n)
    active = np.ones(n, dtype=bool)
    rng = np.random.default_rng(seed)
    while active.any():
        idx = np.nonzero(active)[0]
        batch = stack_obs([obs[i] for i in idx])
        steps = np.array([envs[i].state.step_count for i in idx])
        sub_states = [s[idx] for s in states]
        actions, new_states = act(batch, sub_states, steps, rng)
        for s, ns in zip(states, new_states):
            s[idx] = ns
        for j, i in enumerate(idx):
            o, rew, done, info = envs[i].step(actions[j])
            records[i].log(envs[i].state.step_count, info, rew)
            obs[i] = o
            if done:
                active[i] = False
    runs = [eval_metrics(records[r * episodes:(r + 1) * episodes], report_collisions) for r in range(repeats)]
    return EvalSummary(runs, records)


def evaluate(agent, scenario: ScenarioConfig, trained_on: str | None = None, **kw) -> EvalSummary:
    """Zero-shot friendly wrapper: a scenario mismatch only warns."""
    if trained_on is not None and trained_on != scenario.scenario:
        warnings.warn(f"evaluating a {trained_on}-trained policy on {scenario.scenario} (zero-shot)")
    kw.setdefault("report_collisions", reports_collisions(agent.variant))
    return evaluate_policy(agent_policy(agent), scenario, **kw)


def summary_rows(summary: EvalSummary, **extra) -> list[dict]:
    rows = []
    for r, res in enumerate(summary.runs):
        rows.append(dict(extra, repeat=r, mean_return=res.mean_return,
                         collision_times=ABSENT if res.collision_times is None else res.collision_times,
                         distance=res.distance))
    return rows
