"""On-policy collection over a set of independent corridor environments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..encoders import Observation
from ..envsim import CorridorEnv, EpisodeRecord, ScenarioConfig
from ..ppo import RolloutBatch, compute_gae


def stack_obs(obs: list) -> Observation:
    return Observation(np.stack([o.proprio for o in obs]), np.stack([o.depth_stack for o in obs]))


class VecEnv:
    """N environments stepped in lockstep; each owns its RNG stream."""

    def __init__(self, scenario: ScenarioConfig, seeds):
        self.envs = [CorridorEnv(scenario, seed=int(s)) for s in seeds]
        self.obs: list = [None] * len(self.envs)
        self.records = [EpisodeRecord() for _ in self.envs]
        self.returns = np.zeros(len(self.envs))
        self.states = None        # carried backbone state per env

    def __len__(self) -> int:
        return len(self.envs)

    def reset_all(self, density: float) -> Observation:
        for i, env in enumerate(self.envs):
            self.obs[i] = env.reset(density)
            self.records[i] = EpisodeRecord(start_x=env.state.x)
        self.returns[:] = 0.0
        return stack_obs(self.obs)

    def steps(self) -> np.ndarray:
        return np.array([env.state.step_count for env in self.envs])


@dataclass
class CollectResult:
    batch: RolloutBatch
    episode_returns: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    raw_advantages: np.ndarray | None = None


def collect(agent, venv: VecEnv, n_steps: int, density: float, rng: np.random.Generator,
            gamma: float, lam: float) -> CollectResult:
    """Roll the current policy for ``n_steps`` per env and compute GAE.

    Episodes that end are reset immediately (with the current curriculum
    density) and their backbone state is zeroed. The carried state entering
    every step is stored so the update can replay it.
    """
    n = len(venv)
    if venv.obs[0] is None:
        venv.reset_all(density)
        venv.states = agent.initial_state(n)
    states = venv.states
    P, D, S, AT, LP, V, R, DN, ST = [], [], [], [], [], [], [], [], []
    finished, finished_eps = [], []
    for _ in range(n_steps):
        obs = stack_obs(venv.obs)
        steps = venv.steps()
        h, new_states = agent.features(obs, states, steps)
        sample = agent.policy.act(h, rng)
        P.append(obs.proprio)
        D.append(obs.depth_stack)
        S.append([s.copy() for s in states])
        AT.append(sample.a_tilde)
        LP.append(sample.logp)
        V.append(sample.value)
        ST.append(steps)
        rew = np.zeros(n)
        done = np.zeros(n, dtype=bool)
        for i, env in enumerate(venv.envs):
            o, r, d, info = env.step(sample.a[i])
            venv.records[i].log(env.state.step_count, info, r)
            venv.returns[i] += r
            rew[i], done[i] = r, d
            if d:
                finished.append(float(venv.returns[i]))
                finished_eps.append(venv.records[i])
                o = env.reset(density)
                venv.records[i] = EpisodeRecord(start_x=env.state.x)
                venv.returns[i] = 0.0
                for s in new_states:
                    s[i] = 0.0
            venv.obs[i] = o
        R.append(rew)
        DN.append(done)
        states = new_states
    venv.states = states
    h, _ = agent.features(stack_obs(venv.obs), states, venv.steps())
    boot = agent.policy.value(h).data.astype(np.float64)
    values = np.array(V, dtype=np.float64)
    adv, ret = compute_gae(np.array(R), values, np.array(DN), boot, gamma, lam)

    def flat(xs):
        a = np.asarray(xs)
        return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])

    n_layers = len(S[0])
    batch = RolloutBatch(
        proprio=flat(P), depth=flat(D),
        states=[flat([s[k] for s in S]) for k in range(n_layers)],
        a_tilde=flat(AT), logp_old=flat(LP), value_old=flat(values),
        advantages=flat(adv), returns=flat(ret), steps=flat(ST))
    return CollectResult(batch, finished, finished_eps, adv)
