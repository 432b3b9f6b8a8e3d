"""Clipped-surrogate PPO with GAE, value and entropy terms."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .diffcore import NonFiniteError, Tape, Tensor, clip, exp, minimum, clip_by_global_norm
from .diffcore.optim import Adam
from .encoders import Observation

STATS_COLUMNS = ("iter", "samples", "loss_clip", "loss_value", "entropy", "approx_kl", "clip_frac",
                 "grad_norm", "lr")


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    ent_coef: float = 0.005
    vf_coef: float = 0.5
    lr_policy: float = 2e-4
    lr_value: float = 2e-4
    horizon: int = 999
    samples_per_iter: int = 16384
    minibatch: int = 1024
    epochs: int = 3
    max_grad_norm: float = 0.5
    adv_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma must lie in (0, 1] and lambda in [0, 1]")
        if self.ent_coef < 0 or self.vf_coef <= 0 or self.max_grad_norm <= 0:
            raise ValueError("loss coefficients and clip norm must be positive")
        if self.lr_policy < 0 or self.lr_value < 0:
            raise ValueError("learning rates must be non-negative")
        if min(self.horizon, self.samples_per_iter, self.minibatch, self.epochs) <= 0:
            raise ValueError("horizon, batch sizes and epochs must be positive")

    def with_(self, **kw) -> "PpoConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


class PpoDivergence(FloatingPointError):
    """Raised when a loss or gradient becomes non-finite; the run is flagged."""


def compute_gae(rewards, values, dones, bootstrap_value=0.0, gamma=0.99, lam=0.95):
    """Advantages and returns along axis 0, truncated at ``done``.

    ``values[t]`` is V(h_t). Trailing axes (parallel envs) broadcast; the
    bootstrap value is only used after a final step that is not done.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=bool)
    if not (r.shape == v.shape == d.shape):
        raise ValueError(f"length mismatch: rewards {r.shape}, values {v.shape}, dones {d.shape}")
    T = r.shape[0]
    adv = np.zeros_like(r)
    next_v = np.broadcast_to(np.asarray(bootstrap_value, dtype=np.float64), r.shape[1:])
    running = np.zeros(r.shape[1:])
    for t in range(T - 1, -1, -1):
        live = 1.0 - d[t]
        nv = next_v if t == T - 1 else v[t + 1]
        delta = r[t] + gamma * nv * live - v[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + v


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size == 0:
        raise ValueError("empty advantage batch")
    return (adv - adv.mean()) / (adv.std() + eps)


def ppo_losses(logp_new: Tensor, logp_old, advantages, value_new: Tensor, returns, entropy: Tensor,
               cfg: PpoConfig, normalize: bool = True) -> dict:
    """Clipped surrogate, value loss, mean entropy and the minimized total.

    ``advantages`` are normalized here unless ``normalize`` is False.
    """
    if np.size(logp_old) == 0:
        raise ValueError("empty batch")
    dtype = logp_new.dtype
    adv = normalize_advantages(advantages, cfg.adv_eps) if normalize else np.asarray(advantages, np.float64)
    A = Tensor(adv.astype(dtype))
    ratio = exp(logp_new - Tensor(np.asarray(logp_old, dtype=dtype)))
    surrogate = minimum(ratio * A, clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * A)
    l_clip = surrogate.mean()
    err = value_new - Tensor(np.asarray(returns, dtype=dtype))
    l_value = (err * err).mean()
    h_mean = entropy.mean()
    total = -l_clip + cfg.vf_coef * l_value - cfg.ent_coef * h_mean
    return {"loss_clip": l_clip, "loss_value": l_value, "entropy": h_mean, "total": total,
            "ratio": ratio}


@dataclass
class RolloutBatch:
    """Flattened on-policy samples of one iteration.

    Observations and the incoming carried backbone state are stored per step
    so features can be recomputed (and differentiated) during the epochs.
    """

    proprio: np.ndarray
    depth: np.ndarray
    states: list            # per layer (S, d, h)
    a_tilde: np.ndarray
    logp_old: np.ndarray
    value_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    steps: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.a_tilde)

    def take(self, idx) -> "RolloutBatch":
        return RolloutBatch(self.proprio[idx], self.depth[idx], [s[idx] for s in self.states],
                            self.a_tilde[idx], self.logp_old[idx], self.value_old[idx],
                            self.advantages[idx], self.returns[idx],
                            None if self.steps is None else self.steps[idx])


@dataclass
class Optimizers:
    """Policy optimizer (actor, encoders, backbone) and value optimizer (critic)."""

    policy: Adam | None
    value: Adam | None
    policy_params: list = field(default_factory=list)
    value_params: list = field(default_factory=list)


def split_parameters(agent) -> tuple[list, list]:
    named = agent.named_parameters()
    value = [p for n, p in named.items() if n.startswith("policy.critic.")]
    ids = {id(p) for p in value}
    policy = [p for p in named.values() if id(p) not in ids]
    return policy, value


def make_optimizers(agent, cfg: PpoConfig) -> Optimizers:
    pol, val = split_parameters(agent)
    # a zero learning rate means "no update"; Adam itself rejects lr <= 0
    return Optimizers(Adam(pol, lr=cfg.lr_policy) if cfg.lr_policy > 0 else None,
                      Adam(val, lr=cfg.lr_value) if cfg.lr_value > 0 else None, pol, val)


def minibatch_loss(agent, mb: RolloutBatch, cfg: PpoConfig) -> dict:
    obs = Observation(mb.proprio, mb.depth)
    h, _ = agent.features(obs, list(mb.states), mb.steps)
    logp, ent, value = agent.policy.evaluate(h, mb.a_tilde)
    return ppo_losses(logp, mb.logp_old, mb.advantages, value, mb.returns, ent, cfg)


def update(agent, opt: Optimizers, batch: RolloutBatch, cfg: PpoConfig, rng: np.random.Generator) -> dict:
    """``cfg.epochs`` passes of shuffled minibatch Adam steps; returns mean stats."""
    n = len(batch)
    if n == 0:
        raise ValueError("empty rollout batch")
    params = opt.policy_params + opt.value_params
    n_pol = len(opt.policy_params)
    acc = {k: [] for k in ("loss_clip", "loss_value", "entropy", "approx_kl", "clip_frac", "grad_norm")}
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = np.sort(perm[start:start + cfg.minibatch])
            mb = batch.take(idx)
            with Tape() as tape:
                try:
                    out = minibatch_loss(agent, mb, cfg)
                except NonFiniteError as exc:
                    raise PpoDivergence(f"non-finite forward pass during update: {exc}") from exc
                total = out["total"]
                if not np.isfinite(total.data).all():
                    raise PpoDivergence("non-finite PPO loss")
                grads = tape.backward(total, params)
            glist = [grads[p] for p in params]
            if not all(np.all(np.isfinite(g)) for g in glist):
                raise PpoDivergence("non-finite gradient")
            glist, norm = clip_by_global_norm(glist, cfg.max_grad_norm)
            if opt.policy is not None:
                opt.policy.step(glist[:n_pol])
            if opt.value is not None:
                opt.value.step(glist[n_pol:])
            ratio = out["ratio"].data.astype(np.float64)
            log_ratio = np.log(ratio)
            acc["loss_clip"].append(float(out["loss_clip"].data))
            acc["loss_value"].append(float(out["loss_value"].data))
            acc["entropy"].append(float(out["entropy"].data))
            acc["approx_kl"].append(float(np.mean((ratio - 1.0) - log_ratio)))
            acc["clip_frac"].append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)))
            acc["grad_norm"].append(norm)
    stats = {k: float(np.mean(v)) for k, v in acc.items()}
    stats["lr"] = cfg.lr_policy
    return stats
