"""Gaussian actor with tanh squashing, and the value critic."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ArchConfig
from .diffcore import Tensor, clip, exp
from .layers import MLP, Module

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
_HALF_LOG_2PIE = 0.5 * math.log(2 * math.pi * math.e)


@dataclass
class ActionSample:
    a_tilde: np.ndarray   # pre-squash sample
    a: np.ndarray         # a_max * tanh(a_tilde)
    logp: np.ndarray      # log N(a_tilde; mu, sigma^2)
    value: np.ndarray


def gaussian_logp(mu, log_std, x) -> Tensor:
    """Diagonal Gaussian log-density summed over the last axis."""
    z = (x - mu) * exp(-log_std)
    return (-0.5 * z * z - log_std - _HALF_LOG_2PI).sum(axis=-1)


def gaussian_entropy(log_std) -> Tensor:
    return (log_std + _HALF_LOG_2PIE).sum(axis=-1)


def gaussian_logp_np(mu: np.ndarray, log_std: np.ndarray, x: np.ndarray) -> np.ndarray:
    z = (x - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


class PolicyHeads(Module):
    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32, a_max=1.0):
        A = cfg.action_dim
        self.actor = MLP((cfg.feature_dim, *cfg.actor_hidden, 2 * A), rng, dtype, final_gain=0.01)
        self.critic = MLP((cfg.feature_dim, *cfg.critic_hidden, 1), rng, dtype, final_gain=1.0)
        self.action_dim = A
        a_max = np.broadcast_to(np.asarray(a_max, dtype=np.float64), (A,)).copy()
        if np.any(a_max <= 0):
            raise ValueError("action bounds must be positive")
        self.a_max = a_max

    def distribution(self, h) -> tuple[Tensor, Tensor]:
        out = self.actor(h)
        A = self.action_dim
        return out[..., :A], clip(out[..., A:], LOG_STD_MIN, LOG_STD_MAX)

    def value(self, h) -> Tensor:
        v = self.critic(h)
        return v.reshape(v.shape[:-1])

    def squash(self, a_tilde: np.ndarray) -> np.ndarray:
        return self.a_max * np.tanh(a_tilde)

    def act(self, h, rng: np.random.Generator, deterministic: bool = False) -> ActionSample:
        mu, log_std = self.distribution(h)
        mu, log_std = mu.data, log_std.data
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_std))):
            raise FloatingPointError("non-finite policy output")
        if deterministic:
            a_tilde = mu.astype(np.float64)
        else:
            a_tilde = mu + np.exp(log_std) * rng.standard_normal(mu.shape)
        logp = gaussian_logp_np(mu, log_std, a_tilde)
        return ActionSample(a_tilde, self.squash(a_tilde), logp, self.value(h).data)

    def evaluate(self, h, a_tilde) -> tuple[Tensor, Tensor, Tensor]:
        """(logp, entropy, value) of stored pre-squash actions under current params."""
        mu, log_std = self.distribution(h)
        if np.shape(a_tilde)[-1] != self.action_dim:
            raise ValueError(f"action has {np.shape(a_tilde)[-1]} dims, policy has {self.action_dim}")
        a_t = Tensor(np.asarray(a_tilde, dtype=mu.dtype))
        return gaussian_logp(mu, log_std, a_t), gaussian_entropy(log_std), self.value(h)
