from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


def adam_step(params, grads, moments, lr, beta1=0.9, beta2=0.999, eps=1e-8, step=1):
    """One bias-corrected Adam update.

    ``params`` and ``grads`` are sequences of arrays, ``moments`` a sequence
    of ``(m, v)`` pairs. Returns ``(new_params, new_moments)``; nothing is
    modified in place.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not (len(params) == len(grads) == len(moments)):
        raise ValueError("params, grads and moments must align")
    new_params, new_moments = [], []
    c1 = 1 - beta1 ** step
    c2 = 1 - beta2 ** step
    for p, g, (m, v) in zip(params, grads, moments):
        if p.shape != g.shape or p.shape != m.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_params.append((p - update).astype(p.dtype, copy=False))
        new_moments.append((m, v))
    return new_params, new_moments


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_by_global_norm(grads, max_norm: float):
    """Scale gradients so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return list(grads), norm
    scale = max_norm / norm
    return [(g * scale).astype(g.dtype, copy=False) for g in grads], norm


@dataclass
class Adam:
    """Adam over a fixed list of parameter tensors (updated in place)."""

    params: list
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not self.moments:
            self.moments = [(np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params]

    def step(self, grads) -> None:
        """Apply one update; ``grads`` is a list aligned with ``params``."""
        self.step_count += 1
        new, self.moments = adam_step(
            [p.data for p in self.params], grads, self.moments,
            self.lr, self.beta1, self.beta2, self.eps, self.step_count)
        for p, value in zip(self.params, new):
            p.data = value

    def state(self) -> dict:
        return {"step": self.step_count,
                "m": [m for m, _ in self.moments],
                "v": [v for _, v in self.moments]}


def zero_like_params(params: list[Tensor]) -> list[np.ndarray]:
    return [np.zeros_like(p.data) for p in params]
