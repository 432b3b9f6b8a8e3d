"""Selective state-space fusion backbone.

Per token u (width d) a shared affine map yields a step size per channel and
input/output state vectors of size h:

    delta = softplus(W_delta u + b)           (d,)
    decay = exp(delta[:, None] * A)           (d, h), A = -exp(A_log) < 0
    drive = delta[:, None] * B[None, :] * u[:, None]
    x     = decay * x + drive
    y     = x @ C + D * u                     (read after the update)

The final state of one control step seeds the next one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ArchConfig
from .diffcore import Tensor, concat, exp, linear_recurrence, mean, selective_scan, softplus
from .diffcore.scan import scan_parallel, scan_sequential
from .layers import MLP, LayerNorm, Linear, Module, param


@dataclass
class SsmLayerState:
    """Carried hidden state of one layer for a batch of streams."""

    x: np.ndarray          # (B, d, h)
    step: int = 0
    token: int = 0

    @classmethod
    def zeros(cls, batch: int, d: int, h: int, dtype=np.float32) -> "SsmLayerState":
        return cls(np.zeros((batch, d, h), dtype=dtype))


class SelectiveSSMLayer(Module):
    def __init__(self, d: int, h: int, rng, dtype=np.float32, delta_init: float = 0.1,
                 gated_skip: bool = False, backend: str = "sequential"):
        self.d, self.h = d, h
        self.in_proj = Linear(d, d + 2 * h, rng, dtype, gain=1.0)
        w = self.in_proj.weight.data
        w[:, :d] *= 0.1
        b = np.zeros(d + 2 * h)
        b[:d] = np.log(np.expm1(delta_init))
        self.in_proj.bias.data = b.astype(dtype)
        self.A_log = param(np.log(np.tile(np.arange(1, h + 1, dtype=np.float64), (d, 1))), dtype)
        self.D = param(np.ones(d), dtype)
        self.skip_gate = Linear(d, d, rng, dtype, gain=0.1) if gated_skip else None
        self.backend = backend

    def gates(self, u: Tensor):
        """Token-dependent (delta, B, C) for tokens u of shape (B, K, d)."""
        p = self.in_proj(u)
        d, h = self.d, self.h
        return softplus(p[..., :d]), p[..., d:d + h], p[..., d + h:]

    def discretize(self, u: Tensor):
        delta, Bm, Cm = self.gates(u)
        A = -exp(self.A_log)
        decay = exp(delta.reshape(*delta.shape, 1) * A)
        drive = (delta * u).reshape(*u.shape, 1) * Bm.reshape(*Bm.shape[:-1], 1, self.h)
        return decay, drive, Cm

    def __call__(self, u: Tensor, x0, backend: str | None = None, fused: bool = True):
        """Scan tokens ``u`` (B, K, d) from state ``x0`` (B, d, h).

        Returns ``(y, x_last)`` with ``y`` of shape (B, K, d). ``fused=False``
        builds the same computation from elementary taped ops.
        """
        if x0.shape != (u.shape[0], self.d, self.h):
            raise ValueError(f"state shape {x0.shape} does not match ({u.shape[0]}, {self.d}, {self.h})")
        backend = backend or self.backend
        if fused:
            delta, Bm, Cm = self.gates(u)
            y, x_last = selective_scan(delta, u, Bm, Cm, -exp(self.A_log), x0, backend=backend)
        else:
            decay, drive, Cm = self.discretize(u)
            xs = linear_recurrence(decay, drive, x0, backend=backend)
            y = (xs * Cm.reshape(*Cm.shape[:-1], 1, self.h)).sum(axis=-1)
            x_last = xs[:, -1]
        skip = self.D if self.skip_gate is None else self.D + self.skip_gate(u)
        return y + skip * u, x_last


def _scan_arrays(layer: SelectiveSSMLayer, tokens: np.ndarray, x0: np.ndarray, kernel):
    u = Tensor(tokens)
    decay, drive, Cm = layer.discretize(u)
    if not np.all(np.isfinite(decay.data)):
        raise FloatingPointError("non-finite step size in selective scan")
    xs = kernel(decay.data, drive.data, x0, axis=1)
    y = np.einsum("bkdh,bkh->bkd", xs, Cm.data) + layer.D.data * tokens
    return y, xs[:, -1]


def selective_scan_sequential(tokens: np.ndarray, state_in: SsmLayerState, layer: SelectiveSSMLayer):
    """Token-by-token reference scan (no tape). Returns (outputs, state_out)."""
    tokens = np.asarray(tokens)
    squeeze = tokens.ndim == 2
    if squeeze:
        tokens = tokens[None]
    x0 = state_in.x if state_in.x.ndim == 3 else state_in.x[None]
    y, x = _scan_arrays(layer, tokens, x0, scan_sequential)
    out = SsmLayerState(x[0] if squeeze else x, state_in.step + 1, 0)
    return (y[0] if squeeze else y), out


def selective_scan_parallel(tokens: np.ndarray, state_in: SsmLayerState, layer: SelectiveSSMLayer, block: int = 32):
    """Associative-operator scan; same contract as the sequential one."""
    tokens = np.asarray(tokens)
    squeeze = tokens.ndim == 2
    if squeeze:
        tokens = tokens[None]
    x0 = state_in.x if state_in.x.ndim == 3 else state_in.x[None]
    y, x = _scan_arrays(layer, tokens, x0, lambda a, b, s, axis: scan_parallel(a, b, s, axis=axis, block=block))
    out = SsmLayerState(x[0] if squeeze else x, state_in.step + 1, 0)
    return (y[0] if squeeze else y), out


def pool_tokens(H: Tensor, has_proprio: bool) -> Tensor:
    """[y_prop ; mean of visual tokens], or just the visual mean."""
    if has_proprio:
        return concat([H[:, 0], mean(H[:, 1:], axis=1)], axis=-1)
    return mean(H, axis=1)


class SsmBackbone(Module):
    """L stacked selective scans with residual + LayerNorm, then the pooling head."""

    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32, has_proprio: bool = True):
        d, h = cfg.token_width, cfg.state_size
        self.layers = [SelectiveSSMLayer(d, h, rng, dtype, cfg.delta_init, cfg.gated_skip, cfg.scan_backend)
                       for _ in range(cfg.ssm_layers)]
        self.norms = [LayerNorm(d, dtype, cfg.ln_eps) for _ in range(cfg.ssm_layers)]
        pooled = 2 * d if has_proprio else d
        self.head = MLP((pooled, *cfg.head_hidden), rng, dtype, relu_last=True)
        self.has_proprio = has_proprio
        self.d, self.h = d, h

    def zero_state(self, batch: int) -> list[np.ndarray]:
        dtype = self.layers[0].A_log.dtype
        return [np.zeros((batch, self.d, self.h), dtype=dtype) for _ in self.layers]

    def __call__(self, tokens: Tensor, states: list):
        """Returns (h_t, new_states); ``states`` holds one (B, d, h) array per layer."""
        if len(states) != len(self.layers):
            raise ValueError(f"{len(states)} carried states for {len(self.layers)} layers")
        H = tokens
        new_states = []
        for layer, norm, x0 in zip(self.layers, self.norms, states):
            Y, x_last = layer(H, x0)
            H = norm(Y + H)
            new_states.append(x_last)
        return self.head(pool_tokens(H, self.has_proprio)), new_states
