"""Plain multi-head self-attention fusion baseline (no recurrent carry)."""
from __future__ import annotations

import numpy as np

from .config import ArchConfig
from .diffcore import Tensor, softmax, transpose
from .layers import MLP, LayerNorm, Linear, Module
from .ssm import pool_tokens


def attention_flops(n_tokens: int, d: int) -> int:
    """Multiply-adds in the score (QK^T) and mixing (AV) products."""
    return 2 * n_tokens * n_tokens * d


class AttnLayer(Module):
    def __init__(self, d: int, heads: int, ffn: int, rng, dtype=np.float32, eps: float = 1e-5):
        if d % heads:
            raise ValueError("head count must divide the width")
        self.q = Linear(d, d, rng, dtype, gain=1.0, bias=False)
        self.k = Linear(d, d, rng, dtype, gain=1.0, bias=False)
        self.v = Linear(d, d, rng, dtype, gain=1.0, bias=False)
        self.o = Linear(d, d, rng, dtype, gain=1.0)
        self.norm1 = LayerNorm(d, dtype, eps)
        self.ffn = MLP((d, ffn, d), rng, dtype, final_gain=1.0)
        self.norm2 = LayerNorm(d, dtype, eps)
        self.d, self.heads = d, heads
        self.flops = 0
        self.last_weights: np.ndarray | None = None

    def _split(self, x: Tensor) -> Tensor:
        B, T, _ = x.shape
        return transpose(x.reshape(B, T, self.heads, self.d // self.heads), (0, 2, 1, 3))

    def attend(self, tokens: Tensor) -> Tensor:
        B, T, d = tokens.shape
        dh = d // self.heads
        q, k, v = self._split(self.q(tokens)), self._split(self.k(tokens)), self._split(self.v(tokens))
        scores = (q @ transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        weights = softmax(scores, axis=-1)
        if not np.all(np.isfinite(weights.data)):
            raise FloatingPointError("non-finite attention weights")
        self.last_weights = weights.data
        self.flops += attention_flops(T, d) * B
        mixed = transpose(weights @ v, (0, 2, 1, 3)).reshape(B, T, d)
        return self.o(mixed)

    def __call__(self, tokens: Tensor) -> Tensor:
        h1 = self.norm1(tokens + self.attend(tokens))
        return self.norm2(h1 + self.ffn(h1))


class AttnBackbone(Module):
    """Stacked attention layers with the same pooling head as the SSM stack."""

    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32, has_proprio: bool = True):
        d = cfg.token_width
        self.layers = [AttnLayer(d, cfg.attn_heads, cfg.attn_ffn, rng, dtype, cfg.ln_eps)
                       for _ in range(cfg.attn_layers)]
        pooled = 2 * d if has_proprio else d
        self.head = MLP((pooled, *cfg.head_hidden), rng, dtype, relu_last=True)
        self.has_proprio = has_proprio

    def zero_state(self, batch: int) -> list:
        return []

    def __call__(self, tokens: Tensor, states=None):
        H = tokens
        for layer in self.layers:
            H = layer(H)
        return self.head(pool_tokens(H, self.has_proprio)), []
