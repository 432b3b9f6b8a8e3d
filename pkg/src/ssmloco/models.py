"""Fusion variants assembled from the shared encoders, backbones and heads.

Every variant exposes ``features(obs, states) -> (h_t, new_states)`` so the
training harness treats them identically; only the fusion path differs.
"""
from __future__ import annotations

import numpy as np

from .attnbase import AttnBackbone
from .config import ArchConfig
from .diffcore import Tensor, concat, mean
from .encoders import DepthPatchifier, Observation, ProprioEncoder, TokenAssembler
from .layers import MLP, Linear, Module
from .policy import PolicyHeads
from .ssm import SsmBackbone

VARIANTS = ("proprio-only", "vision-only-ssm", "vision-only-attn", "concat", "ssm-fusion", "attn-fusion")


class Agent(Module):
    def __init__(self, variant: str, cfg: ArchConfig, rng: np.random.Generator,
                 dtype=np.float32, a_max=1.0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        cfg.validate()
        self.variant, self.cfg, self.dtype = variant, cfg, dtype
        d = cfg.token_width
        use_prop = variant != "vision-only-ssm" and variant != "vision-only-attn"
        use_vis = variant != "proprio-only"
        self.proprio_enc = ProprioEncoder(cfg, rng, dtype) if use_prop else None
        self.depth_enc = DepthPatchifier(cfg, rng, dtype) if use_vis else None
        self.assembler = None
        self.backbone = None
        self.proj_prop = self.proj_vis = self.head = None
        if variant in ("ssm-fusion", "vision-only-ssm"):
            self.assembler = TokenAssembler(cfg, rng, dtype, proprio=use_prop, vision=True)
            self.backbone = SsmBackbone(cfg, rng, dtype, has_proprio=use_prop)
        elif variant in ("attn-fusion", "vision-only-attn"):
            self.assembler = TokenAssembler(cfg, rng, dtype, proprio=use_prop, vision=True)
            self.backbone = AttnBackbone(cfg, rng, dtype, has_proprio=use_prop)
        else:
            # no sequence fusion: project, (pool), concatenate, head
            self.proj_prop = Linear(cfg.proprio_token, d, rng, dtype, gain=1.0, bias=False)
            if use_vis:
                self.proj_vis = Linear(cfg.vis_token, d, rng, dtype, gain=1.0, bias=False)
            width = 2 * d if use_vis else d
            self.head = MLP((width, *cfg.head_hidden), rng, dtype, relu_last=True)
        self.policy = PolicyHeads(cfg, rng, dtype, a_max)

    @property
    def recurrent(self) -> bool:
        return isinstance(self.backbone, SsmBackbone)

    def initial_state(self, batch: int) -> list[np.ndarray]:
        return self.backbone.zero_state(batch) if self.recurrent else []

    def features(self, obs: Observation, states: list, step=None):
        obs = obs.batched()
        if self.backbone is not None:
            z_prop = self.proprio_enc(obs.proprio.astype(self.dtype, copy=False)) if self.proprio_enc else None
            z_vis = self.depth_enc(obs.depth_stack)
            seq = self.assembler(z_prop, z_vis, step)
            h, new_states = self.backbone(seq.tokens, states)
            return h, [s.data if isinstance(s, Tensor) else s for s in new_states]
        parts = [self.proj_prop(self.proprio_enc(obs.proprio.astype(self.dtype, copy=False)))]
        if self.depth_enc is not None:
            parts.append(mean(self.proj_vis(self.depth_enc(obs.depth_stack)), axis=1))
        x = parts[0] if len(parts) == 1 else concat(parts, axis=-1)
        return self.head(x), []
