"""Observation encoding: proprio MLP, depth patchifier, token assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ArchConfig
from .diffcore import Tensor, concat, relu
from .layers import MLP, LayerNorm, Linear, Module, param


@dataclass
class Observation:
    """One observation or a batch of them (leading axes shared)."""

    proprio: np.ndarray        # (..., D_p)
    depth_stack: np.ndarray    # (..., F, H, W), metres in [0, max_range]

    def batched(self) -> "Observation":
        if self.proprio.ndim == 1:
            return Observation(self.proprio[None], self.depth_stack[None])
        return self


@dataclass
class TokenSequence:
    tokens: Tensor     # (B, n_prop + N, d)
    n_visual: int
    has_proprio: bool = True


def patch_count(height: int, width: int, patch: int) -> int:
    if height % patch or width % patch:
        raise ValueError(f"{height}x{width} image is not divisible into {patch}x{patch} patches")
    return (height // patch) * (width // patch)


def extract_patches(depth: np.ndarray, patch: int) -> np.ndarray:
    """(B, F, H, W) -> (B, N, F*P*P), patches in row-major raster order."""
    B, F, H, W = depth.shape
    patch_count(H, W, patch)
    gh, gw = H // patch, W // patch
    x = depth.reshape(B, F, gh, patch, gw, patch)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(x.reshape(B, gh * gw, F * patch * patch))


class ProprioEncoder(Module):
    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32):
        self.mlp = MLP((cfg.proprio_dim, *cfg.proprio_hidden, cfg.proprio_token), rng, dtype)
        self.dim = cfg.proprio_dim

    def __call__(self, s_prop) -> Tensor:
        if s_prop.shape[-1] != self.dim:
            raise ValueError(f"proprio vector has {s_prop.shape[-1]} entries, expected {self.dim}")
        return self.mlp(s_prop)


class DepthPatchifier(Module):
    """Stride-P convolution over frames-as-channels, then a linear map to d_v."""

    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32):
        self.conv = Linear(cfg.frames * cfg.patch ** 2, cfg.vis_channels, rng, dtype)
        self.out = Linear(cfg.vis_channels, cfg.vis_token, rng, dtype)
        self.patch = cfg.patch
        self.max_range = cfg.max_range
        self.frames = cfg.frames

    def __call__(self, depth_stack: np.ndarray) -> Tensor:
        if depth_stack.ndim != 4 or depth_stack.shape[1] != self.frames:
            raise ValueError(f"expected (B, {self.frames}, H, W) depth, got {depth_stack.shape}")
        patches = extract_patches(np.asarray(depth_stack) / self.max_range, self.patch)
        patches = patches.astype(self.conv.weight.dtype, copy=False)
        return self.out(relu(self.conv(patches)))


def perturb_depth(depth: np.ndarray, rng: np.random.Generator, max_range: float,
                  k_low: int = 3, k_high: int = 30) -> np.ndarray:
    """Salt noise: K ~ U{k_low..k_high} distinct pixels saturate to max_range."""
    out = np.array(depth, copy=True)
    flat = out.reshape(-1)
    k = int(rng.integers(k_low, k_high + 1))
    idx = rng.choice(flat.size, size=min(k, flat.size), replace=False)
    flat[idx] = max_range
    return out


class TokenAssembler(Module):
    """Projections W_p, W_v, spatial/modality codes and the per-token LN."""

    def __init__(self, cfg: ArchConfig, rng, dtype=np.float32, proprio: bool = True, vision: bool = True):
        d, std = cfg.token_width, cfg.embed_std
        n_tokens = int(proprio) + (cfg.n_visual if vision else 0)
        self.proj_prop = Linear(cfg.proprio_token, d, rng, dtype, gain=1.0, bias=False) if proprio else None
        self.proj_vis = Linear(cfg.vis_token, d, rng, dtype, gain=1.0, bias=False) if vision else None
        self.pos = param(rng.normal(0.0, std, (n_tokens, d)), dtype)
        # two learned rows: [proprio, visual]; expanded at use so visual rows stay tied
        self.modality = param(rng.normal(0.0, std, (2, d)), dtype)
        self.time = param(rng.normal(0.0, std, (cfg.time_slots, d)), dtype) if cfg.temporal_pos else None
        self.norm = LayerNorm(d, dtype, cfg.ln_eps)
        self.has_proprio, self.has_vision = proprio, vision
        self.n_visual = cfg.n_visual if vision else 0

    def modality_table(self) -> Tensor:
        rows = ([0] if self.has_proprio else []) + [1] * self.n_visual
        return self.modality[np.asarray(rows)]

    def __call__(self, z_prop=None, z_vis=None, step=None) -> TokenSequence:
        parts = []
        if self.has_proprio:
            parts.append(self.proj_prop(z_prop).reshape(z_prop.shape[0], 1, -1))
        if self.has_vision:
            if z_vis.shape[-2] != self.n_visual:
                raise ValueError(f"{z_vis.shape[-2]} visual tokens, tables sized for {self.n_visual}")
            parts.append(self.proj_vis(z_vis))
        u = parts[0] if len(parts) == 1 else concat(parts, axis=1)
        u = u + self.pos + self.modality_table()
        if self.time is not None and step is not None:
            slot = np.minimum(np.asarray(step), self.time.shape[0] - 1)
            u = u + self.time[slot].reshape(len(slot), 1, -1)
        return TokenSequence(self.norm(u), self.n_visual, self.has_proprio)


def encode_tokens(obs: Observation, proprio_enc, depth_enc, assembler: TokenAssembler, step=None) -> TokenSequence:
    obs = obs.batched()
    z_prop = proprio_enc(obs.proprio.astype(assembler.pos.dtype, copy=False)) if proprio_enc else None
    z_vis = depth_enc(obs.depth_stack) if depth_enc else None
    return assembler(z_prop, z_vis, step)
