"""Architecture settings shared by the encoders, backbones and heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class ArchConfig:
    # observation layout
    proprio_dim: int = 93
    frames: int = 4
    height: int = 64
    width: int = 64
    patch: int = 8
    max_range: float = 5.0
    # widths
    token_width: int = 128
    proprio_hidden: tuple = (256, 256)
    proprio_token: int = 128
    vis_channels: int = 128
    vis_token: int = 128
    # fusion backbone
    ssm_layers: int = 2
    state_size: int = 8
    scan_backend: str = "sequential"
    gated_skip: bool = False
    temporal_pos: bool = False
    time_slots: int = 1000
    attn_heads: int = 2
    attn_ffn: int = 256
    attn_layers: int = 2
    # heads
    head_hidden: tuple = (256, 256)
    actor_hidden: tuple = (256,)
    critic_hidden: tuple = (256,)
    action_dim: int = 12
    ln_eps: float = 1e-5
    embed_std: float = 0.02
    delta_init: float = 0.1

    @property
    def n_visual(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)

    @property
    def feature_dim(self) -> int:
        return self.head_hidden[-1]

    def validate(self) -> "ArchConfig":
        if self.height % self.patch or self.width % self.patch:
            raise ValueError(f"depth {self.height}x{self.width} not divisible by patch {self.patch}")
        if self.token_width % self.attn_heads:
            raise ValueError("attention head count must divide the token width")
        if self.scan_backend not in ("sequential", "parallel"):
            raise ValueError(f"unknown scan backend {self.scan_backend!r}")
        if self.ssm_layers < 1 or self.state_size < 1:
            raise ValueError("need at least one SSM layer and state size >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in names}
        return cls(**kw)

    def with_(self, **kw) -> "ArchConfig":
        return replace(self, **kw)


PAPER_ARCH = ArchConfig()

DESK_ARCH = ArchConfig(
    proprio_dim=15,
    height=16,
    width=16,
    patch=4,
    token_width=32,
    proprio_hidden=(64, 64),
    proprio_token=32,
    vis_channels=32,
    vis_token=32,
    state_size=8,
    attn_ffn=64,
    head_hidden=(64, 64),
    actor_hidden=(64,),
    critic_hidden=(64,),
    action_dim=3,
)
