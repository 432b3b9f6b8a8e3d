"""Cross-modal selective state-space fusion for obstacle-aware locomotion, trained with PPO."""
from .config import DESK_ARCH, PAPER_ARCH, ArchConfig
from .models import VARIANTS, Agent

__version__ = "0.1.0"
