from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CurriculumSchedule:
    """Obstacle density ramping linearly from ``start_density`` to ``target_density``."""

    start_density: float = 0.3
    target_density: float = 1.0
    ramp_iters: int = 100

    def __post_init__(self):
        for v in (self.start_density, self.target_density):
            if not 0.0 <= v <= 1.0:
                raise ValueError("densities must lie in [0, 1]")
        if self.target_density < self.start_density:
            raise ValueError("target density below start density")
        if self.ramp_iters < 0:
            raise ValueError("ramp_iters must be non-negative")

    def density(self, iteration: int) -> float:
        if self.ramp_iters == 0 or iteration >= self.ramp_iters:
            return self.target_density
        frac = max(iteration, 0) / self.ramp_iters
        return self.start_density + (self.target_density - self.start_density) * frac
