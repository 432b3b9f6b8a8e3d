"""Per-episode plant randomization and its kinematic analogues."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

# (low, high) sampled uniformly at reset
RANGES = {
    "kp": (40.0, 90.0),
    "kd": (0.4, 0.8),
    "inertia_scale": (0.5, 1.5),
    "friction": (0.5, 1.25),
    "mass_scale": (0.8, 1.2),
    "motor_friction": (0.0, 0.05),
    "motor_strength": (0.8, 1.2),
    "sensor_latency": (0.0, 0.04),
}

KP_NOMINAL = 65.0
KD_NOMINAL = 0.6


@dataclass(frozen=True)
class RandomizationDraw:
    kp: float
    kd: float
    inertia_scale: float
    friction: float
    mass_scale: float
    motor_friction: float
    motor_strength: float
    sensor_latency: float

    @property
    def action_gain(self) -> float:
        """Proportional gain normalized to 1 at the middle of its range."""
        return self.kp / KP_NOMINAL

    @property
    def damping(self) -> float:
        return self.kd / KD_NOMINAL

    def latency_steps(self, dt: float) -> int:
        return int(math.ceil(self.sensor_latency / dt - 1e-9))

    def in_range(self) -> bool:
        return all(lo <= getattr(self, k) <= hi for k, (lo, hi) in RANGES.items())

    def to_dict(self) -> dict:
        return asdict(self)


NOMINAL = RandomizationDraw(kp=KP_NOMINAL, kd=KD_NOMINAL, inertia_scale=1.0, friction=1.0,
                            mass_scale=1.0, motor_friction=0.0, motor_strength=1.0, sensor_latency=0.0)


def sample_draw(rng: np.random.Generator) -> RandomizationDraw:
    return RandomizationDraw(**{k: float(rng.uniform(lo, hi)) for k, (lo, hi) in RANGES.items()})
