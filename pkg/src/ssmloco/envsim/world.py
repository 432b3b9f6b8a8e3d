"""Kinematic corridor world standing in for the legged-robot simulator.

The agent is a disk moving along a corridor (+x is the task direction)
populated with thin box obstacles. Actions are

    a[0]  forward thrust        a[1]  turn rate        a[2]  brake (positive part)

and any further dimensions only enter the actuation-energy penalty, so a
12-D action interface keeps the reward meaningful.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..encoders import Observation, perturb_depth
from .randomization import NOMINAL, RandomizationDraw, sample_draw
from .render import render_depth
from .scenario import ScenarioConfig

ALPHA_FWD = 1.0
ALPHA_ENERGY = 0.005
ALPHA_ALIVE = 0.1


@dataclass(frozen=True)
class PlantParams:
    accel_max: float = 4.0         # m/s^2 at full thrust, nominal gain
    drag: float = 2.0              # 1/s, so nominal top speed is 2 m/s
    brake_decel: float = 6.0       # m/s^2
    turn_max: float = 2.5          # rad/s
    turn_lag: float = 0.1          # s, scaled by inertia
    lateral_decay: float = 8.0     # 1/s per unit friction
    motor_friction_drag: float = 8.0
    terrain_slowdown: float = 5.0
    terrain_push: float = 20.0     # lateral m/s^2 per unit slope
    nominal_speed: float = 2.0
    fall_factor: float = 5.0
    impact_speed_max: float = 0.8  # m/s, faster head-on contact knocks the body over


def compute_reward(velocity, tau, alive: bool) -> tuple[float, dict]:
    """Weighted sum of the forward, energy and alive terms; returns (R, terms)."""
    r_fwd = float(velocity[0])
    r_energy = -float(np.dot(tau, tau))
    r_alive = 1.0 if alive else 0.0
    total = ALPHA_FWD * r_fwd + ALPHA_ENERGY * r_energy + ALPHA_ALIVE * r_alive
    return total, {"r_fwd": r_fwd, "r_energy": r_energy, "r_alive": r_alive}


class Terrain:
    """Piecewise-constant height field (discontinuous steps)."""

    def __init__(self, heights: np.ndarray, origin: tuple, cell: float):
        self.heights = heights
        self.origin = origin
        self.cell = cell

    def _index(self, px, py):
        i = np.floor((np.asarray(px) - self.origin[0]) / self.cell).astype(int)
        j = np.floor((np.asarray(py) - self.origin[1]) / self.cell).astype(int)
        return i, j

    def height_at(self, px, py) -> np.ndarray:
        i, j = self._index(px, py)
        nx, ny = self.heights.shape
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        return np.where(ok, self.heights[np.clip(i, 0, nx - 1), np.clip(j, 0, ny - 1)], 0.0)

    def gradient_at(self, x: float, y: float) -> np.ndarray:
        c = self.cell
        gx = (self.height_at(x + c, y) - self.height_at(x - c, y)) / (2 * c)
        gy = (self.height_at(x, y + c) - self.height_at(x, y - c)) / (2 * c)
        return np.array([float(gx), float(gy)])


@dataclass
class WorldState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0            # along heading
    lateral: float = 0.0          # perpendicular to heading (left positive)
    omega: float = 0.0
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    half: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    terrain: Terrain | None = None
    step_count: int = 0
    draw: RandomizationDraw = NOMINAL
    done: bool = False

    @property
    def velocity(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([self.speed * c - self.lateral * s, self.speed * s + self.lateral * c])

    def set_velocity(self, v: np.ndarray) -> None:
        c, s = math.cos(self.heading), math.sin(self.heading)
        self.speed = float(v[0] * c + v[1] * s)
        self.lateral = float(-v[0] * s + v[1] * c)


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def disk_box_contact(p: np.ndarray, r: float, centers: np.ndarray, half: np.ndarray):
    """Penetration depth and outward normal of a disk against each box."""
    if len(centers) == 0:
        return np.zeros(0), np.zeros((0, 2))
    d = p[None] - centers
    q = np.abs(d) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    signed = outside + inside                       # signed distance centre -> box
    pen = r - signed
    # normal: from closest surface point towards the centre
    closest = centers + np.clip(d, -half, half)
    n = p[None] - closest
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    axis = np.argmax(q, axis=1)
    fallback = np.zeros_like(d)
    fallback[np.arange(len(d)), axis] = np.sign(d[np.arange(len(d)), axis]) + (d[np.arange(len(d)), axis] == 0)
    n = np.where(norm > 1e-12, n / np.maximum(norm, 1e-12), fallback)
    return pen, n


class CorridorEnv:
    """One independent environment instance; not thread-safe, never shared."""

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None, plant: PlantParams = PlantParams()):
        self.cfg = cfg
        self.plant = plant
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.state = WorldState()
        self._history: deque = deque()
        self._frames: deque = deque()
        self._actions: deque = deque()
        self.contact = False

    # ---- episode lifecycle --------------------------------------------
    def reset(self, density: float, draw: RandomizationDraw | None = None) -> Observation:
        if not 0.0 <= density <= 1.0:
            raise ValueError(f"density {density} outside [0, 1]")
        cfg, rng = self.cfg, self.rng
        if draw is None:
            draw = sample_draw(rng) if cfg.randomize else NOMINAL
        n = int(round(density * cfg.max_obstacles))
        xs = rng.uniform(cfg.obstacle_start, cfg.arena_length, n)
        ys = rng.uniform(-cfg.arena_width / 2, cfg.arena_width / 2, n)
        span = rng.uniform(*cfg.obstacle_half_span, n)
        across = rng.random(n) < 0.75
        half = np.where(across[:, None],
                        np.stack([np.full(n, cfg.obstacle_thickness), span], 1),
                        np.stack([span, np.full(n, cfg.obstacle_thickness)], 1))
        vel = np.zeros((n, 2))
        if cfg.dynamic and n:
            ang = rng.uniform(-math.pi, math.pi, n)
            spd = rng.uniform(*cfg.obstacle_speed, n)
            vel = np.stack([np.cos(ang), np.sin(ang)], 1) * spd[:, None]
        terrain = None
        if cfg.rugged:
            c = cfg.height_cell
            nx = int(math.ceil((cfg.arena_length + 8.0) / c))
            ny = int(math.ceil((cfg.arena_width + 4.0) / c))
            terrain = Terrain(rng.uniform(0.0, cfg.height_amplitude, (nx, ny)), (-2.0, -cfg.arena_width / 2 - 2.0), c)
        self.state = WorldState(heading=float(rng.uniform(-0.2, 0.2)),
                                centers=np.stack([xs, ys], 1).reshape(-1, 2), half=half.reshape(-1, 2),
                                velocities=vel, terrain=terrain, draw=draw)
        self.contact = False
        self._actions = deque([np.zeros(cfg.action_dim)] * 3, maxlen=3)
        snap = self._snapshot()
        self._history = deque([snap], maxlen=draw.latency_steps(cfg.dt) + 1)
        frame = self._history[0][1]
        self._frames = deque([frame] * cfg.frames, maxlen=cfg.frames)
        return self.build_observation()

    def render(self) -> np.ndarray:
        s, cfg = self.state, self.cfg
        return render_depth(s.x, s.y, s.heading, s.centers, s.half, cfg.obstacle_height,
                            width=cfg.depth_width, height=cfg.depth_height, fov_h_deg=cfg.fov_h_deg,
                            fov_v_deg=cfg.fov_v_deg, max_range=cfg.max_range,
                            camera_height=cfg.camera_height, terrain=s.terrain)

    def _proprio(self) -> np.ndarray:
        s, cfg = self.state, self.cfg
        base = [s.speed, s.lateral, s.omega, math.sin(s.heading), math.cos(s.heading), float(self.contact)]
        vec = np.zeros(cfg.proprio_dim)
        acts = np.concatenate(list(self._actions)[::-1])   # a_{t-1}, a_{t-2}, a_{t-3}
        vec[:6] = base
        vec[6:6 + acts.size] = acts
        return vec

    def _snapshot(self):
        frame = self.render()
        if self.cfg.salt_noise:
            frame = perturb_depth(frame, self.rng, self.cfg.max_range)
        return self._proprio(), frame

    def build_observation(self) -> Observation:
        """Observation delivered after the latency queue (oldest buffered snapshot)."""
        proprio, _ = self._history[0]
        return Observation(proprio.astype(np.float32), np.stack(list(self._frames)).astype(np.float32))

    # ---- dynamics -----------------------------------------------------
    def step(self, action):
        cfg, p, s = self.cfg, self.plant, self.state
        if s.done:
            raise RuntimeError("step() after episode end; call reset()")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (cfg.action_dim,):
            raise ValueError(f"action shape {a.shape} != ({cfg.action_dim},)")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite action")
        a = np.clip(a, -1.0, 1.0)
        d, dt = s.draw, cfg.dt
        tau = a * d.motor_strength

        gain = d.action_gain / d.mass_scale
        thrust = tau[0] * p.accel_max * gain
        drag = p.drag * d.damping + p.motor_friction_drag * d.motor_friction
        s.speed += dt * (thrust - drag * s.speed)
        brake = max(tau[2], 0.0) * p.brake_decel / d.mass_scale * dt
        s.speed -= math.copysign(min(abs(s.speed), brake), s.speed)
        turn_cmd = tau[1] * p.turn_max * d.action_gain
        s.omega += (turn_cmd - s.omega) * min(1.0, dt / (p.turn_lag * d.inertia_scale))
        s.heading = _wrap(s.heading + s.omega * dt)

        scale = 1.0
        if s.terrain is not None:
            g = s.terrain.gradient_at(s.x, s.y)
            scale = 1.0 / (1.0 + p.terrain_slowdown * float(np.linalg.norm(g)))
            lat_dir = np.array([-math.sin(s.heading), math.cos(s.heading)])
            s.lateral -= p.terrain_push * float(g @ lat_dir) * dt
        s.lateral *= math.exp(-p.lateral_decay * d.friction * dt)

        v = s.velocity
        v = np.array([v[0] * scale, v[1] * scale]) if scale != 1.0 else v
        pos = np.array([s.x, s.y]) + v * dt

        if len(s.centers) and cfg.dynamic:
            s.centers = s.centers + s.velocities * dt
            lo = np.array([cfg.obstacle_start, -cfg.arena_width / 2])
            hi = np.array([cfg.arena_length, cfg.arena_width / 2])
            out = (s.centers < lo) | (s.centers > hi)
            s.velocities = np.where(out, -s.velocities, s.velocities)
            s.centers = np.clip(s.centers, lo, hi)

        # corridor side bounds are invisible and do not count as contact
        y_lim = cfg.arena_width / 2 - cfg.agent_radius
        if abs(pos[1]) > y_lim:
            pos[1] = math.copysign(y_lim, pos[1])
            v[1] = 0.0

        pen, normals = disk_box_contact(pos, cfg.agent_radius, s.centers, s.half)
        touching = pen > 0
        collided = bool(touching.any())
        # unrecoverable: approach speed above the impact limit, or overlap past half the obstacle
        rel = v[None] - s.velocities if len(s.velocities) else np.zeros((0, 2))
        approach = np.maximum(-np.sum(normals * rel, axis=1), 0.0)
        unrecoverable = collided and bool(np.any((approach[touching] > p.impact_speed_max)
                                                 | (pen[touching] > 0.5 * s.half[touching].min(axis=1))))
        for k in np.nonzero(touching)[0]:
            pos = pos + normals[k] * pen[k]
            vn = float(v @ normals[k])
            if vn < 0:
                v = v - vn * normals[k]
        s.x, s.y = float(pos[0]), float(pos[1])
        s.set_velocity(v / scale if scale != 1.0 else v)
        s.step_count += 1
        self.contact = collided

        fell = abs(s.speed) > p.fall_factor * p.nominal_speed or abs(s.omega) > p.fall_factor * p.turn_max
        reason = ""
        if unrecoverable:
            reason = "collision"
        elif fell:
            reason = "fall"
        elif s.step_count >= cfg.horizon:
            reason = "horizon"
        failed = reason in ("collision", "fall")
        reward, terms = compute_reward(v, tau, alive=not failed)
        s.done = bool(reason)

        self._actions.append(a.copy())
        self._history.append(self._snapshot())
        self._frames.append(self._history[0][1])
        info = dict(terms, collision=collided, done_reason=reason, x=s.x, y=s.y, heading=s.heading,
                    velocity=v.copy())
        return self.build_observation(), reward, s.done, info
