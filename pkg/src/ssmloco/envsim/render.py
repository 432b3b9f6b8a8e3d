"""Forward-facing depth camera for the corridor world.

Pixels hold planar (z-buffer) depth along the camera's forward axis. Rays
that reach the flat ground plane without touching an obstacle or a raised
terrain cell return ``max_range``, i.e. the ground plane is filtered out the
way most depth pipelines remove it.
"""
from __future__ import annotations

import math

import numpy as np


def pixel_angles(width: int, height: int, fov_h_deg: float, fov_v_deg: float):
    """Horizontal angles per column (left positive) and vertical per row (up positive)."""
    half_h = math.radians(fov_h_deg) / 2
    half_v = math.radians(fov_v_deg) / 2
    cols = half_h * (1 - (2 * np.arange(width) + 1) / width)
    rows = half_v * (1 - (2 * np.arange(height) + 1) / height)
    return cols, rows


def ray_box_distances(origin, angles: np.ndarray, centers: np.ndarray, half: np.ndarray):
    """Horizontal entry distance of each ray into each axis-aligned box.

    Returns an array (n_rays, n_boxes) with ``inf`` where the ray misses or
    the box is entirely behind the origin.
    """
    if len(centers) == 0:
        return np.full((len(angles), 0), np.inf)
    dx = np.cos(angles)[:, None]
    dy = np.sin(angles)[:, None]
    lo = centers - half
    hi = centers + half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_x = np.where(np.abs(dx) > 1e-12, 1.0 / dx, np.inf)
        inv_y = np.where(np.abs(dy) > 1e-12, 1.0 / dy, np.inf)
        tx1 = (lo[None, :, 0] - origin[0]) * inv_x
        tx2 = (hi[None, :, 0] - origin[0]) * inv_x
        ty1 = (lo[None, :, 1] - origin[1]) * inv_y
        ty2 = (hi[None, :, 1] - origin[1]) * inv_y
    # rays parallel to a slab: inside the slab -> unbounded, outside -> miss
    par_x = np.abs(dx) <= 1e-12
    inside_x = (origin[0] >= lo[:, 0]) & (origin[0] <= hi[:, 0])
    tx1 = np.where(par_x, np.where(inside_x, -np.inf, np.inf), tx1)
    tx2 = np.where(par_x, np.where(inside_x, np.inf, -np.inf), tx2)
    par_y = np.abs(dy) <= 1e-12
    inside_y = (origin[1] >= lo[:, 1]) & (origin[1] <= hi[:, 1])
    ty1 = np.where(par_y, np.where(inside_y, -np.inf, np.inf), ty1)
    ty2 = np.where(par_y, np.where(inside_y, np.inf, -np.inf), ty2)
    t_enter = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
    t_exit = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
    hit = (t_exit >= np.maximum(t_enter, 0.0)) & np.isfinite(t_exit)
    return np.where(hit, np.maximum(t_enter, 0.0), np.inf)


def render_depth(x: float, y: float, heading: float, centers: np.ndarray, half: np.ndarray,
                 obstacle_height: float, *, width: int = 16, height: int = 16,
                 fov_h_deg: float = 90.0, fov_v_deg: float = 60.0, max_range: float = 5.0,
                 camera_height: float = 0.25, terrain=None, march_step: float = 0.02) -> np.ndarray:
    """Depth image (height x width) seen from pose (x, y, heading)."""
    cols, rows = pixel_angles(width, height, fov_h_deg, fov_v_deg)
    cos_c = np.cos(cols)
    tan_r = np.tan(rows)
    depth = np.full((height, width), np.inf)

    t = ray_box_distances((x, y), heading + cols, np.asarray(centers, float).reshape(-1, 2),
                          np.asarray(half, float).reshape(-1, 2))
    if t.size:
        # height of each row's ray where it enters each box: (rows, cols, boxes)
        z = camera_height + tan_r[:, None, None] * t[None]
        visible = np.isfinite(t)[None] & (z >= 0.0) & (z <= obstacle_height)
        fwd = np.where(visible, t[None] * cos_c[None, :, None], np.inf)
        depth = np.minimum(depth, fwd.min(axis=2))

    if terrain is not None:
        depth = np.minimum(depth, _terrain_depth(x, y, heading, cols, rows, cos_c, tan_r,
                                                 max_range, camera_height, terrain, march_step))
    return np.minimum(depth, max_range)


def _terrain_depth(x, y, heading, cols, rows, cos_c, tan_r, max_range, camera_height, terrain, step):
    down = np.nonzero(tan_r < 0)[0]
    out = np.full((len(rows), len(cols)), np.inf)
    if len(down) == 0:
        return out
    # march until the ray meets the ground plane or leaves the depth range
    t_ground = camera_height / -tan_r[down]
    t_max = min(max_range / cos_c.min(), float(t_ground.max()))
    ts = np.arange(step, t_max + step, step)
    ang = heading + cols
    px = x + np.cos(ang)[:, None] * ts[None]
    py = y + np.sin(ang)[:, None] * ts[None]
    hf = terrain.height_at(px, py)                        # (cols, samples)
    z = camera_height + tan_r[down][:, None, None] * ts[None, None]  # (down, 1, samples)
    hit = (z <= hf[None]) & (hf[None] > 0) & (ts[None, None] <= t_ground[:, None, None])
    first = np.where(hit.any(axis=2), hit.argmax(axis=2), -1)
    t_hit = np.where(first >= 0, ts[np.maximum(first, 0)], np.inf)
    out[down] = t_hit * cos_c[None]
    return out
