"""Stability and learning-efficiency statistics over per-epoch series.

One epoch is one PPO iteration. All functions are pure and work from the
logged series alone.
"""
from __future__ import annotations

import numpy as np


def cov(x, rel_floor: float = 1e-12) -> float | None:
    """Population std / mean; None when the mean is (numerically) zero."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    if abs(mu) <= rel_floor * max(1.0, float(np.abs(x).max(initial=0.0))):
        return None
    return float(x.std() / mu)


def stability_stats(series: dict, window: int = 200) -> dict:
    """CoV of each named series over its last ``window`` epochs."""
    out = {}
    for name, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        if len(values) < window:
            raise ValueError(f"series {name!r} has {len(values)} epochs < window {window}")
        out[name] = cov(values[-window:])
    return out


def lsq_slope(y) -> float:
    y = np.asarray(y, dtype=np.float64)
    x = np.arange(len(y), dtype=np.float64)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def efficiency_stats(returns, early_window: int = 120, final_window: int | None = None) -> dict:
    """final reward, early slope, learning efficiency and AUC per epoch.

    final reward averages the last ``final_window`` epochs (default: the same
    width as the early window); learning efficiency is
    (final - initial) / epochs with the initial value being the first epoch.
    """
    y = np.asarray(returns, dtype=np.float64)
    if len(y) <= early_window or early_window < 1:
        raise ValueError(f"series of {len(y)} epochs too short for early window {early_window}")
    final_window = early_window if final_window is None else final_window
    final = float(y[-final_window:].mean())
    return {
        "final_reward": final,
        "early_slope": lsq_slope(y[:early_window]) if early_window >= 2 else None,
        "learning_efficiency": (final - float(y[0])) / len(y),
        "auc_per_epoch": float(y.mean()),
    }
