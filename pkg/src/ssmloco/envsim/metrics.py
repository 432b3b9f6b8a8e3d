"""Evaluation metrics and the per-step episode log."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

EPISODE_COLUMNS = ("episode", "t", "x", "y", "heading", "reward", "r_fwd", "r_energy", "r_alive",
                   "collision", "done_reason")


@dataclass
class EpisodeRecord:
    """Per-step trace of one episode; enough to recompute every metric."""

    rows: list = field(default_factory=list)
    start_x: float = 0.0

    def log(self, t: int, info: dict, reward: float, episode: int = 0) -> None:
        self.rows.append({"episode": episode, "t": t, "x": info["x"], "y": info["y"],
                          "heading": info["heading"], "reward": reward, "r_fwd": info["r_fwd"],
                          "r_energy": info["r_energy"], "r_alive": info["r_alive"],
                          "collision": int(info["collision"]), "done_reason": info["done_reason"]})

    @property
    def episode_return(self) -> float:
        return float(sum(r["reward"] for r in self.rows))

    @property
    def collisions(self) -> int:
        return int(sum(r["collision"] for r in self.rows))

    @property
    def distance(self) -> float:
        if not self.rows:
            return 0.0
        return float(self.rows[-1]["x"] - self.start_x)


@dataclass(frozen=True)
class EvalResult:
    mean_return: float
    collision_times: float | None     # None when the metric is not reported
    distance: float


def eval_metrics(episodes: list, report_collisions: bool = True) -> EvalResult:
    """Metrics of one evaluation run (a segment of episodes).

    Return and distance are per-episode means; collisions are the total number
    of colliding control steps over the whole run.
    """
    if not episodes:
        raise ValueError("eval_metrics needs at least one episode")
    ret = float(np.mean([e.episode_return for e in episodes]))
    dist = float(np.mean([e.distance for e in episodes]))
    coll = float(sum(e.collisions for e in episodes)) if report_collisions else None
    return EvalResult(ret, coll, dist)


def write_episode_csv(path, episodes: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EPISODE_COLUMNS)
        w.writeheader()
        for i, ep in enumerate(episodes):
            for row in ep.rows:
                w.writerow(dict(row, episode=i))


def read_episode_csv(path) -> list:
    """Inverse of write_episode_csv; start positions are taken as x = 0."""
    eps: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["episode"])
            rec = eps.setdefault(k, EpisodeRecord())
            rec.rows.append({"episode": k, "t": int(row["t"]), "x": float(row["x"]), "y": float(row["y"]),
                             "heading": float(row["heading"]), "reward": float(row["reward"]),
                             "r_fwd": float(row["r_fwd"]), "r_energy": float(row["r_energy"]),
                             "r_alive": float(row["r_alive"]), "collision": int(row["collision"]),
                             "done_reason": row["done_reason"]})
    return [eps[k] for k in sorted(eps)]
