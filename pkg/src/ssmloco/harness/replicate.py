"""Desk-scale replication: variant ordering on thin obstacles plus zero-shot transfer.

Trains every comparison variant for each seed, evaluates a random-policy
baseline under the same protocol, then re-evaluates the thin-trained fusion
and proprio-only checkpoints on the rugged and dynamic scenarios. Finished
runs are reused, so an interrupted study resumes where it stopped.

    python -m ssmloco.harness.replicate --out runs/desk
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from .cli import run_stats
from .config import desk_config
from .evaluate import evaluate, evaluate_policy, random_policy
from .train import load_agent, train

log = logging.getLogger("ssmloco")

COMPARED = ("ssm-fusion", "proprio-only", "vision-only-ssm", "vision-only-attn", "attn-fusion")
ZERO_SHOT = ("ssm-fusion", "proprio-only")
TRANSFER = ("rugged", "dynamic")


def run_dir(root: Path, variant: str, seed: int) -> Path:
    return root / variant / f"seed{seed}"


def _final_eval(run: Path) -> dict:
    with open(run / "summary.json") as fh:
        return json.load(fh)["eval"]


def train_all(cfg, root: Path, variants=COMPARED, seeds=(0, 1, 2)) -> None:
    for seed in seeds:
        for v in variants:
            out = run_dir(root, v, seed)
            if (out / "summary.json").exists():
                log.info("reuse %s", out)
                continue
            t0 = time.perf_counter()
            train(cfg.with_(variant=v), seed, out, progress=True)
            log.info("%s seed %d done in %.0fs", v, seed, time.perf_counter() - t0)


def random_baseline(cfg) -> dict:
    s = evaluate_policy(random_policy(cfg.arch.action_dim), cfg.scenario, repeats=cfg.eval_repeats,
                        episodes=cfg.eval_episodes, seed=cfg.eval_seed)
    return {"mean_return": s.mean_return, "distance": s.distance, "collision_times": s.collisions}


def zero_shot(cfg, root: Path, seeds) -> dict:
    out: dict = {}
    for v in ZERO_SHOT:
        for seed in seeds:
            agent, run_cfg, _ = load_agent(run_dir(root, v, seed) / "model.ckpt")
            for scen in TRANSFER:
                s = evaluate(agent, run_cfg.scenario.with_(scenario=scen), trained_on=run_cfg.scenario.scenario,
                             repeats=cfg.eval_repeats, episodes=cfg.eval_episodes, seed=cfg.eval_seed)
                out.setdefault(scen, {}).setdefault(v, []).append(
                    {"seed": seed, "mean_return": s.mean_return, "distance": s.distance})
    return out


def _mean(xs):
    return None if any(x is None for x in xs) else float(np.mean(xs))


def summarize(cfg, root: Path, seeds, early_window: int = 120) -> dict:
    early_window = min(early_window, cfg.iterations - 1)
    variants = {}
    for v in COMPARED:
        rows = []
        for seed in seeds:
            d = run_dir(root, v, seed)
            ev = _final_eval(d)
            st = run_stats(d, window=min(200, cfg.iterations), early_window=early_window)
            rows.append({"seed": seed, "final_return": ev["mean_return"]["mean"],
                         "distance": ev["distance"]["mean"], "early_slope": st.get("early_slope"),
                         "train_final_reward": st.get("final_reward")})
        variants[v] = {"runs": rows, "final_return": _mean([r["final_return"] for r in rows]),
                       "distance": _mean([r["distance"] for r in rows]),
                       "early_slope": _mean([r["early_slope"] for r in rows])}
    return {"iterations": cfg.iterations, "seeds": list(seeds), "scenario": cfg.scenario.scenario,
            "depth": [cfg.scenario.depth_height, cfg.scenario.depth_width], "early_window": early_window,
            "variants": variants}


def write_table(path: Path, summary: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variant", "final_return", "distance", "early_slope"))
        for v, s in summary["variants"].items():
            slope = "NA" if s["early_slope"] is None else f"{s['early_slope']:.4f}"
            w.writerow((v, f"{s['final_return']:.3f}", f"{s['distance']:.3f}", slope))
        rb = summary["random"]
        w.writerow(("random-policy", f"{rb['mean_return']:.3f}", f"{rb['distance']:.3f}", "NA"))


def replicate(root, iterations: int = 200, seeds=(0, 1, 2)) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cfg = desk_config(iterations=iterations)
    train_all(cfg, root, seeds=seeds)
    summary = summarize(cfg, root, seeds)
    summary["random"] = random_baseline(cfg)
    summary["zero_shot"] = zero_shot(cfg, root, seeds)
    with open(root / "replication.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    write_table(root / "replication.csv", summary)
    return summary


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--seeds", default="0 1 2")
    args = p.parse_args(argv)
    seeds = tuple(int(s) for s in args.seeds.replace(",", " ").split())
    s = replicate(args.out, args.iterations, seeds)
    print(json.dumps({v: {k: x[k] for k in ("final_return", "distance", "early_slope")}
                      for v, x in s["variants"].items()}, indent=1))
    print("random", s["random"])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
