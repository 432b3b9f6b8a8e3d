"""Command line entry point: train, eval, bench, gradcheck, stats."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from ..envsim import canonical_scenario
from ..models import VARIANTS
from .analytics import efficiency_stats, stability_stats
from .bench import DEFAULT_GRID, bench_scan, slopes, write_bench_csv
from .config import desk_config, load_run_config, paper_config
from .evaluate import evaluate, summary_rows
from .gradcheck_suite import SuiteReport, mutation_suite, op_suite, pipeline_suite
from .train import EVAL_COLUMNS, _write_csv, load_agent, train

log = logging.getLogger("ssmloco")


def _seeds(text: str | None):
    if text is None:
        return None
    out = [int(s) for s in text.replace(",", " ").split()]
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return tuple(out)


def resolve_config(args):
    base = paper_config() if args.paper_config else desk_config()
    cfg = load_run_config(args.config, base) if args.config else base
    kw = {}
    if getattr(args, "variant", None):
        kw["variant"] = args.variant
    if getattr(args, "seed", None):
        kw["seeds"] = args.seed
    if getattr(args, "out", None):
        kw["out_dir"] = args.out
    if getattr(args, "iterations", None) is not None:
        kw["iterations"] = args.iterations
    if getattr(args, "scenario", None):
        kw["scenario"] = cfg.scenario.with_(scenario=canonical_scenario(args.scenario))
    return cfg.with_(**kw)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    for seed in cfg.seeds:
        out = Path(cfg.out_dir) / cfg.variant / f"seed{seed}"
        m = train(cfg, seed, out, progress=True)
        fe = m.final_eval
        print(f"{cfg.variant} seed {seed}: eval return {fe.mean_return:.2f} distance {fe.distance:.2f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    agent, cfg, meta = load_agent(args.checkpoint)
    scenario = cfg.scenario
    if args.scenario:
        scenario = scenario.with_(scenario=canonical_scenario(args.scenario))
    seeds = args.seed or (cfg.eval_seed,)
    out = Path(args.out or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in seeds:
        summary = evaluate(agent, scenario, trained_on=cfg.scenario.scenario, repeats=args.repeats or cfg.eval_repeats,
                           episodes=cfg.eval_episodes, seed=s)
        rows.extend(summary_rows(summary, iter=meta.get("iterations", -1)))
        for k in ("mean_return", "collision_times", "distance"):
            mu, sd = summary.mean_std(k)
            shown = "NA" if mu is None else f"{mu:.3f} +- {sd:.3f}"
            print(f"{scenario.scenario} seed {s} {k}: {shown}")
    _write_csv(out / f"eval_{scenario.scenario}.csv", EVAL_COLUMNS, rows)
    return 0


def cmd_bench(args) -> int:
    grid = tuple(int(x) for x in args.grid.split(",")) if args.grid else DEFAULT_GRID
    rows = bench_scan(grid, repeats=args.repeats, d=args.width, batch=args.batch)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(out / "bench_scan.csv", rows)
    sl = slopes(rows)
    with open(out / "bench_slopes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("backend", "quantity", "loglog_slope"))
        for backend, vals in sl.items():
            for q, v in vals.items():
                w.writerow((backend, q, f"{v:.4f}"))
                print(f"{backend:16s} {q:12s} slope {v:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    reports: list[SuiteReport] = []
    if args.component in ("ops", "all"):
        reports.append(op_suite())
    if args.component in ("pipeline", "all"):
        reports.append(pipeline_suite(seeds=range(args.seeds)))
    if args.component in ("mutation", "all"):
        reports.append(mutation_suite())
    ok = True
    for r in reports:
        print("\n".join(r.lines()))
        ok &= r.passed
    print("gradcheck:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _read_column(path: Path, name: str) -> list:
    with open(path, newline="") as fh:
        return [row[name] for row in csv.DictReader(fh)]


def run_stats(run_dir: Path, window: int = 200, early_window: int = 120) -> dict:
    """Analytics recomputed from a run's CSV logs."""
    raw = _read_column(run_dir / "train_log.csv", "epoch_return")
    vals = [None if v == "NA" else float(v) for v in raw]
    first = next((v for v in vals if v is not None), 0.0)
    series, last = [], first
    for v in vals:
        last = v if v is not None else last
        series.append(last)
    value_loss = [float(v) for v in _read_column(run_dir / "train_log.csv", "loss_value")]
    adv = [float(v) for v in _read_column(run_dir / "train_log.csv", "mean_abs_adv")]
    win = min(window, len(series))
    ew = min(early_window, len(series) - 1)
    out = {"epochs": len(series)}
    out.update(stability_stats({"value_loss": value_loss, "advantage": adv}, win) if win else {})
    if ew >= 1:
        out.update(efficiency_stats(series, ew))
    return out


def cmd_stats(args) -> int:
    root = Path(args.out or "runs")
    dirs = sorted(p.parent for p in root.rglob("train_log.csv"))
    if not dirs:
        print(f"no runs under {root}", file=sys.stderr)
        return 1
    rows = []
    for d in dirs:
        s = run_stats(d, args.window, args.early_window)
        s["run"] = str(d.relative_to(root))
        rows.append(s)
    cols = ["run", "epochs", "final_reward", "early_slope", "learning_efficiency", "auc_per_epoch",
            "value_loss", "advantage"]
    with open(root / "stats.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("NA" if r.get(k) is None else r.get(k)) for k in cols})
    print(json.dumps(rows, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ssmloco", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--config", help="sectioned key/value run config")
        sp.add_argument("--seed", type=_seeds, help="seed list, e.g. '0 1 2' or 0,1,2")
        sp.add_argument("--variant", choices=VARIANTS)
        sp.add_argument("--scenario", help="thin | rugged | dynamic")
        sp.add_argument("--out", help="output directory")
        size = sp.add_mutually_exclusive_group()
        size.add_argument("--paper-config", action="store_true", help="64x64 depth, d=128, full PPO budget")
        size.add_argument("--desk", action="store_true", help="16x16 depth, reduced widths (default)")

    t = sub.add_parser("train", help="train one variant for each seed")
    common(t)
    t.add_argument("--iterations", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint (zero-shot on other scenarios allowed)")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--repeats", type=int)
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("bench", help="scan vs attention token scaling")
    common(b)
    b.add_argument("--repeats", type=int, default=7)
    b.add_argument("--grid", help="comma separated token counts")
    b.add_argument("--width", type=int, default=32)
    b.add_argument("--batch", type=int, default=16)
    b.set_defaults(fn=cmd_bench)

    g = sub.add_parser("gradcheck", help="finite-difference suites (double precision)")
    common(g)
    g.add_argument("--component", choices=("ops", "pipeline", "mutation", "all"), default="all")
    g.add_argument("--seeds", type=int, default=20)
    g.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("stats", help="stability and efficiency analytics from run logs")
    common(s)
    s.add_argument("--window", type=int, default=200)
    s.add_argument("--early-window", type=int, default=120)
    s.set_defaults(fn=cmd_stats)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
