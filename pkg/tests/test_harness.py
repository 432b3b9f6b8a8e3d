import json
import warnings

import numpy as np
import pytest

from ssmloco.harness import cli
from ssmloco.harness.analytics import cov, efficiency_stats, lsq_slope, stability_stats
from ssmloco.harness.bench import bench_scan, loglog_slope, slopes
from ssmloco.harness.config import desk_config, load_run_config, paper_config, save_run_config
from ssmloco.harness.evaluate import (
    ABSENT,
    evaluate,
    evaluate_policy,
    random_policy,
    reports_collisions,
    summary_rows,
)
from ssmloco.harness.train import build_agent, load_agent, train


def tiny_config(**kw):
    cfg = desk_config(iterations=2, n_envs=2, eval_every=0, eval_repeats=1, eval_episodes=1)
    cfg = cfg.with_(ppo=cfg.ppo.with_(horizon=30, samples_per_iter=64, minibatch=32, epochs=1),
                    scenario=cfg.scenario.with_(horizon=30))
    return cfg.with_(**kw)


# ---- analytics ----------------------------------------------------------------
def test_cov_examples():
    assert stability_stats({"v": [2.0] * 5}, window=5) == {"v": 0.0}
    assert stability_stats({"v": [1.0, 3.0]}, window=2) == {"v": 0.5}
    assert cov([-1.0, 1.0]) is None
    with pytest.raises(ValueError):
        stability_stats({"v": [1.0, 2.0]}, window=3)


def test_stability_uses_trailing_window():
    s = stability_stats({"adv": [100.0, -7.0, 1.0, 3.0]}, window=2)
    assert s["adv"] == 0.5


def test_efficiency_examples():
    lin = 3.0 * np.arange(10) + 2.0
    e = efficiency_stats(lin, early_window=5)
    assert e["early_slope"] == 3.0
    assert e["final_reward"] == float(lin[-5:].mean())
    assert e["learning_efficiency"] == (e["final_reward"] - 2.0) / 10
    const = efficiency_stats([4.0] * 8, early_window=4)
    assert const["early_slope"] == 0.0 and const["auc_per_epoch"] == 4.0
    assert efficiency_stats([0.0, 10.0], early_window=1)["auc_per_epoch"] == 5.0
    with pytest.raises(ValueError):
        efficiency_stats([1.0, 2.0], early_window=2)
    assert lsq_slope([1.0, 3.0]) == 2.0


# ---- config ----------------------------------------------------------------------
def test_run_config_round_trip(tmp_path):
    cfg = desk_config(variant="attn-fusion", seeds=(4, 5))
    save_run_config(cfg, tmp_path / "run.ini")
    assert load_run_config(tmp_path / "run.ini") == cfg
    p = paper_config()
    save_run_config(p, tmp_path / "full.ini")
    assert load_run_config(tmp_path / "full.ini", paper_config()) == p


def test_run_config_cross_validation():
    cfg = desk_config()
    with pytest.raises(ValueError):
        cfg.with_(variant="transformer")
    with pytest.raises(ValueError):
        cfg.with_(scenario=cfg.scenario.with_(horizon=100))


# ---- training, determinism, checkpoints ----------------------------------------------
def test_tiny_training_is_bit_reproducible(tmp_path):
    cfg = tiny_config()
    train(cfg, 3, tmp_path / "a")
    train(cfg, 3, tmp_path / "b")
    for name in ("train_log.csv", "update_stats.csv", "eval.csv", "eval_episodes.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    train(cfg, 4, tmp_path / "c")
    assert (tmp_path / "a" / "update_stats.csv").read_bytes() != (tmp_path / "c" / "update_stats.csv").read_bytes()


def test_checkpoint_reload_reproduces_eval(tmp_path):
    cfg = tiny_config(variant="proprio-only", iterations=1)
    m = train(cfg, 0, tmp_path)
    agent, cfg2, meta = load_agent(tmp_path / "model.ckpt")
    assert cfg2 == cfg and meta["iterations"] == 1
    again = evaluate(agent, cfg.scenario, repeats=1, episodes=1, seed=cfg.eval_seed)
    assert again.mean_return == m.final_eval.mean_return
    assert again.distance == m.final_eval.distance


def test_zero_shot_eval_warns_but_runs():
    cfg = tiny_config()
    agent = build_agent(cfg, 0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        s = evaluate(agent, cfg.scenario.with_(scenario="rugged"), trained_on="thin", repeats=1, episodes=1, seed=1)
    assert any("zero-shot" in str(x.message) or "trained on" in str(x.message) for x in w)
    assert np.isfinite(s.mean_return)


def test_vision_only_collisions_absent():
    assert not reports_collisions("vision-only-ssm") and not reports_collisions("vision-only-attn")
    assert reports_collisions("ssm-fusion")
    cfg = tiny_config(variant="vision-only-ssm")
    s = evaluate(build_agent(cfg, 0), cfg.scenario, repeats=1, episodes=1, seed=0)
    assert s.collisions is None
    assert summary_rows(s)[0]["collision_times"] == ABSENT


def test_random_policy_baseline_deterministic():
    scen = tiny_config().scenario
    a = evaluate_policy(random_policy(3), scen, repeats=2, episodes=2, seed=5)
    b = evaluate_policy(random_policy(3), scen, repeats=2, episodes=2, seed=5)
    assert a.mean_return == b.mean_return and a.distance == b.distance
    assert abs(a.distance) < 1.0


# ---- bench --------------------------------------------------------------------------
def test_loglog_slope_exact():
    n = np.array([64, 128, 256])
    assert loglog_slope(n, 5 * n ** 2) == pytest.approx(2.0)
    assert loglog_slope(n, 3 * n) == pytest.approx(1.0)


def test_bench_rows_and_matrix_bytes():
    rows = bench_scan((16, 32), repeats=1, d=8, h=2)
    backends = {r.backend for r in rows}
    assert {"ssm-sequential", "ssm-parallel", "attention"} <= backends
    sl = slopes(rows)
    assert sl["attention"]["matrix_bytes"] == pytest.approx(2.0)


# ---- cli ----------------------------------------------------------------------------
def test_cli_gradcheck_mutation_and_stats(tmp_path, capsys):
    assert cli.main(["gradcheck", "--component", "mutation"]) == 0
    cfg = tiny_config(iterations=3)
    train(cfg, 0, tmp_path / "ssm-fusion" / "seed0")
    assert cli.main(["stats", "--out", str(tmp_path), "--window", "3", "--early-window", "2"]) == 0
    out = capsys.readouterr().out
    rows = json.loads(out[out.index("["):])
    assert rows[0]["epochs"] == 3
    assert (tmp_path / "stats.csv").exists()


def test_cli_train_and_eval(tmp_path):
    cfg = tiny_config(iterations=1)
    save_run_config(cfg, tmp_path / "run.ini")
    assert cli.main(["train", "--config", str(tmp_path / "run.ini"), "--variant", "proprio-only",
                     "--seed", "1", "--out", str(tmp_path)]) == 0
    ckpt = tmp_path / "proprio-only" / "seed1" / "model.ckpt"
    assert ckpt.exists()
    with pytest.warns(UserWarning, match="zero-shot"):
        assert cli.main(["eval", "--checkpoint", str(ckpt), "--scenario", "dynamic", "--repeats", "1"]) == 0
    assert (ckpt.parent / "eval_dynamic.csv").exists()
