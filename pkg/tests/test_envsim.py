import math

import numpy as np
import pytest

from ssmloco.envsim import (
    ALPHA_ALIVE,
    ALPHA_ENERGY,
    ALPHA_FWD,
    NOMINAL,
    CorridorEnv,
    CurriculumSchedule,
    EpisodeRecord,
    ScenarioConfig,
    compute_reward,
    eval_metrics,
    load_scenario,
    read_episode_csv,
    render_depth,
    sample_draw,
    save_scenario,
    write_episode_csv,
)

CFG = ScenarioConfig(horizon=60)
STILL = np.array([0.0, 0.0, 0.0])


# ---- reward -----------------------------------------------------------------
def test_reward_examples():
    assert compute_reward((0.5, 0.0), np.zeros(3), True)[0] == pytest.approx(0.6, abs=1e-12)
    assert compute_reward((0.0, 0.0), np.zeros(3), True)[0] == pytest.approx(0.1, abs=1e-12)
    total, terms = compute_reward((-1.0, 0.0), np.zeros(3), False)
    assert terms["r_fwd"] == -1.0 and total == -1.0


def _rollout(env, density, steps, rng, record=None):
    obs = env.reset(density)
    infos = []
    for t in range(steps):
        obs, r, done, info = env.step(rng.uniform(-1, 1, env.cfg.action_dim))
        infos.append((r, info))
        if record is not None:
            record.log(t, info, r)
        if done:
            break
    return infos


def test_reward_decomposition_and_draws_over_100_episodes():
    rng = np.random.default_rng(0)
    for ep in range(100):
        scen = ("thin", "rugged", "dynamic")[ep % 3]
        env = CorridorEnv(CFG.with_(scenario=scen), seed=ep)
        infos = _rollout(env, 1.0, 40, rng)
        draw = env.state.draw
        assert draw.in_range()
        for k, (r, info) in enumerate(infos):
            assert env.state.draw is draw
            recomposed = ALPHA_FWD * info["r_fwd"] + ALPHA_ENERGY * info["r_energy"] + ALPHA_ALIVE * info["r_alive"]
            assert r == recomposed
            assert info["r_energy"] <= 0.0
            last = k == len(infos) - 1
            failed = info["done_reason"] in ("collision", "fall")
            assert info["r_alive"] == (0.0 if last and failed else 1.0)


def test_draws_in_range_many_seeds():
    rng = np.random.default_rng(1)
    assert all(sample_draw(rng).in_range() for _ in range(1000))


def test_salt_noise_on_observed_frames():
    env = CorridorEnv(CFG, seed=3)
    env.reset(1.0)
    env.render = lambda: np.ones((CFG.depth_height, CFG.depth_width))
    for _ in range(100):
        frame = env._snapshot()[1]
        changed = frame != 1.0
        assert 3 <= changed.sum() <= 30 and np.all(frame[changed] == CFG.max_range)


def test_curriculum_linear_then_saturating():
    c = CurriculumSchedule(0.2, 1.0, 40)
    ds = [c.density(i) for i in range(100)]
    assert ds[0] == 0.2 and ds[20] == pytest.approx(0.6)
    assert all(b >= a for a, b in zip(ds, ds[1:]))
    assert all(d == 1.0 for d in ds[40:])
    assert np.allclose(np.diff(ds[:41]), 0.8 / 40)
    with pytest.raises(ValueError):
        CurriculumSchedule(0.5, 0.2, 10)


def test_density_zero_has_no_obstacles_and_bad_density_raises():
    env = CorridorEnv(CFG, seed=0)
    env.reset(0.0)
    assert len(env.state.centers) == 0
    env.reset(1.0)
    assert len(env.state.centers) == CFG.max_obstacles
    with pytest.raises(ValueError):
        env.reset(1.5)


def test_same_seed_same_layout_and_trace():
    a, b = CorridorEnv(CFG, seed=11), CorridorEnv(CFG, seed=11)
    ia = _rollout(a, 1.0, 30, np.random.default_rng(0))
    ib = _rollout(b, 1.0, 30, np.random.default_rng(0))
    assert np.array_equal(a.state.centers, b.state.centers)
    assert [r for r, _ in ia] == [r for r, _ in ib]


def test_dynamic_obstacles_move_static_do_not():
    for scen, moves in (("thin", False), ("rugged", False), ("dynamic", True)):
        env = CorridorEnv(CFG.with_(scenario=scen), seed=5)
        env.reset(1.0)
        before = env.state.centers.copy()
        env.step(STILL)
        assert (not np.array_equal(before, env.state.centers)) == moves


def test_action_errors():
    env = CorridorEnv(CFG, seed=0)
    env.reset(0.5)
    with pytest.raises(ValueError):
        env.step(np.array([np.nan, 0.0, 0.0]))
    with pytest.raises(ValueError):
        env.step(np.zeros(2))


def test_step_after_done_raises():
    env = CorridorEnv(CFG.with_(horizon=3), seed=0)
    env.reset(0.0)
    for _ in range(3):
        _, _, done, info = env.step(STILL)
    assert done and info["done_reason"] == "horizon"
    with pytest.raises(RuntimeError):
        env.step(STILL)


def test_latency_lags_two_steps():
    env = CorridorEnv(CFG, seed=0)
    draw = NOMINAL.__class__(**dict(NOMINAL.to_dict(), sensor_latency=0.04))
    assert draw.latency_steps(0.02) == 2
    env.reset(0.0, draw)
    speeds = []
    observed = []
    for _ in range(6):
        obs, *_ = env.step(np.array([1.0, 0.0, -1.0]))
        speeds.append(env.state.speed)
        observed.append(float(obs.proprio[0]))
    assert observed[2:] == pytest.approx(speeds[:-2], abs=1e-6)
    env0 = CorridorEnv(CFG, seed=0)
    env0.reset(0.0, NOMINAL)
    obs, *_ = env0.step(np.array([1.0, 0.0, -1.0]))
    assert obs.proprio[0] == pytest.approx(env0.state.speed, abs=1e-6)


def test_frame_warmup_and_stack_order():
    env = CorridorEnv(CFG.with_(salt_noise=False), seed=2)
    obs = env.reset(1.0, NOMINAL)
    assert all(np.array_equal(obs.depth_stack[0], f) for f in obs.depth_stack)
    for _ in range(3):
        obs, *_ = env.step(np.array([1.0, 0.5, -1.0]))
    assert np.array_equal(obs.depth_stack[-1], env.render().astype(np.float32))


def test_proprio_layout():
    env = CorridorEnv(CFG, seed=4)
    env.reset(0.0, NOMINAL)
    a1, a2 = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.5, -0.6])
    env.step(a1)
    obs, *_ = env.step(a2)
    p = obs.proprio
    assert p.shape == (CFG.proprio_dim,)
    np.testing.assert_allclose(p[3:5], [math.sin(env.state.heading), math.cos(env.state.heading)], atol=1e-6)
    np.testing.assert_allclose(p[6:9], a2, atol=1e-7)
    np.testing.assert_allclose(p[9:12], a1, atol=1e-7)
    np.testing.assert_array_equal(p[12:15], 0.0)


# ---- rendering --------------------------------------------------------------
def test_render_empty_arena():
    d = render_depth(0.0, 0.0, 0.0, np.zeros((0, 2)), np.zeros((0, 2)), 0.5)
    assert np.all(d == 5.0)


def test_render_box_dead_ahead():
    centers, half = np.array([[2.05, 0.0]]), np.array([[0.05, 1.0]])
    d = render_depth(0.0, 0.0, 0.0, centers, half, 0.5)
    assert np.abs(d[7:9, 7:9] - 2.0).max() < 0.05
    assert np.all((d >= 0) & (d <= 5.0))
    behind = render_depth(0.0, 0.0, math.pi, centers, half, 0.5)
    assert np.all(behind == 5.0)


# ---- collisions and metrics ---------------------------------------------------
def _scripted_wall_env(x=0.3):
    env = CorridorEnv(CFG.with_(salt_noise=False), seed=0)
    env.reset(0.0, NOMINAL)
    env.state.centers = np.array([[x, 0.0]])
    env.state.half = np.array([[0.05, 1.0]])
    env.state.velocities = np.zeros((1, 2))
    env.state.heading = 0.0
    return env


def test_collision_counter_scripted_trajectory():
    env = _scripted_wall_env()
    rec = EpisodeRecord(start_x=env.state.x)
    contacts = 0
    for t in range(50):
        # creep forward slowly so contact is recoverable, then keep pushing
        env.state.speed = min(env.state.speed, 0.3)
        _, r, done, info = env.step(np.array([0.5, 0.0, -1.0]))
        rec.log(t, info, r)
        gap = env.state.x + CFG.agent_radius - (0.3 - 0.05)
        contacts += int(info["collision"])
        assert info["collision"] == (gap >= -1e-9)
        assert not done
    assert contacts > 0 and rec.collisions == contacts
    assert eval_metrics([rec]).collision_times == contacts
    assert eval_metrics([rec], report_collisions=False).collision_times is None


def test_fast_head_on_impact_ends_episode():
    env = _scripted_wall_env(1.5)
    for _ in range(100):
        _, _, done, info = env.step(np.array([1.0, 0.0, -1.0]))
        if done:
            break
    assert info["done_reason"] == "collision" and info["r_alive"] == 0.0


def test_eval_metrics_clean_run():
    rec = EpisodeRecord(start_x=0.0)
    for t in range(10):
        rec.log(t, dict(x=float(t + 1), y=0.0, heading=0.0, r_fwd=1.0, r_energy=0.0, r_alive=1.0,
                        collision=False, done_reason=""), 1.1)
    m = eval_metrics([rec])
    assert m.distance == 10.0 and m.collision_times == 0 and m.mean_return == pytest.approx(11.0)
    with pytest.raises(ValueError):
        eval_metrics([])


def test_episode_csv_round_trip(tmp_path):
    env = CorridorEnv(CFG, seed=7)
    recs = []
    for _ in range(2):
        rec = EpisodeRecord()
        _rollout(env, 1.0, 25, np.random.default_rng(1), rec)
        rec.start_x = 0.0
        recs.append(rec)
    write_episode_csv(tmp_path / "ep.csv", recs)
    back = read_episode_csv(tmp_path / "ep.csv")
    assert len(back) == 2
    for a, b in zip(recs, back):
        assert a.episode_return == pytest.approx(b.episode_return, abs=1e-9)
        assert a.collisions == b.collisions and a.distance == pytest.approx(b.distance)


def test_scenario_file_round_trip(tmp_path):
    cfg = ScenarioConfig(scenario="dynamic", arena_length=12.5, max_obstacles=7, obstacle_speed=(0.1, 0.3), seed=9)
    save_scenario(cfg, tmp_path / "s.ini")
    assert load_scenario(tmp_path / "s.ini") == cfg
    with pytest.raises(ValueError):
        ScenarioConfig(scenario="lava")
    with pytest.raises(ValueError):
        ScenarioConfig(height_amplitude=0.2)
