import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agvrl.env import EnvConfig, ExplorationEnv, Observation, reward_explore, reward_sar
from agvrl.worldmap import collision_check, load_map, raycast


def make_env(**kw):
    seed = kw.pop("seed", 0)
    return ExplorationEnv(EnvConfig(**kw), seed=seed)


@pytest.mark.parametrize("args, expected", [((0, 0, 0), 0.0), ((10, 1, 0), 2.25), ((0, 0, 1), -0.6)])
def test_reward_explore_examples(args, expected):
    assert reward_explore(*args) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "r, expected", [(2.2, 0.0075 * 4.84 + 2.0), (0.5, 0.001875 - 50), (1.5, 0.016875)]
)
def test_reward_sar_examples(r, expected):
    assert reward_sar(r, 0.0, 0.0) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0, 20), st.floats(0, 2), st.floats(-1.5, 1.5))
def test_sar_minus_explore_in_branch_set(r, v, w):
    diff = reward_sar(r, v, w) - reward_explore(r, v, w)
    if 2.0 < r < 2.5:
        assert diff == pytest.approx(2.0, abs=1e-9)
    elif r < 1.0:
        assert diff == pytest.approx(-50.0, abs=1e-9)
    else:
        assert diff == 0.0


def test_sar_boundaries_are_strict():
    for r in (1.0, 2.0, 2.5):
        assert reward_sar(r, 0, 0) == reward_explore(r, 0, 0)


def test_explore_reward_monotone_on_grid():
    r = np.linspace(0, 10, 21)
    v = np.linspace(0, 2, 21)
    w = np.linspace(0, 1.5, 21)
    R = np.array([[[reward_explore(a, b, c) for c in w] for b in v] for a in r])
    assert np.all(np.diff(R, axis=0) >= 0)
    assert np.all(np.diff(R, axis=1) >= 0)
    assert np.all(np.diff(R, axis=2) <= 0)


def test_reset_observation_shape_and_content():
    env = make_env(map_file="env2", beams=24)
    obs = env.reset()
    assert obs.shape == (50,)
    view = Observation.from_vector(obs, 24)
    np.testing.assert_array_equal(view.ranges_now, view.ranges_prev)
    np.testing.assert_array_equal(view.action_prev, [0.0, 0.0])
    assert np.all(view.ranges_now > 0) and np.all(view.ranges_now <= 1)
    np.testing.assert_array_equal(view.to_vector(), obs)


def test_reset_deterministic_by_seed():
    a = make_env(map_file="env2").reset(seed=7)
    b = make_env(map_file="env2", seed=99).reset(seed=7)
    assert a.tobytes() == b.tobytes()


def test_spawn_respects_clearance():
    env = make_env(map_file="env2", clearance=1.0)
    for _ in range(1000):
        env.reset()
        assert not collision_check(env.world, env.state.pose, 1.0)


def test_zero_action_reward_is_range_term():
    env = make_env(map_file="env1")
    env.reset(pose=(12.5, 12.5, 0.3))
    out = env.step([-1.0, 0.0])  # v = 0, omega = 0
    assert not out.done
    scan = raycast(env.world, (12.5, 12.5, 0.3), env.beam_angles, 10.0).ranges
    assert out.reward == pytest.approx(0.0075 * scan.min() ** 2, abs=1e-12)
    assert env.state.pose == (12.5, 12.5, 0.3)


def test_drive_into_wall_collides_in_time():
    env = make_env(map_file="env1", dt=0.1)
    env.reset(pose=(0.3 + 0.5, 12.5, math.pi))  # footprint edge 0.5 m from the left wall
    bound = math.ceil(0.5 / (2 * 0.1)) + 1
    for k in range(1, bound + 1):
        out = env.step([1.0, 0.0])
        if out.info["collided"]:
            break
    assert out.info["collided"] and out.done
    assert k <= bound


def test_step_budget_terminates_without_collision():
    env = make_env(map_file="env1", episode_steps=15)
    env.reset(pose=(12.5, 12.5, 0.0))
    for k in range(15):
        out = env.step([-1.0, 0.0])
        assert out.done == (k == 14)
    assert not out.info["collided"]
    with pytest.raises(RuntimeError):
        env.step([0.0, 0.0])


def test_observation_windows_shift():
    env = make_env(map_file="env2")
    first = env.reset()
    a = np.array([0.2, -0.4])
    out = env.step(a)
    view = Observation.from_vector(out.observation, 24)
    np.testing.assert_array_equal(view.ranges_prev, first[:24])
    np.testing.assert_array_equal(view.action_prev, a)


def test_action_denormalization():
    env = make_env()
    assert env.denormalize([-1, -1]) == (0.0, -1.5)
    assert env.denormalize([1, 1]) == (2.0, 1.5)
    assert env.denormalize([5, 0]) == (2.0, 0.0)
    np.testing.assert_allclose(env.normalize(*env.denormalize([0.3, -0.2])), [0.3, -0.2])


def test_no_unflagged_penetration_and_replay_determinism():
    def rollout():
        env = make_env(map_file="env2", seed=3, episode_steps=300)
        rng = np.random.default_rng(5)
        env.reset()
        outs = []
        for _ in range(2000):
            out = env.step(rng.uniform(-1, 1, 2))
            outs.append(out)
            if not out.done:
                assert out.observation[:24].min() * 10.0 > env.config.footprint_radius
            else:
                env.reset()
        return outs

    a, b = rollout(), rollout()
    for x, y in zip(a, b):
        assert x.observation.tobytes() == y.observation.tobytes()
        assert x.reward == y.reward and x.done == y.done and x.info == y.info


def test_sar_env_uses_sar_reward():
    env = make_env(map_file="forest", reward="sar")
    env.reset()
    out = env.step([0.0, 0.3])
    v, w = env.denormalize([0.0, 0.3])
    assert out.reward == reward_sar(out.info["min_range"], v, w)


def test_bad_config():
    with pytest.raises(ValueError):
        EnvConfig(reward="nope")
    with pytest.raises(ValueError):
        ExplorationEnv(EnvConfig(v_max=5.0))
    with pytest.raises(Exception):
        ExplorationEnv(EnvConfig(map_file="does_not_exist.json"))


def test_bundled_map_default():
    env = make_env()
    assert env.world == load_map("env1")
