import numpy as np
import pytest

from envs import CartPole, GridWorld1D, cartpole_dynamics, collect_random_buffer, make_env, state_histogram


class TestGridWorld:
    """Corridor 1..40 with a non-terminal trap at 3 and the goal at 40."""

    def test_reset(self):
        env = GridWorld1D()
        env.position = 20
        assert env.reset() == 6
        assert env.steps == 0

    @pytest.mark.parametrize("position,action,expected", [
        (39, 1, (40, 1.0, True)),
        (4, 0, (3, -2.0, False)),
        (1, 0, (1, 0.0, False)),
        (10, 1, (11, 0.0, False)),
    ])
    def test_step(self, position, action, expected):
        env = GridWorld1D()
        env.reset()
        env.position = position
        assert env.step(action) == expected

    def test_episode_ends_at_max_steps(self):
        env = GridWorld1D(max_steps=5)
        env.reset()
        dones = [env.step(0)[2] for _ in range(5)]
        assert dones == [False, False, False, False, True]

    def test_step_after_termination(self):
        env = GridWorld1D()
        env.reset()
        env.position = 39
        env.step(1)
        with pytest.raises(RuntimeError, match="episode terminated"):
            env.step(1)

    def test_one_hot_encoding(self):
        encoded = GridWorld1D().encode([1, 40])
        assert encoded.shape == (2, 40)
        assert encoded[0, 0] == 1.0 and encoded[1, 39] == 1.0
        assert encoded.sum() == 2.0


class TestCartPole:
    def test_reset_is_seeded(self):
        env = CartPole()
        first = env.reset(np.random.default_rng(9))
        second = env.reset(np.random.default_rng(9))
        np.testing.assert_array_equal(first, second)

    def test_reset_range(self):
        env = CartPole()
        rng = np.random.default_rng(0)
        states = np.array([env.reset(rng) for _ in range(10_000)])
        assert np.all(np.abs(states) <= 0.05)

    def test_pole_falls_without_force(self):
        state = np.array([0.0, 0.0, 0.01, 0.0])
        angles = []
        for _ in range(10):
            state = cartpole_dynamics(state, 0.0)
            angles.append(abs(state[2]))
        assert all(b >= a for a, b in zip(angles, angles[1:]))

    def test_return_bounded_by_step_cap(self):
        env = CartPole()
        rng = np.random.default_rng(1)
        for _ in range(20):
            env.reset(rng)
            total, done = 0.0, False
            while not done:
                _, reward, done = env.step(int(rng.integers(2)))
                total += reward
            assert 1 <= total <= 200

    def test_identical_actions_give_identical_trajectories(self):
        actions = np.random.default_rng(2).integers(2, size=30)
        trajectories = []
        for _ in range(2):
            env = CartPole(max_steps=1000)
            state = env.reset(np.random.default_rng(3))
            path = [state]
            for a in actions:
                state, _, done = env.step(int(a))
                path.append(state)
                if done:
                    break
            trajectories.append(np.array(path))
        np.testing.assert_array_equal(trajectories[0], trajectories[1])

    def test_step_after_termination(self):
        env = CartPole(max_steps=1)
        env.reset(np.random.default_rng(0))
        env.step(0)
        with pytest.raises(RuntimeError, match="episode terminated"):
            env.step(0)


class TestRandomBuffer:
    """The offline toy's random-policy buffer."""

    def test_exact_length(self):
        buffer = collect_random_buffer(GridWorld1D(), 30_000, np.random.default_rng(0))
        assert len(buffer) == 30_000

    def test_seeded(self):
        first = collect_random_buffer(GridWorld1D(), 500, np.random.default_rng(4)).columns()
        second = collect_random_buffer(GridWorld1D(), 500, np.random.default_rng(4)).columns()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_goal_is_rare_but_present(self):
        buffer = collect_random_buffer(GridWorld1D(), 30_000, np.random.default_rng(0))
        goal_hits = int(buffer.columns()["next_state"].tolist().count(40))
        assert 1 <= goal_hits < 300

    def test_visits_concentrate_near_start(self):
        buffer = collect_random_buffer(GridWorld1D(), 30_000, np.random.default_rng(0))
        histogram = state_histogram(buffer)
        assert histogram.sum() == 30_000
        assert histogram[4:8].sum() > histogram[38]

    def test_steps_increase_within_episodes(self, random_gridworld_buffer):
        cols = random_gridworld_buffer.columns()
        same = cols["episode_id"][1:] == cols["episode_id"][:-1]
        assert np.all(np.diff(cols["step_index"])[same] == 1)
        # only the last transition of an episode may be terminal
        assert not np.any(cols["done"][:-1][same])

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ValueError):
            collect_random_buffer(GridWorld1D(), 0, np.random.default_rng(0))


def test_make_env():
    assert isinstance(make_env("gridworld"), GridWorld1D)
    assert isinstance(make_env("cartpole"), CartPole)
    with pytest.raises(KeyError):
        make_env("pong")
