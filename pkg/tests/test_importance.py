import numpy as np
import pytest

from agents.tabular import TabularQ
from importance import ScoreVector, score_buffer, surprise_profile, td_error, td_reward_rows
from replay_buffer import ReplayBuffer, Transition
from samplers import EpochPlan


class TestTdError:
    def test_terminal_with_exact_target(self):
        agent = TabularQ()
        agent.q[38, 1] = 1.0
        assert td_error(agent, Transition(39, 1, 1.0, 40, True), 0.99) == 0.0

    def test_zero_table_nonterminal(self):
        assert td_error(TabularQ(), Transition(10, 1, 1.0, 11, False), 0.99) == 1.0

    def test_bootstraps_off_target_max(self):
        agent = TabularQ()
        agent.q[4, 0] = 2.0
        agent.q[5] = [1.0, -3.0]
        assert td_error(agent, Transition(5, 0, 0.5, 6, False), 0.9) == pytest.approx(0.6)


class TestScoreBuffer:
    """One TD snapshot over the whole buffer."""

    def test_matched_terminal_transitions_score_zero(self):
        agent = TabularQ()
        buffer = ReplayBuffer(3)
        for s in (10, 20, 30):
            agent.q[s - 1, 0] = 0.5
            buffer.push(Transition(s, 0, 0.5, s + 1, True))
        np.testing.assert_array_equal(score_buffer(agent, buffer, 0.99).scores, [0.0, 0.0, 0.0])

    def test_matches_per_element_loop(self, random_gridworld_buffer):
        agent = TabularQ()
        agent.q[:] = np.random.default_rng(4).normal(size=agent.q.shape)
        scores = score_buffer(agent, random_gridworld_buffer, 0.99, episode=3)

        expected = [td_error(agent, t, 0.99) for t in random_gridworld_buffer]
        np.testing.assert_allclose(scores.scores, expected, rtol=0, atol=1e-12)
        assert scores.computed_at_episode == 3
        assert np.all(scores.scores >= 0)

    def test_deterministic(self, random_gridworld_buffer):
        agent = TabularQ()
        agent.q[:] = np.random.default_rng(5).normal(size=agent.q.shape)
        first = score_buffer(agent, random_gridworld_buffer, 0.99).scores
        second = score_buffer(agent, random_gridworld_buffer, 0.99).scores
        np.testing.assert_array_equal(first, second)

    def test_homogeneous_in_q_and_reward_scale(self):
        agent = TabularQ()
        agent.q[:] = np.random.default_rng(6).normal(size=agent.q.shape)
        buffer = ReplayBuffer(20)
        rewards = np.random.default_rng(7).normal(size=20)
        for i, r in enumerate(rewards):
            buffer.push(Transition(i % 39 + 1, i % 2, float(r), i % 39 + 2, i % 5 == 0))
        base = score_buffer(agent, buffer, 0.9).scores

        agent.q *= 3.0
        scaled_buffer = ReplayBuffer(20)
        for t in buffer:
            scaled_buffer.push(Transition(t.state, t.action, 3.0 * t.reward, t.next_state, t.done))
        np.testing.assert_allclose(score_buffer(agent, scaled_buffer, 0.9).scores, 3.0 * base)

    def test_empty_buffer(self):
        with pytest.raises(ValueError, match="empty buffer"):
            score_buffer(TabularQ(), ReplayBuffer(3), 0.99)


class TestDiagnostics:
    def test_td_reward_rows_cover_every_sampled_transition(self):
        scores = np.array([0.1, 2.0, 0.3])
        plan = EpochPlan(batches=[[0, 1], [1, 2]])
        rows = td_reward_rows(ScoreVector(scores, 4), [0.0, 1.0, -2.0], plan, episode=4)

        assert len(rows) == 4
        assert rows[1] == {'episode': 4, 'batch': 0, 'index': 1, 'td_error': 2.0, 'reward': 1.0}

    def test_surprise_profile_normalizes_by_batch_max(self):
        plan = EpochPlan(batches=[[0, 1, 2], [3]])
        rows = surprise_profile(ScoreVector(np.array([1.0, 4.0, 2.0, 0.0])), plan, episode=0)

        assert [r['normalized_td'] for r in rows] == [0.25, 1.0, 0.5, 0.0]
        assert [r['position'] for r in rows] == [0, 1, 2, 0]
