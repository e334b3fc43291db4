import numpy as np
import pytest

import harness
import run_manager
from harness import ToyRecord, make_learner, run_offline_toy, run_online
from metrics import topk_final
from run_manager import run_multi_seed, run_toy_seeds
from samplers import SamplerSpec
from schemas import ExperimentConfig, ToyConfig


def gridworld_config(**overrides) -> ExperimentConfig:
    fields = {
        "env": "gridworld",
        "sampler": {"strategy": "ier", "batch_size": 8, "grad_steps": 5},
        "episodes": 3,
        "seed": 11,
    }
    fields.update(overrides)
    return ExperimentConfig.model_validate(fields)


def toy_config(strategy: str, **overrides) -> ToyConfig:
    fields = {
        "sampler": {"strategy": strategy, "batch_size": 16, "grad_steps": 10},
        "buffer_size": 2000,
        "epochs": 5,
        "seed": 3,
    }
    fields.update(overrides)
    return ToyConfig.model_validate(fields)


class TestRunOnline:
    """Collect, score, plan and learn, once per episode."""

    def test_collection_only(self):
        record = run_online(gridworld_config(episodes=1, sampler={"strategy": "ier", "grad_steps": 0}))
        assert record.episodes_completed == 1
        assert record.learner_steps == 0
        assert not record.diverged

    def test_learner_steps_equal_n_times_g(self):
        record = run_online(gridworld_config())
        assert record.learner_steps == 3 * 5
        assert len(record.returns) == len(record.losses) == len(record.wall_ms) == 3

    def test_deterministic(self):
        first = run_online(gridworld_config(log_indices=True))
        second = run_online(gridworld_config(log_indices=True))
        assert first.returns == second.returns
        np.testing.assert_array_equal(first.losses, second.losses)
        assert first.sampled_indices == second.sampled_indices

    def test_wall_clock_off_by_default(self):
        assert set(run_online(gridworld_config()).wall_ms) == {0.0}
        assert all(ms > 0 for ms in run_online(gridworld_config(record_wall_clock=True)).wall_ms)

    @pytest.mark.parametrize("strategy", ["uer", "oer", "per", "rer"])
    def test_every_strategy_runs(self, strategy):
        record = run_online(gridworld_config(sampler={"strategy": strategy, "batch_size": 8, "grad_steps": 4}))
        assert record.learner_steps == (3 - record.warmup_episodes) * 4
        assert not record.diverged

    def test_rer_warms_up_on_short_buffers(self):
        config = ExperimentConfig.model_validate({
            "env": "cartpole",
            "sampler": {"strategy": "rer", "batch_size": 64, "grad_steps": 2},
            "episodes": 4,
        })
        record = run_online(config)
        assert record.warmup_episodes >= 1
        assert record.learner_steps == (4 - record.warmup_episodes) * 2
        assert all(np.isnan(loss) for loss in record.losses[:record.warmup_episodes])

    def test_cartpole_dqn_returns_in_range(self):
        config = ExperimentConfig.model_validate({
            "env": "cartpole",
            "sampler": {"strategy": "ier", "batch_size": 16, "grad_steps": 3},
            "episodes": 5,
        })
        record = run_online(config)
        assert all(1 <= r <= 200 for r in record.returns)
        assert record.learner_steps == 15

    def test_scores_precede_gradient_steps(self, monkeypatch):
        seen = []
        original = harness.score_buffer

        def spy(agent, buffer, gamma, episode=0):
            seen.append((episode, agent.train_steps))
            return original(agent, buffer, gamma, episode)

        monkeypatch.setattr(harness, "score_buffer", spy)
        run_online(gridworld_config())
        assert seen == [(episode, episode * 5) for episode in range(3)]

    def test_divergence_is_flagged(self):
        record = run_online(gridworld_config(agent={"lr": 1e9}))
        assert record.diverged
        assert record.divergence_reason.startswith("divergence")
        assert record.episodes_completed < 3

    def test_diagnostic_dump(self):
        record = run_online(gridworld_config(dump_td_every=2))
        dumped = {row['episode'] for row in record.td_rows}
        assert dumped == {0, 2}
        assert len(record.surprise_rows) == len(record.td_rows)

    def test_dqn_on_gridworld_uses_one_hot(self, rng):
        config = gridworld_config(agent={"kind": "dqn"})
        learner = make_learner(config, harness.make_env("gridworld"), rng)
        assert learner.online.input_size == 40

    def test_epsilon_floor_reached_inside_the_run(self, rng):
        config = ExperimentConfig.model_validate({"env": "cartpole", "sampler": {"strategy": "uer"}})
        learner = make_learner(config, harness.make_env("cartpole"), rng)
        assert learner.epsilon(0) == 1.0
        assert learner.epsilon(int(0.4 * config.episodes)) == pytest.approx(0.01)
        assert learner.epsilon(config.episodes - 1) == pytest.approx(0.01)

    def test_per_pushes_enter_at_max_priority(self):
        config = gridworld_config(sampler={"strategy": "per", "batch_size": 8, "grad_steps": 4})
        loop = harness.TrainingLoop(config, np.random.default_rng(config.seed))
        loop.collect_episode(0)
        loop.learn_epoch(0)
        known = len(loop.buffer)

        loop.collect_episode(1)
        fresh = [loop.tree.leaf(i) for i in range(known, len(loop.buffer))]
        assert fresh
        assert all(p == loop.tree.max_priority for p in fresh)
        assert loop.tree.is_consistent()

    def test_per_survives_eviction(self):
        config = gridworld_config(buffer_capacity=40, sampler={"strategy": "per", "batch_size": 8, "grad_steps": 4})
        record = run_online(config)
        assert record.learner_steps == 3 * 4
        assert not record.diverged


class TestRunMultiSeed:
    def test_records_in_seed_order(self):
        records = run_multi_seed(gridworld_config(episodes=1), [5, 3, 4])
        assert [r.seed for r in records] == [5, 3, 4]

    def test_duplicate_seeds_are_identical(self):
        first, second = run_multi_seed(gridworld_config(episodes=2), [7, 7])
        assert first.returns == second.returns

    def test_failure_is_isolated(self, monkeypatch):
        original = run_manager.run_online

        def flaky(config):
            if config.seed == 2:
                raise RuntimeError("boom")
            return original(config)

        monkeypatch.setattr(run_manager, "run_online", flaky)
        records = run_multi_seed(gridworld_config(episodes=1), [0, 1, 2, 3, 4])
        assert [r.diverged for r in records] == [False, False, True, False, False]
        assert "boom" in records[2].divergence_reason

    def test_process_pool_matches_in_process(self):
        config = gridworld_config(episodes=2)
        serial = run_multi_seed(config, [0, 1], workers=1)
        parallel = run_multi_seed(config, [0, 1], workers=2)
        assert [r.returns for r in serial] == [r.returns for r in parallel]

    def test_rejects_empty_seed_list(self):
        with pytest.raises(ValueError):
            run_multi_seed(gridworld_config(), [])


class TestRunOfflineToy:
    """Frozen random buffer, replayed for a number of epochs."""

    def test_frequency_counts_every_sampled_transition(self):
        record = run_offline_toy(toy_config("uer"))
        assert record.absolute_frequency.shape == (40,)
        assert record.total_sampled == 5 * 10 * 16

    def test_buffer_is_sampler_independent(self):
        uer = run_offline_toy(toy_config("uer"))
        ier = run_offline_toy(toy_config("ier"))
        per = run_offline_toy(toy_config("per"))
        np.testing.assert_array_equal(uer.buffer_histogram, ier.buffer_histogram)
        np.testing.assert_array_equal(uer.buffer_histogram, per.buffer_histogram)

    def test_rejects_cartpole(self):
        with pytest.raises(ValueError):
            run_offline_toy(toy_config("uer", env="cartpole"))

    def test_uer_tracks_buffer_histogram(self):
        record = run_offline_toy(toy_config("uer", buffer_size=5000, epochs=20, sampler={
            "strategy": "uer", "batch_size": 64, "grad_steps": 50,
        }))
        sampled = record.absolute_frequency / record.total_sampled
        stored = record.buffer_histogram / record.buffer_histogram.sum()
        assert 0.5 * np.abs(sampled - stored).sum() < 0.05

    def test_interior_gap_detection(self):
        frequency = np.zeros(40, dtype=np.int64)
        frequency[[5, 6, 7, 30, 38]] = [10, 4, 4, 9, 50]
        record = ToyRecord(seed=0, sampler="oer", absolute_frequency=frequency,
                           buffer_histogram=frequency, q_table=np.zeros((40, 2)),
                           reached_goal=False, rollout_steps=1000)
        assert record.has_interior_gap()
        assert record.zero_states_between(6, 10) == [9]

        frequency[:] = 1
        assert not record.has_interior_gap()

    def test_toy_seeds_in_order(self):
        records = run_toy_seeds(toy_config("uer", epochs=1), [4, 2])
        assert [r.seed for r in records] == [4, 2]

    def test_default_toy_budget(self):
        config = ToyConfig.model_validate({"sampler": {"strategy": "oer"}})
        assert (config.sampler.grad_steps, config.rescore_every) == (10, 5)
        # OER's top set must fit inside the trap transitions of a 30000-step buffer
        assert config.sampler.batch_size * config.sampler.grad_steps < 1000

        explicit = ToyConfig.model_validate({"sampler": {"strategy": "oer", "grad_steps": 7}})
        assert explicit.sampler.grad_steps == 7

    def test_scores_refresh_on_cadence(self, monkeypatch):
        seen = []
        original = harness.score_buffer

        def spy(agent, buffer, gamma, episode=0):
            seen.append(episode)
            return original(agent, buffer, gamma, episode)

        monkeypatch.setattr(harness, "score_buffer", spy)
        run_offline_toy(toy_config("oer", epochs=7, rescore_every=3))
        assert seen == [0, 3, 6]

    def test_uer_never_scores(self, monkeypatch):
        monkeypatch.setattr(harness, "score_buffer", None)
        assert run_offline_toy(toy_config("uer", epochs=2)).total_sampled == 2 * 10 * 16


@pytest.mark.slow
class TestFullScale:
    """Published toy and CartPole settings; minutes of runtime."""

    @staticmethod
    def toy(strategy: str) -> list:
        config = ToyConfig.model_validate({"sampler": {"strategy": strategy}})
        return run_toy_seeds(config, list(range(5)))

    def test_uer_matches_buffer_frequency(self):
        for record in self.toy("uer"):
            sampled = record.absolute_frequency / record.total_sampled
            stored = record.buffer_histogram / record.buffer_histogram.sum()
            assert 0.5 * np.abs(sampled - stored).sum() < 0.05

    def test_oer_bottleneck(self):
        assert sum(r.has_interior_gap() for r in self.toy("oer")) >= 4

    def test_ier_covers_path_and_reaches_goal(self):
        records = self.toy("ier")
        assert sum(not r.zero_states_between(3, 40) for r in records) >= 4
        assert sum(r.reached_goal for r in records) >= 4

    def test_cartpole_ier_beats_uer(self):
        finals = {}
        for strategy in ("ier", "uer"):
            config = ExperimentConfig(env="cartpole", sampler=SamplerSpec(strategy=strategy))
            records = run_multi_seed(config, list(range(5)))
            finals[strategy] = topk_final([r.final_moving_average(50) for r in records], 3)
        assert finals["ier"] >= 190
        assert finals["ier"] > finals["uer"]
