import logging
import time
from dataclasses import dataclass, field

import numpy as np

from agents.base import DivergenceError
from agents.dqn import DqnLearner, EpsilonSchedule
from agents.tabular import TabularQ
from envs import GridWorld1D, collect_random_buffer, make_env, state_histogram
from importance import score_buffer, surprise_profile, td_errors, td_reward_rows
from metrics import moving_average
from replay_buffer import ReplayBuffer, Transition
from samplers import RerCursor, per_priority, per_update, plan_epoch
from schemas import ExperimentConfig, ToyConfig
from sum_tree import SumTree

logger = logging.getLogger(__name__)


@dataclass
class RunRecord:
    """Per-episode outcome of one online run."""

    seed: int
    sampler: str
    env: str
    returns: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    sampled_indices: list = field(default_factory=list)
    td_rows: list = field(default_factory=list)
    surprise_rows: list = field(default_factory=list)
    learner_steps: int = 0
    warmup_episodes: int = 0
    q_network: object = None
    diverged: bool = False
    divergence_reason: str = None

    @property
    def episodes_completed(self) -> int:
        return len(self.returns)

    def moving_average(self, window: int) -> list:
        return moving_average(self.returns, window) if self.returns else []

    def final_moving_average(self, window: int) -> float:
        return self.moving_average(window)[-1]


@dataclass
class ToyRecord:
    """Offline GridWorld outcome: how often each state was replayed, and where the greedy policy ends up."""

    seed: int
    sampler: str
    absolute_frequency: np.ndarray
    buffer_histogram: np.ndarray
    q_table: np.ndarray
    reached_goal: bool
    rollout_steps: int
    start: int = 6

    @property
    def total_sampled(self) -> int:
        return int(self.absolute_frequency.sum())

    def zero_states_between(self, low: int, high: int) -> list:
        """States strictly between low and high that were never sampled."""
        return [s for s in range(low + 1, high) if self.absolute_frequency[s - 1] == 0]

    def has_interior_gap(self) -> bool:
        """True when some state between the start and the most-sampled goal-side state was never sampled."""
        goal_side = self.absolute_frequency[self.start:]
        if goal_side.sum() == 0:
            return False
        peak = self.start + 1 + int(np.argmax(goal_side))
        return bool(self.zero_states_between(self.start, peak))


def make_learner(config: ExperimentConfig, env, rng: np.random.Generator):
    """Tabular Q-table or DQN, as chosen by config.agent.kind."""
    agent = config.agent
    if agent.kind == "tabular":
        return TabularQ(
            n_states=env.size,
            num_actions=env.num_actions,
            lr=agent.lr,
            gamma=config.gamma,
            epsilon=agent.max_epsilon,
        )

    schedule = EpsilonSchedule(
        max_epsilon=agent.max_epsilon,
        min_epsilon=agent.min_epsilon,
        decay_ratio=agent.decay_ratio,
        total_episodes=config.episodes,
    )
    return DqnLearner(
        input_size=env.observation_size,
        num_actions=env.num_actions,
        hidden_sizes=agent.hidden_sizes,
        lr=agent.lr,
        gamma=config.gamma,
        target_update_every=agent.target_update_every,
        epsilon=schedule,
        rng=rng,
        encoder=env.encode if isinstance(env, GridWorld1D) else None,
    )


def refresh_priorities(tree: SumTree, agent, batch, gamma: float, spec):
    """Write post-step TD errors of the sampled transitions back into the tree."""
    td = td_errors(agent, batch.states, batch.actions, batch.rewards, batch.next_states, batch.dones, gamma)
    for index, value in zip(batch.indices, td):
        per_update(tree, index, value, spec)


class TrainingLoop:
    """One online run: collect an episode, score the buffer, plan the epoch, take G steps."""

    def __init__(self, config: ExperimentConfig, rng: np.random.Generator):
        self.config = config
        self.spec = config.sampler
        env_rng, policy_rng, sampler_rng, init_rng = rng.spawn(4)
        self.env_rng = env_rng
        self.policy_rng = policy_rng
        self.sampler_rng = sampler_rng

        self.env = make_env(config.env)
        self.agent = make_learner(config, self.env, init_rng)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.cursor = RerCursor()
        self.tree = SumTree(config.buffer_capacity) if self.spec.strategy == "per" else None

        self.record = RunRecord(seed=config.seed, sampler=self.spec.label, env=config.env)

    def collect_episode(self, episode: int) -> float:
        """Roll out the current epsilon-greedy policy and push every transition."""
        state = self.env.reset(self.env_rng)
        total = 0.0
        step = 0
        done = False
        while not done:
            action = self.agent.act(state, self.policy_rng, episode)
            next_state, reward, done = self.env.step(action)
            index = self.buffer.push(Transition(state, action, reward, next_state, done, episode, step))
            if self.tree is not None:
                self.tree.append_max(index)
            total += reward
            state = next_state
            step += 1
        return total

    def _dump_due(self, episode: int) -> bool:
        every = self.config.dump_td_every
        return every > 0 and episode % every == 0

    def learn_epoch(self, episode: int) -> float:
        """Plan and execute one epoch of gradient steps; returns the mean loss (nan when none ran)."""
        spec = self.spec
        buf_len = len(self.buffer)

        if spec.strategy == "rer" and buf_len < spec.batch_size:
            self.record.warmup_episodes += 1
            logger.debug(f"Episode {episode}: buffer holds {buf_len} < {spec.batch_size}, collection only")
            return float("nan")

        dump = self._dump_due(episode)
        scores = None
        if spec.needs_scores or dump:
            # one snapshot per epoch, taken before the first gradient step
            scores = score_buffer(self.agent, self.buffer, self.config.gamma, episode)
        if self.tree is not None and self.buffer.insert_count > len(self.buffer):
            # evictions shift every logical index, so the leaves follow the snapshot
            self.tree.rebuild(per_priority(scores.scores, spec))

        plan = plan_epoch(
            spec, buf_len, self.sampler_rng,
            scores=None if scores is None else scores.scores,
            cursor=self.cursor,
            tree=self.tree,
        )

        if dump and len(plan):
            rewards = self.buffer.columns()["reward"]
            self.record.td_rows.extend(td_reward_rows(scores, rewards, plan, episode))
            self.record.surprise_rows.extend(surprise_profile(scores, plan, episode))

        losses = []
        for g, indices in enumerate(plan.batches):
            batch = self.buffer.batch(indices, plan.batch_weights(g))
            losses.append(self.agent.train_step(batch))
            self.record.learner_steps += 1
            if self.tree is not None:
                refresh_priorities(self.tree, self.agent, batch, self.config.gamma, spec)
            if self.config.log_indices:
                self.record.sampled_indices.extend(
                    {'episode': episode, 'batch': g, 'index': index} for index in indices
                )

        return float(np.mean(losses)) if losses else float("nan")

    def run(self) -> RunRecord:
        config = self.config
        record = self.record
        logger.info(
            f"Starting run: env={config.env}, sampler={self.spec.label}, seed={config.seed}, "
            f"episodes={config.episodes}, G={self.spec.grad_steps}, B={self.spec.batch_size}"
        )

        for episode in range(config.episodes):
            started = time.perf_counter()
            episode_return = self.collect_episode(episode)
            try:
                loss = self.learn_epoch(episode)
            except DivergenceError as e:
                record.diverged = True
                record.divergence_reason = str(e)
                logger.warning(f"Seed {config.seed}: {e} at episode {episode}, stopping run")
                break

            record.returns.append(episode_return)
            record.losses.append(loss)
            elapsed = (time.perf_counter() - started) * 1000.0
            record.wall_ms.append(elapsed if config.record_wall_clock else 0.0)

            if (episode + 1) % config.log_every == 0:
                recent = record.moving_average(config.eval_window)[-1]
                logger.info(f"Seed {config.seed}: episode {episode + 1}/{config.episodes}, moving avg {recent:.2f}")

        if not record.diverged:
            expected = (record.episodes_completed - record.warmup_episodes) * self.spec.grad_steps
            if record.learner_steps != expected:
                raise RuntimeError(f"Learner took {record.learner_steps} steps, expected {expected}")

        if config.export_params:
            if isinstance(self.agent, DqnLearner):
                record.q_network = self.agent.online.copy()
            else:
                logger.warning(f"Seed {config.seed}: export_params needs a DQN learner, nothing to export")

        logger.info(
            f"Finished run: seed={config.seed}, episodes={record.episodes_completed}, "
            f"learner steps={record.learner_steps}, diverged={record.diverged}"
        )
        return record


def run_online(config: ExperimentConfig, rng: np.random.Generator = None) -> RunRecord:
    """
    Run N episodes of collect + score + plan + G learner steps.

    Args:
        config: Validated experiment configuration
        rng: Root generator; defaults to one seeded from config.seed

    Returns:
        RunRecord with one entry per completed episode
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return TrainingLoop(config, rng).run()


def greedy_rollout(agent, env: GridWorld1D, rng: np.random.Generator) -> tuple:
    """Follow the agent's policy from the start state; returns (reached_goal, steps)."""
    state = env.reset(rng)
    done = False
    steps = 0
    while not done:
        state, _, done = env.step(agent.act(state, rng))
        steps += 1
    return state == env.goal, steps


def run_offline_toy(config: ToyConfig, rng: np.random.Generator = None) -> ToyRecord:
    """
    Replay a fixed random-policy GridWorld buffer for a number of epochs.

    The buffer is filled from its own rng stream, so every sampler sees the
    same data for a given seed. TD scores are taken before the first step of
    every rescore_every-th epoch and reused by the epochs in between.

    Args:
        config: Validated toy configuration
        rng: Root generator; defaults to one seeded from config.seed

    Returns:
        ToyRecord with sampled-state frequencies and the greedy rollout outcome
    """
    if config.env != "gridworld":
        raise ValueError(f"offline toy protocol runs on gridworld only, got {config.env}")

    rng = rng if rng is not None else np.random.default_rng(config.seed)
    buffer_rng, sampler_rng, eval_rng = rng.spawn(3)
    spec = config.sampler

    env = GridWorld1D()
    buffer = collect_random_buffer(env, config.buffer_size, buffer_rng)
    states = buffer.columns()["state"].astype(np.int64)
    agent = TabularQ(n_states=env.size, num_actions=env.num_actions, lr=config.lr,
                     gamma=config.gamma, epsilon=config.eval_epsilon)

    tree = SumTree(len(buffer)) if spec.strategy == "per" else None
    cursor = RerCursor()
    frequency = np.zeros(env.size, dtype=np.int64)

    logger.info(
        f"Toy run: sampler={spec.label}, seed={config.seed}, epochs={config.epochs}, "
        f"G={spec.grad_steps}, rescore every {config.rescore_every}"
    )
    scores = None
    for epoch in range(config.epochs):
        if spec.needs_scores and epoch % config.rescore_every == 0:
            scores = score_buffer(agent, buffer, config.gamma, epoch)
            if tree is not None:
                tree.rebuild(per_priority(scores.scores, spec))

        plan = plan_epoch(spec, len(buffer), sampler_rng,
                          scores=None if scores is None else scores.scores,
                          cursor=cursor, tree=tree)
        for g, indices in enumerate(plan.batches):
            batch = buffer.batch(indices, plan.batch_weights(g))
            agent.train_step(batch)
            np.add.at(frequency, states[indices] - 1, 1)
            if tree is not None:
                refresh_priorities(tree, agent, batch, config.gamma, spec)

    reached, steps = greedy_rollout(agent, env, eval_rng)
    logger.info(f"Toy run seed={config.seed}: sampled {int(frequency.sum())} transitions, reached goal={reached}")

    return ToyRecord(
        seed=config.seed,
        sampler=spec.label,
        absolute_frequency=frequency,
        buffer_histogram=state_histogram(buffer, env.size),
        q_table=agent.q.copy(),
        reached_goal=bool(reached),
        rollout_steps=steps,
        start=env.start,
    )
