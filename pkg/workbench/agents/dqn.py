import logging

import numpy as np

from agents.base import check_divergence
from agents.mlp import AdamOptimizer, MlpQNet

logger = logging.getLogger(__name__)


class EpsilonSchedule:
    """Linear decay from max to min over the first decay_ratio of the run's episodes, then flat."""

    def __init__(self, max_epsilon: float = 1.0, min_epsilon: float = 0.01,
                 decay_ratio: float = 0.4, total_episodes: int = 1000):
        self.max_epsilon = max_epsilon
        self.min_epsilon = min_epsilon
        self.decay_episodes = decay_ratio * total_episodes

    def __call__(self, episode: int) -> float:
        if self.decay_episodes <= 0:
            return self.min_epsilon
        fraction = min(1.0, episode / self.decay_episodes)
        value = self.max_epsilon + fraction * (self.min_epsilon - self.max_epsilon)
        return float(min(self.max_epsilon, max(self.min_epsilon, value)))


class DqnLearner:
    """DQN over a small MLP with a periodically synced target network."""

    def __init__(self, input_size: int, num_actions: int, hidden_sizes=(8, 5), lr: float = 5e-5,
                 gamma: float = 0.9, target_update_every: int = 30, epsilon: EpsilonSchedule = None,
                 rng: np.random.Generator = None, encoder=None):
        self.online = MlpQNet([input_size, *hidden_sizes, num_actions], rng=rng)
        self.target = self.online.copy()
        self.optimizer = AdamOptimizer(self.online.parameters(), lr=lr)
        self.num_actions = num_actions
        self.gamma = gamma
        self.target_update_every = target_update_every
        self.epsilon = epsilon or EpsilonSchedule()
        self.encoder = encoder
        self.train_steps = 0

    def _encode(self, states) -> np.ndarray:
        if self.encoder is not None:
            return self.encoder(states)
        return np.asarray(states, dtype=np.float64).reshape(-1, self.online.input_size)

    def q_values(self, states) -> np.ndarray:
        return self.online.forward(self._encode(states))

    def target_q_values(self, states) -> np.ndarray:
        return self.target.forward(self._encode(states))

    def loss_and_gradients(self, batch):
        """Weighted mean squared TD loss and its gradient w.r.t. the online parameters."""
        q, cache = self.online.forward_cached(self._encode(batch.states))
        next_q = self.target.forward(self._encode(batch.next_states)).max(axis=1)
        targets = batch.rewards + np.where(batch.dones, 0.0, self.gamma * next_q)

        rows = np.arange(len(q))
        diff = q[rows, batch.actions] - targets
        n = len(diff)
        loss = float(np.mean(batch.weights * diff ** 2))

        grad_out = np.zeros_like(q)
        grad_out[rows, batch.actions] = 2.0 * batch.weights * diff / n
        return loss, self.online.backward(cache, grad_out), q

    def train_step(self, batch) -> float:
        loss, grads, q = self.loss_and_gradients(batch)
        check_divergence(loss, q)

        self.optimizer.step(self.online.parameters(), grads)
        self.train_steps += 1
        if self.train_steps % self.target_update_every == 0:
            self.sync_target()
        return loss

    def sync_target(self):
        self.target.load_from(self.online)
        logger.debug(f"Target network synced at train step {self.train_steps}")

    def greedy_action(self, state) -> int:
        return int(np.argmax(self.q_values([state])[0]))

    def act(self, state, rng: np.random.Generator, episode: int) -> int:
        if rng.random() < self.epsilon(episode):
            return int(rng.integers(self.num_actions))
        return self.greedy_action(state)
