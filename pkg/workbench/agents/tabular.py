import logging

import numpy as np

from agents.base import check_divergence

logger = logging.getLogger(__name__)


class TabularQ:
    """Q-table over GridWorld states 1..n_states, bootstrapping off itself."""

    def __init__(self, n_states: int = 40, num_actions: int = 2, lr: float = 0.1,
                 gamma: float = 0.99, epsilon: float = 0.0):
        self.n_states = n_states
        self.num_actions = num_actions
        self.lr = lr
        self.gamma = gamma
        self.epsilon = epsilon
        self.q = np.zeros((n_states, num_actions))
        self.train_steps = 0

    def _rows(self, states) -> np.ndarray:
        return np.asarray(states, dtype=np.int64).reshape(-1) - 1

    def q_values(self, states) -> np.ndarray:
        return self.q[self._rows(states)]

    def target_q_values(self, states) -> np.ndarray:
        return self.q_values(states)

    def greedy_action(self, state) -> int:
        # argmax returns the lowest action index on ties
        return int(np.argmax(self.q[int(state) - 1]))

    def act(self, state, rng: np.random.Generator, episode: int = 0) -> int:
        if rng.random() < self.epsilon:
            return int(rng.integers(self.num_actions))
        return self.greedy_action(state)

    def train_step(self, batch) -> float:
        return tabular_update(self, batch)


def tabular_update(agent: TabularQ, batch) -> float:
    """Sequential Q-learning updates over the batch, most recent transition first.

    Importance weights scale the step size. Returns the mean squared TD error
    seen before each update.
    """
    order = np.argsort(-np.asarray(batch.indices), kind="stable")
    rows = agent._rows(batch.states)
    next_rows = agent._rows(batch.next_states)

    squared = 0.0
    for i in order:
        s, a = rows[i], int(batch.actions[i])
        target = float(batch.rewards[i])
        if not batch.dones[i]:
            target += agent.gamma * agent.q[next_rows[i]].max()
        td = target - agent.q[s, a]
        agent.q[s, a] += agent.lr * batch.weights[i] * td
        squared += td * td

    loss = squared / len(order)
    check_divergence(loss, agent.q)
    agent.train_steps += 1
    return loss
