from typing import Protocol

import numpy as np

from config import MAX_ABS_Q


class DivergenceError(RuntimeError):
    """Raised when a learner's loss or Q-values stop being usable."""


def check_divergence(loss: float = None, q_values=None):
    if loss is not None and not np.isfinite(loss):
        raise DivergenceError(f"divergence: non-finite loss {loss}")
    if q_values is not None:
        q = np.asarray(q_values)
        if not np.all(np.isfinite(q)):
            raise DivergenceError("divergence: non-finite Q-values")
        if q.size and np.abs(q).max() > MAX_ABS_Q:
            raise DivergenceError(f"divergence: |Q| exceeded {MAX_ABS_Q:g}")


class QLearner(Protocol):
    """What the harness and the importance scorer need from a learner."""

    num_actions: int
    gamma: float

    def q_values(self, states) -> np.ndarray: ...

    def target_q_values(self, states) -> np.ndarray: ...

    def train_step(self, batch) -> float: ...

    def act(self, state, rng: np.random.Generator, episode: int) -> int: ...
