import os
import tempfile

# config.py creates RESULTS_DIR on import; keep test sessions out of the repo
os.environ.setdefault("RESULTS_DIR", tempfile.mkdtemp(prefix="workbench-results-"))

import numpy as np
import pytest

from envs import GridWorld1D, collect_random_buffer
from replay_buffer import ReplayBuffer, Transition
from samplers import SamplerSpec


def make_transition(i: int, done: bool = False) -> Transition:
    return Transition(state=i, action=i % 2, reward=float(i), next_state=i + 1, done=done,
                      episode_id=0, step_index=i)


@pytest.fixture
def filled_buffer():
    """Ten GridWorld-shaped transitions with states 1..10."""
    buffer = ReplayBuffer(capacity=10)
    for i in range(1, 11):
        buffer.push(make_transition(i))
    return buffer


@pytest.fixture
def random_gridworld_buffer():
    return collect_random_buffer(GridWorld1D(), 2000, np.random.default_rng(7))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ier_spec():
    return SamplerSpec(strategy="ier", batch_size=4, grad_steps=3)
