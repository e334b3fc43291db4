import logging
import math

import numpy as np

from replay_buffer import ReplayBuffer, Transition

logger = logging.getLogger(__name__)

# Classic cart-pole constants
GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
HALF_LENGTH = 0.5
POLEMASS_LENGTH = POLE_MASS * HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02
X_THRESHOLD = 2.4
THETA_THRESHOLD = 12 * 2 * math.pi / 360


class GridWorld1D:
    """Corridor of states 1..size; goal is terminal, trap penalizes and continues."""

    num_actions = 2  # 0 = left, 1 = right

    def __init__(self, size: int = 40, start: int = 6, goal: int = 40, trap: int = 3,
                 max_steps: int = 1000, goal_reward: float = 1.0, trap_reward: float = -2.0):
        self.size = size
        self.start = start
        self.goal = goal
        self.trap = trap
        self.max_steps = max_steps
        self.goal_reward = goal_reward
        self.trap_reward = trap_reward

        self.position = start
        self.steps = 0
        self.done = False

    @property
    def observation_size(self) -> int:
        return self.size

    def reset(self, rng=None) -> int:
        self.position = self.start
        self.steps = 0
        self.done = False
        return self.position

    def step(self, action: int):
        if self.done:
            raise RuntimeError("episode terminated")

        move = 1 if action == 1 else -1
        self.position = min(self.size, max(1, self.position + move))
        self.steps += 1

        reward = 0.0
        if self.position == self.goal:
            reward = self.goal_reward
        elif self.position == self.trap:
            reward = self.trap_reward

        self.done = self.position == self.goal or self.steps >= self.max_steps
        return self.position, reward, self.done

    def encode(self, states) -> np.ndarray:
        """One-hot rows for function approximation."""
        positions = np.asarray(states, dtype=np.int64).reshape(-1)
        encoded = np.zeros((len(positions), self.size))
        encoded[np.arange(len(positions)), positions - 1] = 1.0
        return encoded


def cartpole_dynamics(state, force: float) -> np.ndarray:
    """One Euler step of the cart-pole equations of motion."""
    x, x_dot, theta, theta_dot = state
    cos_theta = math.cos(theta)
    sin_theta = math.sin(theta)

    temp = (force + POLEMASS_LENGTH * theta_dot ** 2 * sin_theta) / TOTAL_MASS
    theta_acc = (GRAVITY * sin_theta - cos_theta * temp) / (
        HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_theta ** 2 / TOTAL_MASS)
    )
    x_acc = temp - POLEMASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS

    x = x + TAU * x_dot
    x_dot = x_dot + TAU * x_acc
    theta = theta + TAU * theta_dot
    theta_dot = theta_dot + TAU * theta_acc
    return np.array([x, x_dot, theta, theta_dot])


class CartPole:
    """Pole balancing, +1 per step, capped at 200 steps."""

    num_actions = 2  # 0 = push left, 1 = push right
    observation_size = 4

    def __init__(self, max_steps: int = 200):
        self.max_steps = max_steps
        self.state = None
        self.steps = 0
        self.done = False

    def reset(self, rng=None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng()
        self.state = rng.uniform(low=-0.05, high=0.05, size=4)
        self.steps = 0
        self.done = False
        return self.state.copy()

    def step(self, action: int):
        if self.done:
            raise RuntimeError("episode terminated")

        force = FORCE_MAG if action == 1 else -FORCE_MAG
        self.state = cartpole_dynamics(self.state, force)
        self.steps += 1

        x, _, theta, _ = self.state
        self.done = bool(
            abs(x) > X_THRESHOLD
            or abs(theta) > THETA_THRESHOLD
            or self.steps >= self.max_steps
        )
        return self.state.copy(), 1.0, self.done

    def encode(self, states) -> np.ndarray:
        return np.asarray(states, dtype=np.float64).reshape(-1, self.observation_size)


ENVIRONMENTS = {
    "gridworld": GridWorld1D,
    "cartpole": CartPole,
}


def make_env(env_id: str):
    if env_id not in ENVIRONMENTS:
        raise KeyError(f"Unknown environment: {env_id}")
    return ENVIRONMENTS[env_id]()


def collect_random_buffer(env, n: int, rng: np.random.Generator, capacity: int = None) -> ReplayBuffer:
    """Uniform-random-action episodes back to back until exactly n pushes."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")

    buffer = ReplayBuffer(capacity or n)
    pushed = 0
    episode = 0
    while pushed < n:
        state = env.reset(rng)
        step = 0
        done = False
        while not done and pushed < n:
            action = int(rng.integers(env.num_actions))
            next_state, reward, done = env.step(action)
            buffer.push(Transition(state, action, reward, next_state, done, episode, step))
            state = next_state
            step += 1
            pushed += 1
        episode += 1

    logger.info(f"Collected random buffer of {len(buffer)} transitions over {episode} episodes")
    return buffer


def state_histogram(buffer: ReplayBuffer, size: int = 40) -> np.ndarray:
    """Visit count per GridWorld state 1..size, as stored in the buffer."""
    states = buffer.columns()["state"].astype(np.int64)
    return np.bincount(states, minlength=size + 1)[1:size + 1]
