import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

COLUMNS = ("state", "action", "reward", "next_state", "done", "episode_id", "step_index")


def look_back_window(end: int, batch_size: int) -> range:
    """`end` and its batch_size-1 predecessors, truncated at index 0."""
    return range(max(0, end - batch_size + 1), end + 1)


def look_forward_window(start: int, batch_size: int, buf_len: int) -> range:
    """`start` and its batch_size-1 successors, truncated at the newest index."""
    return range(start, min(buf_len - 1, start + batch_size - 1) + 1)


@dataclass(frozen=True)
class Transition:
    """One environment step together with its episode provenance."""

    state: object
    action: int
    reward: float
    next_state: object
    done: bool
    episode_id: int = 0
    step_index: int = 0


class Batch:
    """Transitions handed to a learner for one gradient step.

    Holds the columns gathered from the buffer so learners can work on whole
    arrays; `transitions` rebuilds the per-step view on demand.
    """

    def __init__(self, indices, columns: dict, weights=None):
        self.indices = [int(i) for i in indices]
        if not self.indices:
            raise ValueError("Batch must hold at least one transition")

        self.states = columns["state"]
        self.actions = columns["action"]
        self.rewards = columns["reward"]
        self.next_states = columns["next_state"]
        self.dones = columns["done"]
        self.episode_ids = columns["episode_id"]
        self.step_indices = columns["step_index"]

        if weights is None:
            self.weights = np.ones(len(self.indices))
        else:
            self.weights = np.asarray(weights, dtype=np.float64)
        if len(self.weights) != len(self.indices):
            raise ValueError("weights and indices must have equal length")
        if np.any(self.weights <= 0) or np.any(self.weights > 1.0):
            raise ValueError("importance weights must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def transitions(self) -> list:
        return [
            Transition(
                state=self.states[i],
                action=int(self.actions[i]),
                reward=float(self.rewards[i]),
                next_state=self.next_states[i],
                done=bool(self.dones[i]),
                episode_id=int(self.episode_ids[i]),
                step_index=int(self.step_indices[i]),
            )
            for i in range(len(self.indices))
        ]


class ReplayBuffer:
    """Bounded FIFO store with logical indices 0..len-1, index 0 being the oldest.

    Storage is a columnar ring: a push on a full buffer overwrites the oldest
    slot and every logical index shifts down by one.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")

        self.capacity = int(capacity)
        self.insert_count = 0
        self._size = 0
        self._head = 0  # physical slot of logical index 0
        self._columns = None

    def __len__(self) -> int:
        return self._size

    def _allocate(self, t: Transition):
        state = np.asarray(t.state)
        self._columns = {
            "state": np.zeros((self.capacity,) + state.shape, dtype=state.dtype),
            "action": np.zeros(self.capacity, dtype=np.int64),
            "reward": np.zeros(self.capacity, dtype=np.float64),
            "next_state": np.zeros((self.capacity,) + state.shape, dtype=state.dtype),
            "done": np.zeros(self.capacity, dtype=bool),
            "episode_id": np.zeros(self.capacity, dtype=np.int64),
            "step_index": np.zeros(self.capacity, dtype=np.int64),
        }
        logger.debug(f"Allocated buffer columns for {self.capacity} transitions, state shape {state.shape}")

    def push(self, t: Transition) -> int:
        """Append a transition, evicting the oldest one when full. Returns its index."""
        if self._columns is None:
            self._allocate(t)

        if self._size < self.capacity:
            slot = (self._head + self._size) % self.capacity
            self._size += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self.capacity

        cols = self._columns
        cols["state"][slot] = t.state
        cols["action"][slot] = t.action
        cols["reward"][slot] = t.reward
        cols["next_state"][slot] = t.next_state
        cols["done"][slot] = t.done
        cols["episode_id"][slot] = t.episode_id
        cols["step_index"][slot] = t.step_index

        self.insert_count += 1
        return self._size - 1

    def extend(self, transitions) -> None:
        for t in transitions:
            self.push(t)

    def _physical(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self._size):
            raise IndexError(f"buffer index out of range for buffer of length {self._size}")
        return (self._head + idx) % self.capacity

    def __getitem__(self, index: int) -> Transition:
        slot = int(self._physical([index])[0])
        cols = self._columns
        return Transition(
            state=cols["state"][slot],
            action=int(cols["action"][slot]),
            reward=float(cols["reward"][slot]),
            next_state=cols["next_state"][slot],
            done=bool(cols["done"][slot]),
            episode_id=int(cols["episode_id"][slot]),
            step_index=int(cols["step_index"][slot]),
        )

    def __iter__(self):
        for i in range(self._size):
            yield self[i]

    def columns(self, indices=None) -> dict:
        """Columns gathered in logical order (whole buffer when indices is None)."""
        if self._size == 0:
            raise ValueError("empty buffer")
        if indices is None:
            indices = np.arange(self._size)
        slots = self._physical(indices)
        return {name: self._columns[name][slots] for name in COLUMNS}

    def batch(self, indices, weights=None) -> Batch:
        return Batch(indices, self.columns(indices), weights=weights)

    def block_ending_at(self, end: int, batch_size: int) -> Batch:
        """Pivot `end` plus its batch_size-1 temporal predecessors, truncated at index 0."""
        if not 0 <= end < self._size:
            raise IndexError(f"block end {end} out of range for buffer of length {self._size}")
        return self.batch(look_back_window(end, batch_size))

    def block_starting_at(self, start: int, batch_size: int) -> Batch:
        """Pivot `start` plus its batch_size-1 temporal successors, truncated at the newest index."""
        if not 0 <= start < self._size:
            raise IndexError(f"block start {start} out of range for buffer of length {self._size}")
        return self.batch(look_forward_window(start, batch_size, self._size))
