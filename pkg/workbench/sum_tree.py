import logging

import numpy as np

logger = logging.getLogger(__name__)


class SumTree:
    """Binary sum tree over leaf priorities, stored heap-style with the root at node 1.

    Leaf i lives at node `capacity + i`; node k has children 2k and 2k+1. Parents
    are recomputed from their children (never adjusted by deltas) so every
    internal node is exactly the sum of its two children.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")

        self.capacity = 1 << (int(capacity) - 1).bit_length()
        self._nodes = np.zeros(2 * self.capacity, dtype=np.float64)
        self.max_priority = 1.0

    def total(self) -> float:
        return float(self._nodes[1])

    def leaf(self, index: int) -> float:
        return float(self._nodes[self.capacity + index])

    def leaves(self) -> np.ndarray:
        return self._nodes[self.capacity:].copy()

    def update(self, index: int, priority: float):
        """Set one leaf and refresh the sums along its path to the root."""
        if not 0 <= index < self.capacity:
            raise IndexError(f"leaf {index} out of range for tree of capacity {self.capacity}")
        if not np.isfinite(priority) or priority < 0:
            raise ValueError(f"priority must be finite and nonnegative, got {priority}")

        node = index + self.capacity
        self._nodes[node] = priority
        node //= 2
        while node >= 1:
            self._nodes[node] = self._nodes[2 * node] + self._nodes[2 * node + 1]
            node //= 2

        self.max_priority = max(self.max_priority, float(priority))

    def append_max(self, index: int):
        """Give a newly stored transition the largest priority seen so far."""
        self.update(index, self.max_priority)

    def rebuild(self, priorities):
        """Replace all leaves at once; leaves past len(priorities) are zeroed."""
        priorities = np.asarray(priorities, dtype=np.float64)
        if len(priorities) > self.capacity:
            raise ValueError(f"{len(priorities)} priorities exceed tree capacity {self.capacity}")
        if np.any(~np.isfinite(priorities)) or np.any(priorities < 0):
            raise ValueError("priorities must be finite and nonnegative")

        self._nodes[:] = 0.0
        self._nodes[self.capacity:self.capacity + len(priorities)] = priorities
        start = self.capacity // 2
        while start >= 1:
            self._nodes[start:2 * start] = (
                self._nodes[2 * start:4 * start:2] + self._nodes[2 * start + 1:4 * start:2]
            )
            start //= 2

        if len(priorities):
            self.max_priority = max(self.max_priority, float(priorities.max()))

    def find(self, masses) -> np.ndarray:
        """Leaf index i with prefix(i) <= mass < prefix(i+1), for each mass."""
        mass = np.array(masses, dtype=np.float64, ndmin=1)
        node = np.ones(len(mass), dtype=np.int64)
        while node[0] < self.capacity:
            left = 2 * node
            left_sum = self._nodes[left]
            go_right = mass >= left_sum
            mass = np.where(go_right, mass - left_sum, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.capacity

    def is_consistent(self) -> bool:
        internal = self._nodes[1:self.capacity]
        children = self._nodes[2:2 * self.capacity:2] + self._nodes[3:2 * self.capacity:2]
        return bool(np.all(internal == children))
