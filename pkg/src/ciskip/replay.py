"""Proportional prioritized experience replay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import Action


class ReplayError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: Action
    reward: float
    next_state: np.ndarray
    terminal: bool


class PrioritizedBuffer:
    """Ring buffer sampling index ``i`` with probability ``p_i**alpha / sum p**alpha``.

    New items enter at the current maximum priority so each is replayed at
    least once with high probability. O(n) sampling; fine up to ~1e5 items.
    """

    def __init__(self, capacity: int = 10_000, alpha: float = 0.6, priority_floor: float = 0.01):
        if capacity < 1:
            raise ReplayError("capacity must be positive")
        if priority_floor <= 0:
            raise ReplayError("priority floor must be > 0")
        self.capacity = capacity
        self.alpha = alpha
        self.priority_floor = priority_floor
        self.items: list[Transition | None] = [None] * capacity
        self.priorities = np.zeros(capacity)
        self.next_idx = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    @property
    def max_priority(self) -> float:
        return float(self.priorities[:self.size].max()) if self.size else 1.0

    def push(self, tr: Transition):
        priority = self.max_priority
        self.items[self.next_idx] = tr
        self.priorities[self.next_idx] = priority
        self.next_idx = (self.next_idx + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def probabilities(self) -> np.ndarray:
        scaled = self.priorities[:self.size] ** self.alpha
        return scaled / scaled.sum()

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float = 0.4):
        if self.size < batch_size or batch_size < 1:
            raise ReplayError(f"cannot sample {batch_size} from {self.size} stored transitions")
        probs = self.probabilities()
        idx = rng.choice(self.size, size=batch_size, replace=True, p=probs)
        weights = (self.size * probs[idx]) ** (-beta)
        weights /= weights.max()
        return [self.items[i] for i in idx], idx, weights

    def update_priorities(self, indices, td_errors):
        indices = np.asarray(indices, dtype=np.int64)
        if np.any(indices < 0) or np.any(indices >= self.size):
            raise ReplayError("priority update for an index that is not stored")
        new = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.priority_floor
        self.priorities[indices] = new
