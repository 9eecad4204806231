from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions with uniform batch sampling."""

    def __init__(self, capacity: int = 10000, obs_dim: int = 8, act_dim: int = 1, rng=None):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.rng = rng if rng is not None else np.random.default_rng()
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, s, a, r, s_next, done):
        i = self._next
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        k = min(batch_size, self._size)
        return self.rng.choice(self._size, size=k, replace=False)

    def sample(self, batch_size: int):
        idx = self.sample_indices(batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]

    def __getitem__(self, i) -> Transition:
        if not 0 <= i < self._size:
            raise IndexError(i)
        # oldest record first
        j = (self._next - self._size + i) % self.capacity
        return Transition(self.s[j].copy(), self.a[j].copy(), float(self.r[j]),
                          self.s_next[j].copy(), bool(self.done[j]))
