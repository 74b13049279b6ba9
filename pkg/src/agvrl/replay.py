"""Bounded FIFO experience store with uniform minibatch sampling."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    rw: float
    s_next: np.ndarray
    done: bool


class Batch(NamedTuple):
    s: np.ndarray  # (M, obs_dim)
    a: np.ndarray  # (M, act_dim)
    rw: np.ndarray  # (M,)
    s_next: np.ndarray
    done: np.ndarray  # (M,) float, 1.0 where the bootstrap is cut


class ReplayBuffer:
    """Ring buffer; storage grows geometrically up to ``capacity`` so large capacities stay cheap."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, initial: int = 4096):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        n = min(self.capacity, initial)
        self._s = np.zeros((n, obs_dim))
        self._a = np.zeros((n, act_dim))
        self._r = np.zeros(n)
        self._s2 = np.zeros((n, obs_dim))
        self._d = np.zeros(n)
        self._next = 0  # slot for the next write
        self.size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self.size

    def _grow(self):
        n = min(self.capacity, 2 * len(self._r))
        for name in ("_s", "_a", "_r", "_s2", "_d"):
            old = getattr(self, name)
            new = np.zeros((n,) + old.shape[1:])
            new[: len(old)] = old
            setattr(self, name, new)

    def push(self, t: Transition) -> None:
        if not np.isfinite(t.rw):
            raise ValueError("reward must be finite")
        if self._next == len(self._r) and len(self._r) < self.capacity:
            self._grow()
        i = self._next
        self._s[i] = t.s
        self._a[i] = t.a
        self._r[i] = t.rw
        self._s2[i] = t.s_next
        self._d[i] = float(t.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def _slot(self, k: int) -> int:
        """Storage slot of the k-th oldest stored transition."""
        start = self._next - self.size if self.size < self.capacity else self._next
        return (start + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        if not -self.size <= k < self.size:
            raise IndexError(k)
        i = self._slot(k % self.size)
        return Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]),
                          self._s2[i].copy(), bool(self._d[i]))

    def sample_indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < m:
            raise ValueError(f"buffer holds {self.size} transitions, cannot sample {m}")
        return rng.integers(0, self.size, size=m)

    def gather(self, idx) -> Batch:
        # every slot below size is live, so raw slot indices sample uniformly
        idx = np.asarray(idx)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])

    def sample(self, m: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(m, rng))

    def state_dict(self) -> dict:
        n = self.size  # live slots are always 0..size-1
        return {"capacity": self.capacity, "pushed": self.pushed, "next": self._next,
                "s": self._s[:n], "a": self._a[:n], "rw": self._r[:n],
                "s_next": self._s2[:n], "done": self._d[:n]}

    @classmethod
    def from_state_dict(cls, d: dict) -> "ReplayBuffer":
        s = np.asarray(d["s"], dtype=np.float64)
        a = np.asarray(d["a"], dtype=np.float64)
        n = len(s)
        buf = cls(int(d["capacity"]), s.shape[1], a.shape[1], initial=max(n, 1))
        buf._s[:n] = s
        buf._a[:n] = a
        buf._r[:n] = d["rw"]
        buf._s2[:n] = d["s_next"]
        buf._d[:n] = d["done"]
        buf.size = n
        buf._next = int(d["next"])
        buf.pushed = int(d["pushed"])
        return buf


def replay_push(buffer: ReplayBuffer, t: Transition) -> None:
    buffer.push(t)


def replay_sample(buffer: ReplayBuffer, m: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(m, rng)
