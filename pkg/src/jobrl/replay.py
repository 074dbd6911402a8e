"""Prioritized experience replay with importance-sampling weights."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import Assignment, JobAllocationGraph


class EmptyBuffer(RuntimeError):
    pass


@dataclass(frozen=True)
class TransitionSample:
    s: JobAllocationGraph
    a: Assignment
    r: float
    s_next: JobAllocationGraph
    done: bool
    priority: float = 1.0


class ReplayBuffer:
    """Capacity-bounded ring of transitions sampled with probability
    ``p_i**alpha / sum_j p_j**alpha`` where ``p_i = |delta_i| + eps``.

    New transitions enter with the largest priority currently stored (1 when
    empty) so each is replayed at least once with high probability.
    """

    def __init__(self, capacity=10**6, alpha=0.6, beta=0.4, eps=1e-6):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.eps = float(eps)
        self._items = []
        self._priority = np.zeros(min(self.capacity, 1024))
        self._next = 0

    def __len__(self):
        return len(self._items)

    @property
    def priorities(self):
        return self._priority[: len(self)]

    def insert(self, t: TransitionSample):
        n = len(self)
        prio = float(self.priorities.max()) if n else 1.0
        if n < self.capacity:
            if n == len(self._priority):
                grown = np.zeros(min(self.capacity, 2 * n))
                grown[:n] = self._priority
                self._priority = grown
            self._items.append(t)
            idx = n
        else:
            idx = self._next
            self._items[idx] = t
        self._priority[idx] = prio
        self._next = (idx + 1) % self.capacity
        return idx

    def __getitem__(self, i):
        return replace(self._items[i], priority=float(self._priority[i]))

    def transition(self, i):
        return self._items[i]

    def probabilities(self):
        if not len(self):
            raise EmptyBuffer("replay buffer is empty")
        scaled = self.priorities ** self.alpha
        return scaled / scaled.sum()

    def weights(self, indices, probs=None):
        """``(N * P(i))**-beta`` divided by its maximum over the whole buffer."""
        probs = self.probabilities() if probs is None else probs
        # the largest weight belongs to the least likely entry
        return (probs[indices] / probs.min()) ** (-self.beta)

    def sample(self, batch_size, rng):
        probs = self.probabilities()
        idx = rng.choice(len(self), size=batch_size, p=probs)
        return idx, self.weights(idx, probs)

    def update_priority(self, indices, deltas):
        indices = np.atleast_1d(np.asarray(indices))
        deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
        self._priority[indices] = np.abs(deltas) + self.eps


def buffer_insert(buf: ReplayBuffer, t: TransitionSample):
    return buf.insert(t)


def buffer_sample(buf: ReplayBuffer, b, rng):
    return buf.sample(b, rng)


def buffer_update_priority(buf: ReplayBuffer, i, delta):
    buf.update_priority(i, delta)
