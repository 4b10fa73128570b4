"""FIFO experience replay feeding both SGD minibatches and batch snapshots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBuffer


@dataclass(frozen=True)
class Transition:
    """One (s, a, r, s', terminal) tuple; the atom of replay and batch solves."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Ring buffer of Transitions with FIFO eviction.

    Single-writer: the trainer pushes; snapshot readers may run between
    writes. Snapshots are fresh lists, so later pushes never alter them.
    """

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._ring: list[Transition | None] = [None] * capacity
        self._count = 0  # total pushes ever

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    def push(self, t: Transition) -> None:
        self._ring[self._count % self.capacity] = t
        self._count += 1

    def _physical(self, logical: int) -> int:
        # logical 0 is the oldest retained transition.
        if self._count <= self.capacity:
            return logical
        return (self._count + logical) % self.capacity

    def sample_minibatch(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """n uniform draws with replacement; deterministic under a seeded rng."""
        size = len(self)
        if size == 0:
            raise EmptyBuffer("cannot sample from an empty buffer")
        idx = rng.integers(0, size, size=n)
        return [self._ring[self._physical(int(i))] for i in idx]  # type: ignore[misc]

    def snapshot(self, n_srl: int) -> list[Transition]:
        """The most recent min(n_srl, size) transitions in insertion order."""
        size = len(self)
        if size == 0 or n_srl <= 0:
            raise EmptyBuffer(f"snapshot of {n_srl} from buffer of size {size}")
        take = min(n_srl, size)
        return [self._ring[self._physical(i)] for i in range(size - take, size)]  # type: ignore[misc]

    def _ordered(self) -> list[Transition]:
        return [self._ring[self._physical(i)] for i in range(len(self))]  # type: ignore[misc]

    def dump_csv(self, path: str, header_lines: tuple[str, ...] = ()) -> None:
        """Write the buffer contents for offline inspection.

        Columns: s_0..s_{d-1}, action, reward, ns_0..ns_{d-1}, terminal.
        """
        rows = self._ordered()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            if not rows:
                return
            dim = rows[0].state.shape[0]
            cols = (
                [f"s_{i}" for i in range(dim)]
                + ["action", "reward"]
                + [f"ns_{i}" for i in range(dim)]
                + ["terminal"]
            )
            fh.write(",".join(cols) + "\n")
            for t in rows:
                fields = (
                    [repr(float(x)) for x in t.state]
                    + [str(int(t.action)), repr(float(t.reward))]
                    + [repr(float(x)) for x in t.next_state]
                    + [str(int(t.terminal))]
                )
                fh.write(",".join(fields) + "\n")


def stack_batch(
    batch: list[Transition],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Columns (states, actions, rewards, next_states, terminal_mask) of a batch."""
    if not batch:
        raise EmptyBuffer("cannot stack an empty batch")
    states = np.stack([t.state for t in batch]).astype(np.float64)
    actions = np.array([t.action for t in batch], dtype=np.int64)
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    next_states = np.stack([t.next_state for t in batch]).astype(np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    return states, actions, rewards, next_states, terminal
