"""Sparse Q-table keyed by (hour, stock)."""

from __future__ import annotations

from itertools import chain
from typing import Iterable, Iterator

import numpy as np

from bikerebalance.exceptions import ConfigurationError


class QTable:
    """Maps ``(hour, stock)`` to one q-value and one visit count per action.

    Unseen states read as all-zero values with zero counts. A state, once
    stored, always has a slot for every action; values live in lists indexed
    like ``actions`` (sorted ascending).
    """

    def __init__(self, actions: Iterable[int]):
        acts = tuple(sorted(int(a) for a in actions))
        if not acts:
            raise ConfigurationError("action set is empty")
        if len(set(acts)) != len(acts):
            raise ConfigurationError(f"duplicate actions in {acts}")
        self.actions = acts
        self.index = {a: i for i, a in enumerate(acts)}
        # greedy tie-break order: smallest |a| first, negative before positive
        self.preference = tuple(sorted(range(len(acts)), key=lambda i: (abs(acts[i]), acts[i])))
        self._zeros = (0.0,) * len(acts)
        self._entries: dict[tuple[int, int], tuple[list[float], list[int]]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, state) -> bool:
        return state in self._entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, QTable):
            return NotImplemented
        return self.actions == other.actions and self._entries == other._entries

    def __repr__(self) -> str:
        return f"QTable(actions={self.actions}, states={len(self)})"

    def values(self, state) -> tuple:
        """Q-values at ``state`` in action order (zeros if unseen)."""
        slot = self._entries.get(state)
        return self._zeros if slot is None else tuple(slot[0])

    def counts(self, state) -> tuple:
        slot = self._entries.get(state)
        return (0,) * len(self.actions) if slot is None else tuple(slot[1])

    def q(self, state, action: int) -> float:
        slot = self._entries.get(state)
        return 0.0 if slot is None else slot[0][self.index[action]]

    def count(self, state, action: int) -> int:
        slot = self._entries.get(state)
        return 0 if slot is None else slot[1][self.index[action]]

    def max_value(self, state) -> float:
        slot = self._entries.get(state)
        return 0.0 if slot is None else max(slot[0])

    def greedy_index(self, state) -> int:
        slot = self._entries.get(state)
        pref = self.preference
        if slot is None:
            return pref[0]
        q = slot[0]
        best = pref[0]
        for i in pref:
            if q[i] > q[best]:
                best = i
        return best

    def slot(self, state) -> tuple[list[float], list[int]]:
        """Mutable (values, counts) lists for ``state``, created on demand."""
        slot = self._entries.get(state)
        if slot is None:
            n = len(self.actions)
            slot = ([0.0] * n, [0] * n)
            self._entries[state] = slot
        return slot

    def set(self, state, action: int, q: float, count: int) -> None:
        values, counts = self.slot((int(state[0]), int(state[1])))
        i = self.index[action]
        values[i] = float(q)
        counts[i] = int(count)

    def states(self) -> list[tuple[int, int]]:
        return sorted(self._entries)

    def rows(self) -> Iterator[tuple[int, int, int, float, int]]:
        """(hour, stock, action, q, count) for every populated slot, sorted."""
        for state in sorted(self._entries):
            values, counts = self._entries[state]
            for a, q, c in zip(self.actions, values, counts):
                if c or q:
                    yield state[0], state[1], a, q, c

    def n_entries(self) -> int:
        return sum(1 for _ in self.rows())

    def copy(self) -> "QTable":
        new = QTable(self.actions)
        new._entries = {s: (list(v), list(c)) for s, (v, c) in self._entries.items()}
        return new

    def items(self):
        """Live ``(state, (values, counts))`` pairs; callers must not mutate them."""
        return self._entries.items()

    def to_arrays(self) -> tuple[list, np.ndarray, np.ndarray]:
        """(states, values[S, A], counts[S, A]) with states in insertion order."""
        states = list(self._entries)
        n = len(self.actions)
        slots = self._entries.values()
        size = len(states) * n
        values = np.fromiter(chain.from_iterable(v for v, _ in slots), dtype=float, count=size)
        counts = np.fromiter(chain.from_iterable(c for _, c in slots), dtype=np.int64, count=size)
        return states, values.reshape(-1, n), counts.reshape(-1, n)

    @classmethod
    def from_arrays(cls, actions: Iterable[int], states, values, counts) -> "QTable":
        table = cls(actions)
        table._entries = {s: (v, c) for s, v, c in zip(states, np.asarray(values).tolist(), np.asarray(counts).tolist())}
        return table
