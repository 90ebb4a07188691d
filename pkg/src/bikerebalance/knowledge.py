"""Knowledge repository: pools agent Q-tables, serves the pooled table, persists it.

File format (text, one record per line)::

    DIRL-KNOWLEDGE v1
    actions=-3,-1,0,1,3
    gamma=0.9
    columns=hour,stock,action,q,count
    0,10,-1,-2.5,4
    ...

Rows are sorted by (hour, stock, action); ``q`` uses Python's shortest
round-tripping float repr, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from bikerebalance.exceptions import DistillError, KnowledgeFormatError, NotReadyError
from bikerebalance.qtable import QTable

MAGIC = "DIRL-KNOWLEDGE v1"
COLUMNS = "columns=hour,stock,action,q,count"


@dataclass(frozen=True, eq=False)
class KnowledgePacket:
    """One agent's uploaded table: read-only arrays, one row per state."""

    agent_id: int
    actions: tuple
    states: tuple
    values: np.ndarray
    counts: np.ndarray
    episode_stamp: int = 0

    @classmethod
    def from_table(cls, table: QTable, agent_id: int, episode_stamp: int = 0) -> "KnowledgePacket":
        states, values, counts = table.to_arrays()
        values.setflags(write=False)
        counts.setflags(write=False)
        return cls(agent_id, table.actions, tuple(states), values, counts, episode_stamp)

    def to_table(self) -> QTable:
        return QTable.from_arrays(self.actions, self.states, self.values, self.counts)

    def __len__(self) -> int:
        return len(self.states)


class Repository:
    """Latest packet per agent plus the most recent distilled table.

    Deposits and distillation are not thread-safe; the orchestrator calls
    them from one thread at episode boundaries.
    """

    def __init__(self, actions: Optional[Sequence[int]] = None, gamma: Optional[float] = None):
        self.actions = None if actions is None else tuple(sorted(actions))
        self.gamma = gamma
        self.packets: dict[int, KnowledgePacket] = {}
        self._distilled: Optional[QTable] = None
        self.distill_stamp: Optional[int] = None
        self.distill_count = 0

    def __len__(self) -> int:
        return len(self.packets)

    def deposit(self, packet: KnowledgePacket) -> "Repository":
        if self.actions is None:
            self.actions = tuple(packet.actions)
        elif tuple(packet.actions) != self.actions:
            raise DistillError(f"packet action set {packet.actions} != repository {self.actions}")
        self.packets[packet.agent_id] = packet
        return self

    def distill(self) -> QTable:
        """Count-weighted pooling of the held packets into one table.

        Packets are summed in agent-id order, so deposit order cannot change
        the result. A slot fed by a single packet copies its value verbatim.
        """
        if not self.packets:
            raise DistillError("nothing to distill: repository is empty")
        packets = [self.packets[k] for k in sorted(self.packets)]
        states = sorted(set().union(*(p.states for p in packets)))
        row = {s: i for i, s in enumerate(states)}
        shape = (len(states), len(self.actions))
        weighted = np.zeros(shape)
        total = np.zeros(shape, dtype=np.int64)
        sources = np.zeros(shape, dtype=np.int64)
        single = np.zeros(shape)
        for p in packets:
            if not len(p):
                continue
            rows = np.fromiter((row[s] for s in p.states), dtype=np.intp, count=len(p))
            held = p.counts > 0
            weighted[rows] += np.where(held, p.counts * p.values, 0.0)
            total[rows] += np.where(held, p.counts, 0)
            sources[rows] += held
            single[rows] = np.where(held, p.values, single[rows])
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(sources == 1, single, weighted / np.maximum(total, 1))
        q[total == 0] = 0.0
        keep = (total > 0).any(axis=1)
        master = QTable.from_arrays(
            self.actions, [s for s, k in zip(states, keep) if k], q[keep], total[keep]
        )
        self._distilled = master
        self.distill_stamp = max(p.episode_stamp for p in packets)
        self.distill_count += 1
        return master.copy()

    def fetch(self) -> QTable:
        if self._distilled is None:
            raise NotReadyError("fetch() before any distillation")
        return self._distilled.copy()

    @property
    def ready(self) -> bool:
        return self._distilled is not None

    def set_distilled(self, table: QTable, stamp: Optional[int] = None) -> None:
        if self.actions is not None and table.actions != self.actions:
            raise DistillError("action set mismatch")
        self.actions = table.actions
        self._distilled = table.copy()
        self.distill_stamp = stamp

    def save(self, destination) -> None:
        if self._distilled is None:
            raise NotReadyError("save() needs a distilled table")
        save_knowledge(self._distilled, destination, self.gamma)

    @classmethod
    def load(cls, source, actions: Optional[Sequence[int]] = None) -> "Repository":
        table, gamma = load_knowledge(source, actions, with_gamma=True)
        repo = cls(table.actions, gamma)
        repo.set_distilled(table)
        return repo


def format_knowledge(table: QTable, gamma: Optional[float] = None) -> str:
    out = io.StringIO()
    out.write(MAGIC + "\n")
    out.write("actions=" + ",".join(str(a) for a in table.actions) + "\n")
    out.write("gamma=" + ("" if gamma is None else repr(float(gamma))) + "\n")
    out.write(COLUMNS + "\n")
    for h, s, a, q, c in table.rows():
        out.write(f"{h},{s},{a},{float(q)!r},{c}\n")
    return out.getvalue()


def save_knowledge(table: QTable, destination, gamma: Optional[float] = None) -> None:
    """Write ``table`` to a path or a text file object."""
    text = format_knowledge(table, gamma)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(os.fspath(destination), "w", newline="\n") as fh:
            fh.write(text)


def parse_knowledge(text: str, actions: Optional[Sequence[int]] = None):
    """Parse knowledge-file text. Returns ``(table, gamma)``."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        raise KnowledgeFormatError("file must end with a newline", len(lines))
    if len(lines) < 4:
        raise KnowledgeFormatError("truncated header", len(lines) + 1)
    if lines[0] != MAGIC:
        if lines[0].startswith("DIRL-KNOWLEDGE"):
            raise KnowledgeFormatError(f"unknown version {lines[0]!r}", 1)
        raise KnowledgeFormatError("missing DIRL-KNOWLEDGE header", 1)
    if not lines[1].startswith("actions="):
        raise KnowledgeFormatError("expected actions=...", 2)
    try:
        file_actions = tuple(int(a) for a in lines[1][len("actions="):].split(","))
    except ValueError:
        raise KnowledgeFormatError("bad action list", 2) from None
    if list(file_actions) != sorted(set(file_actions)):
        raise KnowledgeFormatError("action list must be sorted and distinct", 2)
    if actions is not None and file_actions != tuple(sorted(actions)):
        raise KnowledgeFormatError(f"action set {file_actions} does not match session {tuple(sorted(actions))}", 2)
    if not lines[2].startswith("gamma="):
        raise KnowledgeFormatError("expected gamma=...", 3)
    g = lines[2][len("gamma="):]
    try:
        gamma = float(g) if g else None
    except ValueError:
        raise KnowledgeFormatError("bad gamma", 3) from None
    if lines[3] != COLUMNS:
        raise KnowledgeFormatError(f"expected {COLUMNS!r}", 4)

    table = QTable(file_actions)
    prev = None
    for lineno, line in enumerate(lines[4:], start=5):
        parts = line.split(",")
        if len(parts) != 5 or line != line.strip():
            raise KnowledgeFormatError("expected hour,stock,action,q,count", lineno)
        try:
            h, s, a, c = int(parts[0]), int(parts[1]), int(parts[2]), int(parts[4])
            q = float(parts[3])
        except ValueError:
            raise KnowledgeFormatError("non-numeric field", lineno) from None
        if not 0 <= h <= 23:
            raise KnowledgeFormatError(f"hour {h} out of range", lineno)
        if a not in table.index:
            raise KnowledgeFormatError(f"action {a} not in header action set", lineno)
        if c < 0 or not math.isfinite(q):
            raise KnowledgeFormatError("negative count or non-finite q", lineno)
        key = (h, s, a)
        if prev is not None and key <= prev:
            raise KnowledgeFormatError("rows not sorted by (hour, stock, action)", lineno)
        prev = key
        table.set((h, s), a, q, c)
    return table, gamma


def load_knowledge(source, actions: Optional[Sequence[int]] = None, with_gamma: bool = False):
    """Read a knowledge file from a path or a text file object."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(os.fspath(source), newline="") as fh:
            text = fh.read()
    table, gamma = parse_knowledge(text, actions)
    return (table, gamma) if with_gamma else table
