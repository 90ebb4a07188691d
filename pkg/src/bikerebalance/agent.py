"""Per-station Q-learning agent: epsilon-greedy acting, one-step updates, transfer hooks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from bikerebalance.env import LAST_HOUR
from bikerebalance.exceptions import ConfigurationError, InvalidExperienceError, TransferError
from bikerebalance.knowledge import KnowledgePacket
from bikerebalance.qtable import QTable

ALPHA_SCHEDULES = ("constant", "inverse_count")


DEFAULT_ACTIONS = (-30, -20, -10, -3, -1, 0, 1, 3, 10, 20, 30)


@dataclass(frozen=True)
class AgentConfig:
    action_set: tuple = DEFAULT_ACTIONS
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_decay_fraction: float = 0.5
    alpha_schedule: str = "constant"

    def __post_init__(self):
        acts = tuple(sorted(int(a) for a in self.action_set))
        object.__setattr__(self, "action_set", acts)
        if not acts:
            raise ConfigurationError("action set is empty")
        if len(set(acts)) != len(acts):
            raise ConfigurationError(f"duplicate actions in {acts}")
        if 0 not in acts:
            raise ConfigurationError("action set must contain 0")
        if not 0 < self.learning_rate <= 1:
            raise ConfigurationError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 <= self.discount <= 1:
            raise ConfigurationError(f"discount must be in [0, 1], got {self.discount}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must be in [0, 1]")
        if self.epsilon_start < self.epsilon_end:
            raise ConfigurationError("epsilon_start must be >= epsilon_end")
        if not 0 < self.epsilon_decay_fraction <= 1:
            raise ConfigurationError("epsilon_decay_fraction must be in (0, 1]")
        if self.alpha_schedule not in ALPHA_SCHEDULES:
            raise ConfigurationError(f"alpha_schedule must be one of {ALPHA_SCHEDULES}")

    def epsilon(self, episode: int, total_episodes: int) -> float:
        """Linear anneal from start to end over the first fraction of the session."""
        span = self.epsilon_decay_fraction * total_episodes
        if span <= 0 or episode >= span:
            return self.epsilon_end
        return self.epsilon_start - (self.epsilon_start - self.epsilon_end) * (episode / span)


@dataclass(frozen=True)
class Experience:
    state: tuple
    action: int
    reward: float
    next_state: Optional[tuple] = None  # None marks the terminal hour

    def __post_init__(self):
        if (self.next_state is None) != (self.state[0] == LAST_HOUR):
            raise InvalidExperienceError("next_state must be terminal exactly at the last hour")


def choose_action(state, table: QTable, epsilon: float, rng=None) -> int:
    """Epsilon-greedy pick. With ``rng=None`` the choice is purely greedy.

    One uniform draw is consumed per call whenever ``rng`` is given, so two
    agents sharing a stream and an epsilon explore on exactly the same hours.
    """
    if not table.actions:
        raise ConfigurationError("action set is empty")
    if rng is not None and rng.random() < epsilon:
        return table.actions[int(rng.integers(len(table.actions)))]
    return table.actions[table.greedy_index(state)]


def learn(exp: Experience, table: QTable, config: AgentConfig) -> QTable:
    """One-step Q-learning update of ``(exp.state, exp.action)`` in place."""
    i = table.index.get(exp.action)
    if i is None:
        raise InvalidExperienceError(f"action {exp.action} not in action set {table.actions}")
    target = exp.reward
    if exp.next_state is not None:
        target += config.discount * table.max_value(exp.next_state)
    values, counts = table.slot(exp.state)
    counts[i] += 1
    alpha = 1.0 / counts[i] if config.alpha_schedule == "inverse_count" else config.learning_rate
    values[i] += alpha * (target - values[i])
    return table


def upload(table: QTable, agent_id: int, episode_stamp: int = 0) -> KnowledgePacket:
    return KnowledgePacket.from_table(table, agent_id, episode_stamp)


def download(table: QTable, repo_view: QTable, trust: float = 1.0) -> QTable:
    """Blend repository knowledge into ``table`` in place.

    Slots known on both sides become the count-weighted mean, with the
    repository's counts scaled by ``trust``; the local count is kept.
    Repository-only slots are adopted with count ``max(1, floor(trust * c))``.
    Local-only slots are untouched. ``trust == 0`` does nothing.
    """
    if tuple(repo_view.actions) != tuple(table.actions):
        raise TransferError(f"action sets differ: {table.actions} vs {repo_view.actions}")
    if trust < 0:
        raise ConfigurationError("trust must be >= 0")
    if trust == 0:
        return table
    own = table._entries
    for state, (r_values, r_counts) in repo_view.items():
        slot = own.get(state)
        if slot is None:
            if any(r_counts):
                own[state] = (
                    [v if c > 0 else 0.0 for v, c in zip(r_values, r_counts)],
                    [max(1, math.floor(trust * c)) if c > 0 else 0 for c in r_counts],
                )
            continue
        values, counts = slot
        for i, c_repo in enumerate(r_counts):
            if c_repo <= 0:
                continue
            c_own = counts[i]
            if c_own > 0:
                w = trust * c_repo
                values[i] = (c_own * values[i] + w * r_values[i]) / (c_own + w)
            else:
                values[i] = r_values[i]
                counts[i] = max(1, math.floor(trust * c_repo))
    return table


class QAgent:
    """A station's learner: owns one Q-table, driven by a single caller."""

    def __init__(self, agent_id: int, config: AgentConfig, table: Optional[QTable] = None):
        self.agent_id = agent_id
        self.config = config
        self.table = QTable(config.action_set) if table is None else table
        if self.table.actions != config.action_set:
            raise ConfigurationError("table and config action sets differ")

    def act(self, state, epsilon: float, rng=None) -> int:
        return choose_action(state, self.table, epsilon, rng)

    def learn(self, state, action: int, reward: float, next_state=None) -> None:
        learn(Experience(state, action, reward, next_state), self.table, self.config)

    def upload(self, episode_stamp: int = 0) -> KnowledgePacket:
        return upload(self.table, self.agent_id, episode_stamp)

    def download(self, repo_view: QTable, trust: float = 1.0) -> None:
        download(self.table, repo_view, trust)
