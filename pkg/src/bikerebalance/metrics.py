"""Benchmark quantities: success, cost, reward areas, transfer ratio, and a DP oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from bikerebalance.env import HOURS, LAST_HOUR, MOVE_COST, FlowSchedule, StationConfig, reward_for_hour
from bikerebalance.exceptions import InsufficientEpisodesError, RebalanceError, UndefinedRatioError


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    per_station_reward: tuple
    per_station_success: tuple
    bikes_moved: int
    total_reward: float = None

    def __post_init__(self):
        if len(self.per_station_reward) != len(self.per_station_success):
            raise RebalanceError("per-station sequences differ in length")
        object.__setattr__(self, "per_station_reward", tuple(self.per_station_reward))
        object.__setattr__(self, "per_station_success", tuple(bool(f) for f in self.per_station_success))
        if self.total_reward is None:
            object.__setattr__(self, "total_reward", math.fsum(self.per_station_reward))

    @property
    def success_ratio(self) -> float:
        return success_ratio(self.per_station_success)

    @property
    def complete_success(self) -> bool:
        return complete_network_success(self.per_station_success)

    @property
    def cost(self) -> float:
        return MOVE_COST * self.bikes_moved


@dataclass
class SessionSummary:
    records: list = field(default_factory=list)
    label: str = ""

    def append(self, record: EpisodeRecord) -> None:
        if record.episode != len(self.records):
            raise RebalanceError(f"expected episode {len(self.records)}, got {record.episode}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def total_rewards(self) -> np.ndarray:
        return np.array([r.total_reward for r in self.records], dtype=float)

    def success_ratios(self) -> np.ndarray:
        return np.array([r.success_ratio for r in self.records], dtype=float)

    def complete_successes(self) -> np.ndarray:
        return np.array([r.complete_success for r in self.records], dtype=bool)

    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records], dtype=float)


def station_success(post_action_history: Sequence[int], cap: int) -> bool:
    if len(post_action_history) != HOURS:
        raise RebalanceError(f"history must have {HOURS} entries, got {len(post_action_history)}")
    return all(0 <= s <= cap for s in post_action_history)


def success_ratio(flags: Sequence[bool]) -> float:
    if not len(flags):
        raise RebalanceError("success_ratio of no stations")
    return sum(bool(f) for f in flags) / len(flags)


def complete_network_success(flags: Sequence[bool]) -> bool:
    if not len(flags):
        raise RebalanceError("complete_network_success of no stations")
    return all(flags)


def movement_cost(actions: Iterable[int]) -> float:
    return MOVE_COST * sum(abs(a) for a in actions)


def _rewards(records) -> list[float]:
    if isinstance(records, SessionSummary):
        records = records.records
    return [r.total_reward if isinstance(r, EpisodeRecord) else float(r) for r in records]


def area_under_reward(records) -> float:
    """Discrete area under the reward curve: the plain sum over episodes.

    Accepts a SessionSummary, a list of EpisodeRecords, or raw rewards.
    """
    rewards = _rewards(records)
    if not rewards:
        raise RebalanceError("area of an empty reward curve")
    return math.fsum(rewards)


def reward_curve(records, window: Optional[int] = None) -> np.ndarray:
    """Reward per episode, optionally trailing-mean smoothed. For plotting only."""
    rewards = np.asarray(_rewards(records), dtype=float)
    if not window or window <= 1:
        return rewards
    return moving_average(rewards, window)


def moving_average(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def transfer_ratio(area_with: float, area_without: float, raw: bool = False) -> float:
    """Relative change in reward area; ``raw=True`` keeps the signed denominator."""
    if area_without == 0:
        raise UndefinedRatioError("transfer ratio undefined when the baseline area is 0")
    denom = area_without if raw else abs(area_without)
    return (area_with - area_without) / denom


def meta_action_count(viable_actions_per_edge: int, stations: int) -> int:
    """Action count of one central agent: actions per edge times undirected edges."""
    if stations < 1 or viable_actions_per_edge < 0:
        raise RebalanceError("need stations >= 1 and viable_actions_per_edge >= 0")
    return viable_actions_per_edge * (stations * (stations - 1) // 2)


def jumpstart(naive: SessionSummary, experienced: SessionSummary, first_n: int = 100) -> float:
    """Mean early-episode reward advantage of the experienced arm."""
    if first_n < 1 or len(naive) < first_n or len(experienced) < first_n:
        raise InsufficientEpisodesError(f"both summaries need at least {first_n} episodes")
    a = experienced.total_rewards()[:first_n]
    b = naive.total_rewards()[:first_n]
    return float(math.fsum(a) / first_n - math.fsum(b) / first_n)


def complete_success_costs(summary: SessionSummary, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """Movement cost of the complete-success episodes in ``[start, stop)``."""
    recs = summary.records[start:stop]
    return np.array([r.cost for r in recs if r.complete_success], dtype=float)


def quartile_cost(summary: SessionSummary, quartile: int) -> Optional[float]:
    """Mean cost over complete-success episodes of quartile 0..3, None if there are none."""
    n = len(summary)
    lo, hi = quartile * n // 4, (quartile + 1) * n // 4
    costs = complete_success_costs(summary, lo, hi)
    return float(costs.mean()) if len(costs) else None


def cost_series(summary: SessionSummary, buckets: int = 10) -> list[tuple[int, int, int, Optional[float]]]:
    """(first episode, last episode, complete successes, mean cost) per equal-width bucket."""
    n = len(summary)
    out = []
    for b in range(buckets):
        lo, hi = b * n // buckets, (b + 1) * n // buckets
        if hi <= lo:
            continue
        costs = complete_success_costs(summary, lo, hi)
        out.append((lo, hi - 1, len(costs), float(costs.mean()) if len(costs) else None))
    return out


def dp_oracle(
    config: StationConfig,
    schedule,
    action_set: Sequence[int],
    gamma: float = 1.0,
    start_hour: int = 0,
    start_stock: Optional[int] = None,
) -> tuple[float, list[int]]:
    """Exact optimum of one station's episode under a known flow schedule.

    Backward induction over the (hour, stock) states reachable from
    ``(start_hour, start_stock)``. Ties go to the smallest ``|action|``,
    negative first, matching the greedy rule of the agent.
    Returns the optimal discounted value and the optimal actions from
    ``start_hour`` through hour 23.
    """
    flows = schedule.flows if isinstance(schedule, FlowSchedule) else tuple(schedule)
    acts = sorted(set(int(a) for a in action_set))
    if not acts:
        raise RebalanceError("empty action set")
    pref = sorted(acts, key=lambda a: (abs(a), a))
    cap = config.cap
    stock0 = config.initial_stock if start_stock is None else start_stock

    layers = [{stock0}]
    for h in range(start_hour, LAST_HOUR):
        f = flows[h]  # flow into hour h + 1
        layers.append({s + a + f for s in layers[-1] for a in acts})

    best_action: list[dict[int, int]] = [dict() for _ in layers]
    value_next: dict[int, float] = {}
    for k in range(len(layers) - 1, -1, -1):
        h = start_hour + k
        value_here = {}
        for s in layers[k]:
            best_v, best_a = -math.inf, None
            for a in pref:
                v = reward_for_hour(s + a, h, a, cap)
                if h < LAST_HOUR:
                    v += gamma * value_next[s + a + flows[h]]
                if v > best_v:
                    best_v, best_a = v, a
            value_here[s] = best_v
            best_action[k][s] = best_a
        value_next = value_here

    actions, s = [], stock0
    for k in range(len(layers)):
        h = start_hour + k
        a = best_action[k][s]
        actions.append(a)
        if h < LAST_HOUR:
            s = s + a + flows[h]
    return value_next[stock0], actions
