"""Single bike-station environment over a 24-hour episode.

Timeline within an episode: at hour ``h`` the agent observes the stock,
its action is applied immediately, the hour is scored on the post-action
stock, then the rider flow for hour ``h + 1`` lands. Hour 0 sees the
initial stock untouched, so a schedule carries 23 flows, not 24.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from bikerebalance.exceptions import ConfigurationError, EpisodeOverError, InvalidActionError
from bikerebalance.seeding import FLOW_STREAM, stream

HOURS = 24
N_FLOWS = HOURS - 1
LAST_HOUR = HOURS - 1

FINAL_REWARD = 50.0
FINAL_PENALTY = -50.0
HOURLY_PENALTY = -30.0
MOVE_COST = 0.5

FLOW_MODES = ("independent", "conserving", "deterministic")


@dataclass(frozen=True)
class StationConfig:
    station_id: int = 0
    initial_stock: int = 10
    threshold: float = 1.2
    flow_mode: str = "independent"
    flow_bound: int = 20

    def __post_init__(self):
        if self.station_id < 0:
            raise ConfigurationError(f"station_id must be >= 0, got {self.station_id}")
        if self.initial_stock < 0:
            raise ConfigurationError(f"initial_stock must be >= 0, got {self.initial_stock}")
        if not self.threshold > 0:
            raise ConfigurationError(f"threshold must be > 0, got {self.threshold}")
        if self.flow_bound < 0:
            raise ConfigurationError(f"flow_bound must be >= 0, got {self.flow_bound}")
        if self.flow_mode not in FLOW_MODES:
            raise ConfigurationError(f"unknown flow_mode {self.flow_mode!r}")

    @property
    def cap(self) -> int:
        """Upper stock bound, ``floor(initial_stock * threshold)``."""
        return math.floor(self.initial_stock * self.threshold)


@dataclass(frozen=True)
class FlowSchedule:
    flows: tuple
    seed_lineage: Optional[tuple] = None  # (master_seed, station_id, episode)

    def __post_init__(self):
        if len(self.flows) != N_FLOWS:
            raise ConfigurationError(f"a flow schedule needs {N_FLOWS} entries, got {len(self.flows)}")
        object.__setattr__(self, "flows", tuple(int(f) for f in self.flows))

    def flow_into(self, hour: int) -> int:
        """Flow arriving at ``hour`` (1..23)."""
        return self.flows[hour - 1]


@dataclass(frozen=True)
class StationState:
    hour: int
    stock: int
    history: tuple = ()
    schedule: Optional[FlowSchedule] = field(default=None, compare=False)

    @property
    def done(self) -> bool:
        return self.hour >= HOURS


@dataclass(frozen=True)
class StepFeedback:
    old_stock: int
    action_applied: int
    new_stock: int
    reward: float
    in_range: bool
    terminal: bool
    next_stock: int  # observed at the next hour; equals new_stock when terminal


def in_range(stock: int, cap: int) -> bool:
    return 0 <= stock <= cap


def reward_for_hour(post_action_stock: int, hour: int, action: int, cap: int) -> float:
    """Reward for one station-hour: movement cost plus the range bonus/penalty."""
    reward = -MOVE_COST * abs(action)
    ok = 0 <= post_action_stock <= cap
    if hour == LAST_HOUR:
        reward += FINAL_REWARD if ok else FINAL_PENALTY
    elif not ok:
        reward += HOURLY_PENALTY
    return reward


def _uniform_flows(bound: int, master_seed: int, station_id: int, episode: int):
    if bound == 0:
        return [0] * N_FLOWS
    rng = stream(master_seed, station_id, episode, FLOW_STREAM)
    return [int(x) for x in rng.integers(-bound, bound + 1, size=N_FLOWS)]


def _conserve(draws: list[list[int]], bounds: list[int]) -> list[list[int]]:
    """Shift one hour's draws toward a zero network sum.

    Subtract the half-up rounded mean, clamp to each station's bound, then
    push whatever the clamping broke back into the allowed window using the
    stations' remaining slack, lowest position first.
    """
    n = len(draws)
    limit = math.ceil(n / 2)
    out = [list(row) for row in draws]
    for h in range(N_FLOWS):
        col = [row[h] for row in draws]
        shift = math.floor(sum(col) / n + 0.5)
        adj = [max(-b, min(b, x - shift)) for x, b in zip(col, bounds)]
        excess = sum(adj)
        for i in range(n):
            if -limit <= excess <= limit:
                break
            if excess > limit:
                delta = min(adj[i] + bounds[i], excess - limit)
                adj[i] -= delta
                excess -= delta
            else:
                delta = min(bounds[i] - adj[i], -limit - excess)
                adj[i] += delta
                excess += delta
        for i in range(n):
            out[i][h] = adj[i]
    return out


def generate_network_flows(
    configs: Sequence[StationConfig],
    master_seed: int,
    episode: int,
    schedules: Optional[Sequence[Sequence[int]]] = None,
) -> list[FlowSchedule]:
    """Flow schedules for every station in a network, in the order of ``configs``.

    Deterministic stations take their row from ``schedules`` (indexed like
    ``configs``). Conserving stations are balanced jointly with each other.
    """
    if episode < 0:
        raise ConfigurationError("episode must be >= 0")
    result: list[Optional[FlowSchedule]] = [None] * len(configs)
    conserving = []
    for i, cfg in enumerate(configs):
        lineage = (master_seed, cfg.station_id, episode)
        if cfg.flow_mode == "deterministic":
            if schedules is None or i >= len(schedules) or schedules[i] is None:
                raise ConfigurationError(f"station {cfg.station_id}: deterministic flow mode needs a schedule")
            result[i] = FlowSchedule(tuple(schedules[i]))
            bad = [f for f in result[i].flows if abs(f) > cfg.flow_bound]
            if bad:
                raise ConfigurationError(f"station {cfg.station_id}: flow {bad[0]} exceeds bound {cfg.flow_bound}")
        elif cfg.flow_mode == "independent":
            result[i] = FlowSchedule(tuple(_uniform_flows(cfg.flow_bound, *lineage)), lineage)
        else:
            conserving.append(i)
    if conserving:
        draws = [_uniform_flows(configs[i].flow_bound, master_seed, configs[i].station_id, episode) for i in conserving]
        balanced = _conserve(draws, [configs[i].flow_bound for i in conserving])
        for i, row in zip(conserving, balanced):
            result[i] = FlowSchedule(tuple(row), (master_seed, configs[i].station_id, episode))
    return result


def generate_flows(
    config: StationConfig,
    master_seed: int,
    episode: int,
    station_count: int = 1,
    schedule: Optional[Sequence[int]] = None,
) -> FlowSchedule:
    """Flow schedule for a single station.

    In conserving mode the station is assumed to sit in a network of
    ``station_count`` identically configured stations with ids
    ``0..station_count - 1``; the whole network is generated and this
    station's row returned.
    """
    if config.flow_mode == "conserving":
        if not 0 <= config.station_id < station_count:
            raise ConfigurationError("conserving mode needs station_id < station_count")
        peers = [
            StationConfig(i, config.initial_stock, config.threshold, "conserving", config.flow_bound)
            for i in range(station_count)
        ]
        return generate_network_flows(peers, master_seed, episode)[config.station_id]
    return generate_network_flows([config], master_seed, episode, None if schedule is None else [schedule])[0]


def reset(
    config: StationConfig,
    master_seed: int,
    episode: int,
    station_count: int = 1,
    schedule: Optional[Sequence[int]] = None,
) -> StationState:
    """Fresh hour-0 state; the episode's flow schedule rides along on ``state.schedule``."""
    flows = generate_flows(config, master_seed, episode, station_count, schedule)
    return StationState(hour=0, stock=config.initial_stock, history=(), schedule=flows)


def step(
    state: StationState,
    action: int,
    config: StationConfig,
    action_set: Optional[Sequence[int]] = None,
    schedule: Optional[FlowSchedule] = None,
) -> tuple[StationState, StepFeedback]:
    """Apply one hour's action. Returns the next state and the hour's feedback."""
    if state.done:
        raise EpisodeOverError("episode already finished; call reset()")
    if action_set is not None and action not in action_set:
        raise InvalidActionError(f"action {action} not in action set {tuple(action_set)}")
    schedule = schedule if schedule is not None else state.schedule
    cap = config.cap
    new_stock = state.stock + action
    terminal = state.hour == LAST_HOUR
    if terminal:
        next_stock = new_stock
    else:
        if schedule is None:
            raise ConfigurationError("no flow schedule for this episode")
        next_stock = new_stock + schedule.flow_into(state.hour + 1)
    feedback = StepFeedback(
        old_stock=state.stock,
        action_applied=action,
        new_stock=new_stock,
        reward=reward_for_hour(new_stock, state.hour, action, cap),
        in_range=0 <= new_stock <= cap,
        terminal=terminal,
        next_stock=next_stock,
    )
    nxt = StationState(state.hour + 1, next_stock, state.history + (new_stock,), schedule)
    return nxt, feedback


class StationEnv:
    """Stateful wrapper driven by one caller at a time."""

    def __init__(self, config: StationConfig, action_set: Optional[Sequence[int]] = None, master_seed: int = 0,
                 station_count: int = 1, schedule: Optional[Sequence[int]] = None):
        self.config = config
        self.action_set = None if action_set is None else frozenset(action_set)
        self.master_seed = master_seed
        self.station_count = station_count
        self.fixed_schedule = schedule
        self.state: Optional[StationState] = None

    def reset(self, episode: int, schedule: Optional[FlowSchedule] = None) -> StationState:
        if schedule is None:
            self.state = reset(self.config, self.master_seed, episode, self.station_count, self.fixed_schedule)
        else:
            self.state = StationState(0, self.config.initial_stock, (), schedule)
        return self.state

    def step(self, action: int) -> StepFeedback:
        if self.state is None:
            raise EpisodeOverError("call reset() before step()")
        self.state, feedback = step(self.state, action, self.config, self.action_set)
        return feedback

    @property
    def history(self) -> tuple:
        return () if self.state is None else self.state.history


def load_schedule_file(path) -> list[list[int]]:
    """Read deterministic schedules: one line per station, 23 comma-separated ints."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [int(tok) for tok in line.split(",")]
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: non-integer flow") from None
        if len(row) != N_FLOWS:
            raise ConfigurationError(f"{path}:{lineno}: expected {N_FLOWS} flows, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ConfigurationError(f"{path}: no schedules")
    return rows


def write_schedule_file(path, schedules: Sequence[Sequence[int]]) -> None:
    Path(path).write_text("".join(",".join(str(int(f)) for f in row) + "\n" for row in schedules))
