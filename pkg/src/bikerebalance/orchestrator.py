"""Session runner: station-agent pairs on a shared 24-hour clock with periodic knowledge exchange."""

from __future__ import annotations

import dataclasses
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from bikerebalance.agent import AgentConfig, QAgent, choose_action, learn, Experience
from bikerebalance.env import (
    HOURS,
    LAST_HOUR,
    FlowSchedule,
    StationConfig,
    generate_network_flows,
    reward_for_hour,
)
from bikerebalance.exceptions import ConfigurationError, TransferError, UnfairComparisonError
from bikerebalance.knowledge import Repository, load_knowledge
from bikerebalance.metrics import EpisodeRecord, SessionSummary, area_under_reward, jumpstart, transfer_ratio
from bikerebalance.qtable import QTable
from bikerebalance.seeding import AGENT_STREAM, stream

log = logging.getLogger(__name__)

INITIAL_TRUST = 1.0


@dataclass(frozen=True)
class SessionConfig:
    stations: int = 3
    episodes: int = 10_000
    master_seed: int = 0
    deposit_interval: int = 100
    transfer_enabled: bool = False
    initial_knowledge: object = None  # path, QTable or Repository
    station_configs: tuple = ()
    agent_config: AgentConfig = field(default_factory=AgentConfig)
    trust: float = 1.0
    flow_schedules: Optional[tuple] = None  # deterministic rows, indexed like station_configs
    label: str = ""

    def __post_init__(self):
        if self.stations < 1:
            raise ConfigurationError(f"need at least one station, got {self.stations}")
        if self.episodes < 1:
            raise ConfigurationError(f"need at least one episode, got {self.episodes}")
        if self.deposit_interval < 1:
            raise ConfigurationError("deposit_interval must be >= 1")
        if self.trust < 0:
            raise ConfigurationError("trust must be >= 0")
        if not self.station_configs:
            object.__setattr__(self, "station_configs", tuple(StationConfig(station_id=i) for i in range(self.stations)))
        object.__setattr__(self, "station_configs", tuple(self.station_configs))
        if len(self.station_configs) != self.stations:
            raise ConfigurationError(f"{self.stations} stations but {len(self.station_configs)} station configs")
        ids = [c.station_id for c in self.station_configs]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("station ids must be unique")
        if self.flow_schedules is not None:
            object.__setattr__(self, "flow_schedules", tuple(tuple(int(f) for f in row) for row in self.flow_schedules))

    def to_dict(self) -> dict:
        """JSON-ready form. A non-path ``initial_knowledge`` is recorded as its repr."""
        d = dataclasses.asdict(self)
        d["agent_config"]["action_set"] = list(self.agent_config.action_set)
        ik = self.initial_knowledge
        d["initial_knowledge"] = None if ik is None else (os.fspath(ik) if isinstance(ik, (str, os.PathLike)) else repr(ik))
        if self.flow_schedules is not None:
            d["flow_schedules"] = [list(r) for r in self.flow_schedules]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        d = dict(d)
        d["agent_config"] = AgentConfig(**{**d["agent_config"], "action_set": tuple(d["agent_config"]["action_set"])})
        d["station_configs"] = tuple(StationConfig(**s) for s in d.get("station_configs", ()))
        if d.get("flow_schedules") is not None:
            d["flow_schedules"] = tuple(tuple(r) for r in d["flow_schedules"])
        return cls(**d)


@dataclass
class SessionResult:
    summary: SessionSummary
    final_knowledge: Repository
    wall_clock: float
    exchanges: list = field(default_factory=list)  # episode counts at which in-session exchanges ran
    tables: list = field(default_factory=list)


@dataclass
class BenchmarkResult:
    ratio: float
    jumpstart: float
    naive: SessionSummary
    experienced: SessionSummary
    naive_result: SessionResult = None
    experienced_result: SessionResult = None


def resolve_knowledge(source, actions) -> QTable:
    """Turn a knowledge path, Repository or QTable into a table for ``actions``."""
    if isinstance(source, Repository):
        table = source.fetch()
    elif isinstance(source, QTable):
        table = source.copy()
    else:
        table = load_knowledge(source, actions)
    if table.actions != tuple(actions):
        raise TransferError(f"knowledge action set {table.actions} != session {tuple(actions)}")
    return table


class _Pair:
    """One station-agent pair for the duration of one episode."""

    __slots__ = ("agent", "station", "flows", "rng", "epsilon", "stock", "history", "rewards", "moved", "cap")

    def __init__(self, agent: QAgent, station: StationConfig, flows: FlowSchedule, rng, epsilon: float):
        self.agent = agent
        self.station = station
        self.flows = flows.flows
        self.rng = rng
        self.epsilon = epsilon
        self.stock = station.initial_stock
        self.cap = station.cap
        self.history = []
        self.rewards = []
        self.moved = 0

    def run_hour(self, hour: int) -> None:
        table = self.agent.table
        state = (hour, self.stock)
        action = choose_action(state, table, self.epsilon, self.rng)
        new_stock = self.stock + action
        reward = reward_for_hour(new_stock, hour, action, self.cap)
        if hour < LAST_HOUR:
            self.stock = new_stock + self.flows[hour]
            nxt = (hour + 1, self.stock)
        else:
            self.stock = new_stock
            nxt = None
        learn(Experience(state, action, reward, nxt), table, self.agent.config)
        self.history.append(new_stock)
        self.rewards.append(reward)
        self.moved += abs(action)

    def record_parts(self):
        success = all(0 <= s <= self.cap for s in self.history)
        return sum(self.rewards), success, self.moved


def _exchange(agents, repo: Repository, stamp: int, trust: Optional[float]) -> None:
    for agent in agents:
        repo.deposit(agent.upload(stamp))
    view = repo.distill()
    if trust is not None:
        for agent in agents:
            agent.download(view, trust)


def run_session(
    config: SessionConfig,
    workers: int = 1,
    on_record: Optional[Callable[[EpisodeRecord], None]] = None,
    trace: Optional[list] = None,
) -> SessionResult:
    """Run a full training session.

    Within an episode every pair finishes hour ``h`` before any pair starts
    ``h + 1``. With ``workers > 1`` pairs of one hour run on a thread pool;
    output is identical to the serial run because every random draw comes
    from a per-(station, episode) stream. ``trace`` (a list) receives
    ``(episode, hour, station_id)`` tuples as pairs complete hours.
    """
    t0 = time.perf_counter()
    acfg = config.agent_config
    agents = [QAgent(s.station_id, acfg) for s in config.station_configs]
    if config.initial_knowledge is not None:
        view = resolve_knowledge(config.initial_knowledge, acfg.action_set)
        for agent in agents:
            agent.download(view, INITIAL_TRUST)

    repo = Repository(acfg.action_set, acfg.discount)
    summary = SessionSummary(label=config.label)
    exchanges = []
    lock = threading.Lock()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def hour_task(pair: _Pair, hour: int):
        pair.run_hour(hour)
        if trace is not None:
            with lock:
                trace.append((episode, hour, pair.station.station_id))

    try:
        for episode in range(config.episodes):
            eps = acfg.epsilon(episode, config.episodes)
            flows = generate_network_flows(config.station_configs, config.master_seed, episode, config.flow_schedules)
            pairs = [
                _Pair(agent, st, fl, stream(config.master_seed, st.station_id, episode, AGENT_STREAM), eps)
                for agent, st, fl in zip(agents, config.station_configs, flows)
            ]
            for hour in range(HOURS):
                if pool is None:
                    for pair in pairs:
                        hour_task(pair, hour)
                else:
                    # list() drains the iterator: the hour barrier
                    list(pool.map(hour_task, pairs, [hour] * len(pairs)))

            parts = [p.record_parts() for p in pairs]
            record = EpisodeRecord(
                episode=episode,
                per_station_reward=tuple(r for r, _, _ in parts),
                per_station_success=tuple(s for _, s, _ in parts),
                bikes_moved=sum(m for _, _, m in parts),
            )
            summary.append(record)
            if on_record is not None:
                on_record(record)

            done = episode + 1
            if config.transfer_enabled and done % config.deposit_interval == 0:
                _exchange(agents, repo, done, config.trust)
                exchanges.append(done)
    finally:
        if pool is not None:
            pool.shutdown()

    # final pooled knowledge for between-session transfer; nobody downloads it here
    _exchange(agents, repo, config.episodes, None)
    elapsed = time.perf_counter() - t0
    log.info("session %r: %d episodes in %.1fs", config.label, config.episodes, elapsed)
    return SessionResult(summary, repo, elapsed, exchanges, [a.table for a in agents])


def _env_signature(cfg: SessionConfig):
    return (cfg.stations, cfg.episodes, cfg.master_seed, cfg.station_configs, cfg.flow_schedules)


def run_benchmark(
    config_naive: SessionConfig,
    config_experienced: SessionConfig,
    workers: int = 1,
    first_n: int = 100,
    raw_ratio: bool = False,
    naive_result: Optional[SessionResult] = None,
) -> BenchmarkResult:
    """Run both arms on identical flows; report transfer ratio and jumpstart.

    A precomputed ``naive_result`` for ``config_naive`` may be passed to
    skip re-running the naive arm.
    """
    if _env_signature(config_naive) != _env_signature(config_experienced):
        raise UnfairComparisonError("naive and experienced arms must share stations, episodes, seed and stations' settings")
    if naive_result is None:
        naive_result = run_session(dataclasses.replace(config_naive, label=config_naive.label or "naive"), workers)
    exp_result = run_session(dataclasses.replace(config_experienced, label=config_experienced.label or "experienced"), workers)
    naive, exp = naive_result.summary, exp_result.summary
    ratio = transfer_ratio(area_under_reward(exp), area_under_reward(naive), raw=raw_ratio)
    js = jumpstart(naive, exp, min(first_n, config_naive.episodes))
    return BenchmarkResult(ratio, js, naive, exp, naive_result, exp_result)


def greedy_rollout(table: QTable, station: StationConfig, flows: Sequence[int]):
    """One epsilon-0 episode without learning. Returns (reward, actions, post-action history)."""
    flows = flows.flows if isinstance(flows, FlowSchedule) else tuple(flows)
    stock, total, actions, history = station.initial_stock, 0.0, [], []
    for hour in range(HOURS):
        a = choose_action((hour, stock), table, 0.0)
        new_stock = stock + a
        total += reward_for_hour(new_stock, hour, a, station.cap)
        actions.append(a)
        history.append(new_stock)
        stock = new_stock + (flows[hour] if hour < LAST_HOUR else 0)
    return total, actions, history
