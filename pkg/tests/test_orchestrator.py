import dataclasses
import random

import pytest

from bikerebalance.agent import AgentConfig
from bikerebalance.env import StationConfig
from bikerebalance.exceptions import ConfigurationError, KnowledgeFormatError, TransferError, UnfairComparisonError
from bikerebalance.knowledge import Repository, save_knowledge
from bikerebalance.metrics import dp_oracle
from bikerebalance.orchestrator import SessionConfig, greedy_rollout, run_benchmark, run_session
from bikerebalance.qtable import QTable

SMALL = (-3, -1, 0, 1, 3)


def quick(**kw):
    base = dict(stations=3, episodes=30, master_seed=7, agent_config=AgentConfig(action_set=SMALL))
    base.update(kw)
    return SessionConfig(**base)


def fixed_schedule(seed, bound=4):
    rng = random.Random(seed)
    return tuple(rng.randint(-bound, bound) for _ in range(23))


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ConfigurationError):
            SessionConfig(stations=0)
        with pytest.raises(ConfigurationError):
            SessionConfig(episodes=0)
        with pytest.raises(ConfigurationError):
            SessionConfig(deposit_interval=0)
        with pytest.raises(ConfigurationError):
            SessionConfig(stations=2, station_configs=(StationConfig(),))

    def test_dict_round_trip(self):
        cfg = quick(flow_schedules=((0,) * 23,) * 3)
        assert SessionConfig.from_dict(cfg.to_dict()) == cfg


class TestRunSession:
    def test_idle_station_on_quiet_day(self):
        cfg = SessionConfig(
            stations=1,
            episodes=1,
            station_configs=(StationConfig(flow_mode="deterministic"),),
            flow_schedules=((0,) * 23,),
            agent_config=AgentConfig(action_set=(0,)),
        )
        rec = run_session(cfg).summary.records[0]
        assert rec.total_reward == 50.0
        assert rec.complete_success

    def test_one_record_per_episode(self):
        seen = []
        res = run_session(quick(), on_record=seen.append)
        assert len(res.summary) == 30
        assert [r.episode for r in seen] == list(range(30))

    def test_exchange_schedule(self):
        res = run_session(quick(episodes=250, transfer_enabled=True))
        assert res.exchanges == [100, 200]
        # the closing distill is for export only
        assert res.final_knowledge.distill_count == 3

    def test_no_exchange_without_transfer(self):
        res = run_session(quick(episodes=250))
        assert res.exchanges == []
        assert res.final_knowledge.ready

    def test_hour_barrier(self):
        trace = []
        run_session(quick(episodes=3), workers=3, trace=trace)
        assert len(trace) == 3 * 24 * 3
        stamps = [(e, h) for e, h, _ in trace]
        assert stamps == sorted(stamps)

    def test_seed_determinism(self):
        a = run_session(quick()).summary.records
        b = run_session(quick()).summary.records
        assert a == b
        assert run_session(quick(master_seed=8)).summary.records != a

    def test_workers_do_not_change_results(self):
        cfg = quick(episodes=120, transfer_enabled=True, deposit_interval=40)
        one, four = run_session(cfg, workers=1), run_session(cfg, workers=4)
        assert one.summary.records == four.summary.records
        assert one.tables == four.tables

    def test_stations_independent_without_transfer(self):
        stations = tuple(StationConfig(station_id=i) for i in range(3))
        joint = run_session(quick(station_configs=stations))
        for i, st in enumerate(stations):
            solo = run_session(quick(stations=1, station_configs=(st,)))
            got = [(r.per_station_reward[0], r.per_station_success[0]) for r in solo.summary.records]
            want = [(r.per_station_reward[i], r.per_station_success[i]) for r in joint.summary.records]
            assert got == want

    def test_transfer_couples_stations(self):
        plain = run_session(quick(episodes=60))
        shared = run_session(quick(episodes=60, transfer_enabled=True, deposit_interval=10))
        assert plain.summary.records[:10] == shared.summary.records[:10]
        assert plain.summary.records != shared.summary.records

    def test_initial_knowledge_action_mismatch(self, tmp_path):
        path = tmp_path / "k.txt"
        save_knowledge(QTable((-1, 0, 1)), path)
        with pytest.raises(KnowledgeFormatError, match="line 2"):
            run_session(quick(initial_knowledge=path))
        with pytest.raises(TransferError):
            run_session(quick(initial_knowledge=QTable((-1, 0, 1))))

    def test_initial_knowledge_sources_agree(self, tmp_path):
        donor = run_session(quick(episodes=50)).final_knowledge
        path = tmp_path / "k.txt"
        donor.save(path)
        from_repo = run_session(quick(initial_knowledge=donor)).summary.records
        from_file = run_session(quick(initial_knowledge=path)).summary.records
        from_table = run_session(quick(initial_knowledge=donor.fetch())).summary.records
        assert from_repo == from_file == from_table


class TestBenchmark:
    def test_self_check_is_zero(self):
        cfg = quick(episodes=150)
        res = run_benchmark(cfg, cfg)
        assert res.ratio == 0.0
        assert res.jumpstart == 0.0

    def test_reuses_naive_result(self):
        cfg = quick(episodes=40)
        naive = run_session(cfg)
        res = run_benchmark(cfg, cfg, naive_result=naive)
        assert res.naive_result is naive and res.ratio == 0.0

    @pytest.mark.parametrize(
        "change",
        [
            dict(master_seed=8),
            dict(episodes=31),
            dict(stations=2),
            dict(station_configs=tuple(StationConfig(station_id=i, threshold=1.5) for i in range(3))),
        ],
    )
    def test_unfair(self, change):
        with pytest.raises(UnfairComparisonError):
            run_benchmark(quick(), quick(**change))

    def test_knowledge_and_transfer_may_differ(self):
        donor = run_session(quick()).final_knowledge
        run_benchmark(quick(), quick(initial_knowledge=donor, transfer_enabled=True, deposit_interval=10))

    def test_own_knowledge_on_fixed_day(self):
        # one station, fixed flows: starting from the naive run's own pooled
        # table should not lose area against starting from scratch
        sched = fixed_schedule(3)
        station = StationConfig(flow_mode="deterministic")
        acfg = AgentConfig(action_set=SMALL, discount=1.0, alpha_schedule="inverse_count")
        cfg = SessionConfig(
            stations=1, episodes=2000, master_seed=3, station_configs=(station,), flow_schedules=(sched,), agent_config=acfg
        )
        naive = run_session(cfg)
        res = run_benchmark(cfg, dataclasses.replace(cfg, initial_knowledge=naive.final_knowledge), naive_result=naive)
        assert res.ratio >= 0.0
        best, _ = dp_oracle(station, sched, SMALL, 1.0)
        reward, _, _ = greedy_rollout(naive.final_knowledge.fetch(), station, sched)
        assert reward <= best


def test_repository_final_knowledge_is_count_weighted():
    res = run_session(quick(episodes=20))
    master = res.final_knowledge.fetch()
    for state in master.states():
        for a in SMALL:
            assert master.count(state, a) == sum(t.count(state, a) for t in res.tables)
    assert isinstance(res.final_knowledge, Repository)
