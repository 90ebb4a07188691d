"""Command line: ``bikerebalance {train,benchmark,export,inspect}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import collections
import csv
import dataclasses
import datetime
import json
import logging
import sys
from pathlib import Path

from bikerebalance import __version__
from bikerebalance.agent import DEFAULT_ACTIONS, AgentConfig
from bikerebalance.env import StationConfig, load_schedule_file
from bikerebalance.exceptions import ConfigurationError, RebalanceError
from bikerebalance.knowledge import load_knowledge, save_knowledge
from bikerebalance.metrics import (
    area_under_reward,
    cost_series,
    quartile_cost,
)
from bikerebalance.orchestrator import SessionConfig, run_benchmark, run_session

log = logging.getLogger("bikerebalance")

CSV_COLUMNS = ["episode", "total_reward", "success_ratio", "complete_success", "bikes_moved", "cost"]


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_session_flags(p):
    g = p.add_argument_group("session")
    g.add_argument("--config", help="JSON manifest or config to take session settings from")
    g.add_argument("--stations", type=int, default=3)
    g.add_argument("--episodes", type=int, default=10_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--actions", type=_int_list, default=DEFAULT_ACTIONS)
    g.add_argument("--threshold", type=float, default=1.2)
    g.add_argument("--initial-stock", type=int, default=10)
    g.add_argument("--flow-bound", type=int, default=20)
    g.add_argument("--flow-mode", choices=["independent", "conserving", "deterministic"], default="independent")
    g.add_argument("--flow-file", help="deterministic schedules, one line of 23 flows per station")
    g.add_argument("--deposit-interval", type=int, default=100)
    g.add_argument("--no-transfer", action="store_true", help="disable in-session knowledge exchange")
    g.add_argument("--trust", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=0.1)
    g.add_argument("--alpha-schedule", choices=["constant", "inverse_count"], default="constant")
    g.add_argument("--gamma", type=float, default=0.9)
    g.add_argument("--epsilon-start", type=float, default=1.0)
    g.add_argument("--epsilon-end", type=float, default=0.01)
    g.add_argument("--epsilon-fraction", type=float, default=0.5)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", default="runs/latest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bikerebalance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training session")
    _add_session_flags(train)
    train.add_argument("--knowledge", help="start from this knowledge file (experienced agents)")

    bench = sub.add_parser("benchmark", help="naive vs experienced on identical flows")
    _add_session_flags(bench)
    bench.add_argument("--knowledge", help="knowledge file for the experienced arm")
    bench.add_argument("--self-check", action="store_true", help="run both arms naive; R must be 0")
    bench.add_argument("--first-n", type=int, default=100, help="episodes in the jumpstart window")
    bench.add_argument("--raw-ratio", action="store_true", help="divide R by the signed naive area, not its magnitude")

    export = sub.add_parser("export", help="re-write a knowledge file in canonical form")
    export.add_argument("knowledge")
    export.add_argument("--out", required=True)

    inspect = sub.add_parser("inspect", help="print knowledge file statistics")
    inspect.add_argument("knowledge")
    return parser


def session_config(args, knowledge=None, label="") -> SessionConfig:
    """Resolve flags (or a --config file) into a SessionConfig."""
    if args.config:
        data = json.loads(Path(args.config).read_text())
        # a train manifest keeps it under "config", a benchmark manifest under "naive"
        data = data.get("config") or data.get("naive") or data
        cfg = SessionConfig.from_dict(data)
        if knowledge is not None:
            cfg = dataclasses.replace(cfg, initial_knowledge=knowledge)
        return dataclasses.replace(cfg, label=label or cfg.label)
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    if args.stations < 1:
        raise UsageError("--stations must be >= 1")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    schedules = None
    if args.flow_mode == "deterministic":
        if not args.flow_file:
            raise UsageError("--flow-mode deterministic needs --flow-file")
        schedules = load_schedule_file(args.flow_file)
        if len(schedules) < args.stations:
            raise UsageError(f"--flow-file has {len(schedules)} lines for {args.stations} stations")
        schedules = schedules[: args.stations]
    stations = tuple(
        StationConfig(i, args.initial_stock, args.threshold, args.flow_mode, args.flow_bound)
        for i in range(args.stations)
    )
    agent = AgentConfig(
        action_set=args.actions,
        learning_rate=args.alpha,
        discount=args.gamma,
        epsilon_start=args.epsilon_start,
        epsilon_end=args.epsilon_end,
        epsilon_decay_fraction=args.epsilon_fraction,
        alpha_schedule=args.alpha_schedule,
    )
    return SessionConfig(
        stations=args.stations,
        episodes=args.episodes,
        master_seed=args.seed,
        deposit_interval=args.deposit_interval,
        transfer_enabled=not args.no_transfer,
        initial_knowledge=knowledge,
        station_configs=stations,
        agent_config=agent,
        trust=args.trust,
        flow_schedules=schedules,
        label=label,
    )


def write_manifest(path: Path, command: str, configs: dict, artifacts: dict, workers: int) -> None:
    manifest = {
        "tool": "bikerebalance",
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "command": command,
        "workers": workers,
        "artifacts": artifacts,
    }
    manifest.update({k: v.to_dict() for k, v in configs.items()})
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


class EpisodeCSV:
    """Streams one row per EpisodeRecord so long runs are readable mid-flight."""

    def __init__(self, path: Path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(CSV_COLUMNS)

    def __call__(self, rec) -> None:
        self.writer.writerow(
            [rec.episode, repr(rec.total_reward), repr(rec.success_ratio), int(rec.complete_success), rec.bikes_moved, repr(rec.cost)]
        )

    def close(self):
        self.fh.close()


def _fmt(x):
    return "none" if x is None else repr(float(x))


def session_lines(summary) -> list[str]:
    n = len(summary)
    tail = max(1, n // 10)
    ratios = summary.success_ratios()
    cs = summary.complete_successes()
    return [
        f"episodes={n}",
        f"area_under_reward={_fmt(area_under_reward(summary))}",
        f"mean_success_ratio={_fmt(ratios.mean())}",
        f"mean_success_ratio_last_{tail}={_fmt(ratios[-tail:].mean())}",
        f"complete_successes={int(cs.sum())}",
        f"complete_successes_last_{tail}={int(cs[-tail:].sum())}",
        f"mean_cost_complete_first_quartile={_fmt(quartile_cost(summary, 0))}",
        f"mean_cost_complete_last_quartile={_fmt(quartile_cost(summary, 3))}",
    ]


def cmd_train(args) -> int:
    cfg = session_config(args, knowledge=args.knowledge, label="train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"episodes": "episodes.csv", "summary": "summary.txt", "knowledge": "knowledge.txt"}
    write_manifest(out / "manifest.json", "train", {"config": cfg}, artifacts, args.workers)
    sink = EpisodeCSV(out / "episodes.csv")
    try:
        result = run_session(cfg, workers=args.workers, on_record=sink)
    finally:
        sink.close()
    result.final_knowledge.save(out / "knowledge.txt")
    lines = session_lines(result.summary)
    lines.append(f"in_session_exchanges={len(result.exchanges)}")
    lines.append(f"wall_clock_seconds={result.wall_clock:.3f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_benchmark(args) -> int:
    if not args.self_check and not args.knowledge:
        raise UsageError("benchmark needs --knowledge (or --self-check)")
    naive = session_config(args, label="naive")
    experienced = dataclasses.replace(
        naive, label="experienced", initial_knowledge=None if args.self_check else args.knowledge
    )
    if not args.self_check:
        # fail fast on a bad or incompatible file, before any training
        load_knowledge(args.knowledge, naive.agent_config.action_set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "naive": "naive_episodes.csv",
        "experienced": "experienced_episodes.csv",
        "transfer": "transfer.txt",
    }
    write_manifest(out / "manifest.json", "benchmark", {"naive": naive, "experienced": experienced}, artifacts, args.workers)
    result = run_benchmark(naive, experienced, workers=args.workers, first_n=args.first_n, raw_ratio=args.raw_ratio)
    for name, summary in (("naive", result.naive), ("experienced", result.experienced)):
        sink = EpisodeCSV(out / artifacts[name])
        for rec in summary.records:
            sink(rec)
        sink.close()

    cs_naive = int(result.naive.complete_successes().sum())
    cs_exp = int(result.experienced.complete_successes().sum())
    lines = [
        f"R={_fmt(result.ratio)}",
        f"jumpstart={_fmt(result.jumpstart)}",
        f"jumpstart_first_n={min(args.first_n, naive.episodes)}",
        f"area_naive={_fmt(area_under_reward(result.naive))}",
        f"area_experienced={_fmt(area_under_reward(result.experienced))}",
        f"complete_success_naive={cs_naive}",
        f"complete_success_experienced={cs_exp}",
        f"complete_success_improvement={_fmt((cs_exp - cs_naive) / cs_naive) if cs_naive else 'none'}",
    ]
    for name, summary in (("naive", result.naive), ("experienced", result.experienced)):
        for lo, hi, count, mean in cost_series(summary):
            lines.append(f"cost_{name}[{lo}-{hi}]=count:{count},mean:{_fmt(mean)}")
    (out / "transfer.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[:8]))
    return 0


def cmd_export(args) -> int:
    table, gamma = load_knowledge(args.knowledge, with_gamma=True)
    save_knowledge(table, args.out, gamma)
    print(f"wrote {args.out}: {len(table)} states")
    return 0


def cmd_inspect(args) -> int:
    table, gamma = load_knowledge(args.knowledge, with_gamma=True)
    rows = list(table.rows())
    hist = collections.Counter()
    for *_, c in rows:
        hist[0 if c == 0 else 1 << (c.bit_length() - 1)] += 1
    print(f"states={len(table)}")
    print(f"entries={len(rows)}")
    print("actions=" + ",".join(str(a) for a in table.actions))
    print(f"gamma={'' if gamma is None else gamma!r}")
    if rows:
        hours = sorted({h for h, *_ in rows})
        stocks = [s for _, s, *_ in rows]
        print(f"hours={hours[0]}..{hours[-1]} stock={min(stocks)}..{max(stocks)}")
    print("count histogram (bucket lower bound: entries)")
    for lo in sorted(hist):
        print(f"  {lo}: {hist[lo]}")
    return 0


COMMANDS = {"train": cmd_train, "benchmark": cmd_benchmark, "export": cmd_export, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError) as exc:
        parser.print_usage(sys.stderr)
        print(f"bikerebalance: error: {exc}", file=sys.stderr)
        return 2
    except (RebalanceError, OSError) as exc:
        print(f"bikerebalance: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
