import csv
import subprocess
import sys

import pytest

from bikerebalance.cli import CSV_COLUMNS, build_parser, main
from bikerebalance.knowledge import save_knowledge
from bikerebalance.qtable import QTable

SMALL = "--actions=-3,-1,0,1,3"


def train(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["train", "--stations", "3", "--episodes", "40", "--seed", "7", SMALL, "--out", str(out), *extra])
    return code, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_writes_artifacts(tmp_path):
    code, out = train(tmp_path, "a")
    assert code == 0
    rows = read_csv(out / "episodes.csv")
    assert rows[0] == list(CSV_COLUMNS)
    assert len(rows) == 41
    assert [int(r[0]) for r in rows[1:]] == list(range(40))
    for name in ("manifest.json", "summary.txt", "knowledge.txt"):
        assert (out / name).exists()
    assert "episodes=40" in (out / "summary.txt").read_text()


def test_csv_decimals_round_trip(tmp_path):
    _, out = train(tmp_path, "a")
    for row in read_csv(out / "episodes.csv")[1:]:
        for cell in (row[1], row[2], row[5]):
            assert repr(float(cell)) == cell


@pytest.mark.parametrize("flags", [["--episodes", "0"], ["--stations", "0"], ["--workers", "0"], ["--threshold", "0"]])
def test_usage_errors(tmp_path, flags, capsys):
    assert main(["train", "--out", str(tmp_path / "x"), *flags]) == 2
    assert "error" in capsys.readouterr().err


def test_argparse_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--episodes", "many"])
    assert exc.value.code == 2


def test_reference_parameter_flags(tmp_path):
    out = tmp_path / "p"
    code = main(
        ["train", "--actions=-30,-20,-10,-3,-1,0,1,3,10,20,30", "--threshold", "1.2", "--flow-bound", "20",
         "--episodes", "5", "--out", str(out)]
    )
    assert code == 0


def test_workers_do_not_change_csv(tmp_path):
    _, one = train(tmp_path, "w1", "--workers", "1", "--deposit-interval", "10")
    _, four = train(tmp_path, "w4", "--workers", "4", "--deposit-interval", "10")
    assert (one / "episodes.csv").read_bytes() == (four / "episodes.csv").read_bytes()
    assert (one / "knowledge.txt").read_bytes() == (four / "knowledge.txt").read_bytes()


def test_manifest_reproduces_run(tmp_path):
    _, first = train(tmp_path, "a", "--alpha-schedule", "inverse_count", "--no-transfer")
    again = tmp_path / "b"
    assert main(["train", "--config", str(first / "manifest.json"), "--out", str(again)]) == 0
    assert (first / "episodes.csv").read_bytes() == (again / "episodes.csv").read_bytes()


def test_deterministic_flow_file(tmp_path):
    flows = tmp_path / "flows.txt"
    flows.write_text("\n".join(",".join(["1", "-1"] * 11 + ["0"]) for _ in range(2)) + "\n")
    out = tmp_path / "d"
    code = main(["train", "--stations", "2", "--episodes", "3", SMALL, "--flow-mode", "deterministic",
                 "--flow-file", str(flows), "--out", str(out)])
    assert code == 0
    assert main(["train", "--flow-mode", "deterministic", "--out", str(out)]) == 2


def test_benchmark_with_knowledge(tmp_path, capsys):
    _, donor = train(tmp_path, "donor")
    out = tmp_path / "bench"
    code = main(["benchmark", "--stations", "3", "--episodes", "40", "--seed", "7", SMALL,
                 "--knowledge", str(donor / "knowledge.txt"), "--first-n", "10", "--out", str(out)])
    assert code == 0
    text = (out / "transfer.txt").read_text()
    for key in ("R=", "jumpstart=", "complete_success_naive=", "complete_success_experienced=", "cost_naive["):
        assert key in text
    assert len(read_csv(out / "naive_episodes.csv")) == 41
    assert len(read_csv(out / "experienced_episodes.csv")) == 41


def test_benchmark_self_check(tmp_path):
    out = tmp_path / "self"
    assert main(["benchmark", "--episodes", "30", SMALL, "--self-check", "--out", str(out)]) == 0
    lines = dict(line.split("=", 1) for line in (out / "transfer.txt").read_text().splitlines()[:8])
    assert float(lines["R"]) == 0.0
    assert float(lines["jumpstart"]) == 0.0


def test_benchmark_raw_ratio_sign(tmp_path):
    _, donor = train(tmp_path, "donor")
    ratios = []
    for extra in ([], ["--raw-ratio"]):
        out = tmp_path / f"b{len(extra)}"
        argv = ["benchmark", "--episodes", "40", "--seed", "7", SMALL, "--knowledge", str(donor / "knowledge.txt")]
        assert main([*argv, "--out", str(out), *extra]) == 0
        ratios.append(float((out / "transfer.txt").read_text().splitlines()[0].split("=")[1]))
    # areas here are negative, so the raw formula flips the sign
    assert ratios[1] == -ratios[0]


def test_benchmark_needs_knowledge(tmp_path):
    assert main(["benchmark", "--episodes", "5", "--out", str(tmp_path / "x")]) == 2


def test_benchmark_incompatible_knowledge(tmp_path, capsys):
    path = tmp_path / "k.txt"
    save_knowledge(QTable((-1, 0, 1)), path)
    assert main(["benchmark", "--episodes", "5", SMALL, "--knowledge", str(path), "--out", str(tmp_path / "x")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_export_round_trip(tmp_path):
    _, run = train(tmp_path, "a")
    src = run / "knowledge.txt"
    dst = tmp_path / "copy.txt"
    assert main(["export", str(src), "--out", str(dst)]) == 0
    assert src.read_bytes() == dst.read_bytes()


def test_inspect_empty(tmp_path, capsys):
    path = tmp_path / "empty.txt"
    save_knowledge(QTable((-1, 0, 1)), path, 0.9)
    assert main(["inspect", str(path)]) == 0
    out = capsys.readouterr().out
    assert "states=0" in out and "actions=-1,0,1" in out


def test_inspect_corrupted_row(tmp_path, capsys):
    _, run = train(tmp_path, "a")
    lines = (run / "knowledge.txt").read_text().splitlines(keepends=True)
    lines[6] = "7,oops\n"
    bad = tmp_path / "bad.txt"
    bad.write_text("".join(lines))
    assert main(["inspect", str(bad)]) == 1
    assert "line 7" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bikerebalance", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()


def test_defaults_follow_the_reference_experiment():
    args = build_parser().parse_args(["train"])
    assert tuple(args.actions) == (-30, -20, -10, -3, -1, 0, 1, 3, 10, 20, 30)
    assert (args.stations, args.threshold, args.flow_bound, args.deposit_interval) == (3, 1.2, 20, 100)
    assert args.episodes == 10_000 and not args.no_transfer
