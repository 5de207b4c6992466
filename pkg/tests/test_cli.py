import csv
import json

import pytest

from qssense import cli
from qssense.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, Sweep, expand, fmt, point_seed, run


def read(path):
    return path.read_bytes()


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


DQSS = ["dqss", "--nq", "3", "--t2-ms", "50", "--b-khz", "sweep:0.1:2:log:3", "--sample", "0"]


def test_sweep_grammar():
    s = Sweep.parse("sweep:1:100:log:3")
    assert s.values() == pytest.approx([1.0, 10.0, 100.0])
    assert Sweep.parse("sweep:0:1:lin:5").values() == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])
    for bad in ("sweep:1:2:cubic:3", "sweep:1:2:lin", "sweep:0:1:log:3", "sweep:1:2:lin:0", "sweep:a:2:lin:2"):
        with pytest.raises(ValueError):
            Sweep.parse(bad)


def test_sweeps_expand_to_cartesian_product():
    pts = expand({"a": Sweep(1, 2, "lin", 2), "b": Sweep(1, 3, "lin", 3), "c": 7})
    assert [(p["a"], p["b"]) for p in pts] == [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]
    assert all(p["c"] == 7 for p in pts)


def test_point_seeds_distinct_and_stable():
    seeds = [point_seed(7, i) for i in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [point_seed(7, i) for i in range(50)]
    assert point_seed(8, 0) != seeds[0]


def test_number_format():
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(True) == "1" and fmt(None) == "" and fmt(12) == "12"


def test_dqss_sweep_outputs(tmp_path):
    assert run(DQSS + ["--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    table = rows(tmp_path / "dqss.csv")
    assert [r["b_khz"] for r in table] == ["0.1", "0.4472135955", "2"]
    assert {"B_khz", "T2_ms", "n_Q", "N_G", "B_R0_khz", "I_mean", "I_var"} <= set(table[0])
    records = [json.loads(line) for line in (tmp_path / "dqss.jsonl").read_text().splitlines()]
    assert [r["index"] for r in records] == [0, 1, 2]
    assert all(r["root_seed"] == 3 and r["config"]["nq"] == 3 for r in records)
    assert [r["seed"] for r in records] == [int(r["seed"]) for r in table]


def test_repeated_runs_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["conventional", "--trials", "4", "--signal-b-khz", "1.5", "--seed", "11"]
    assert run(argv + ["--out", str(a)]) == EXIT_OK
    assert run(argv + ["--out", str(b)]) == EXIT_OK
    for ext in ("csv", "jsonl"):
        assert read(a / f"conventional.{ext}") == read(b / f"conventional.{ext}")
    assert run(DQSS + ["--out", str(a)]) == EXIT_OK
    assert run(DQSS + ["--out", str(b)]) == EXIT_OK
    assert read(a / "dqss.csv") == read(b / "dqss.csv")


def test_parallel_matches_serial(tmp_path, monkeypatch):
    serial, parallel = tmp_path / "s", tmp_path / "p"
    assert run(DQSS + ["--out", str(serial), "--jobs", "1"]) == EXIT_OK
    monkeypatch.setenv(cli.JOBS_ENV, "2")
    assert run(DQSS + ["--out", str(parallel)]) == EXIT_OK
    assert read(serial / "dqss.csv") == read(parallel / "dqss.csv")
    assert read(serial / "dqss.jsonl") == read(parallel / "dqss.jsonl")


def test_config_errors_exit_two(tmp_path, capsys):
    assert run(["nonsense"]) == EXIT_CONFIG
    assert run(["dqss", "--b-khz", "sweep:1:2:bogus:3", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert run(["oracle", "--table", "012", "--out", str(tmp_path)]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["sweep", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    reg = tmp_path / "reg.json"
    reg.write_text(json.dumps({"n_Q": 2, "couplings_khz": [10.0]}))
    assert run(["dqss", "--register", str(reg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "qssense:" in capsys.readouterr().err


def test_failed_check_exits_three(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.KERNELS, "oracle", lambda params, seed: ({"ok": False}, {"ok": False}))
    assert run(["oracle", "--out", str(tmp_path)]) == EXIT_CHECK
    assert (tmp_path / "oracle.jsonl").exists()


def test_oracle_and_limits_verdicts(tmp_path):
    assert run(["oracle", "--n", "1", "--out", str(tmp_path)]) == EXIT_OK
    (row,) = rows(tmp_path / "oracle.csv")
    assert row["functions"] == "4" and row["ok"] == "1"
    assert run(["limits", "--check", "short-time", "--protocols", "5", "--samples", "200", "--seed", "7",
                "--out", str(tmp_path)]) == EXIT_OK
    record = json.loads((tmp_path / "limits.jsonl").read_text())
    assert record["verdicts"]["short-time"]["ok"] is True


def test_sweep_config_file(tmp_path):
    cfg = tmp_path / "sweep.json"
    cfg.write_text(json.dumps({"command": "conventional", "args": {"trials": 2, "f_hi_khz": "sweep:20:40:lin:2"}}))
    assert run(["sweep", str(cfg), "--out", str(tmp_path), "--seed", "5"]) == EXIT_OK
    table = rows(tmp_path / "sweep.csv")
    assert [r["f_hi_khz"] for r in table] == ["20", "40"]
