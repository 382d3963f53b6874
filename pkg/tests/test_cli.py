"""Command-line behaviour: exit codes, output files, printed results."""

import csv
import os

import pytest

from churnckpt.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from churnckpt.policy import PolicyParams, optimal_lambda

QUICK_CONFIG = """
[churn]
mtbf = 2h
population = 30

[job]
peers = 4
work = 20m

[overheads]
checkpoint = 5s
download = 10s

[policies]
policies = adaptive, fixed:5m

[run]
seeds = 2
"""


def write_config(tmp_path, text=QUICK_CONFIG, name="quick.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_writes_csvs_and_prints_a_table(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", config, "--out", str(out)]) == EXIT_OK

    captured = capsys.readouterr()
    assert "4 runs" in captured.out
    assert "adaptive" in captured.out and "fixed-300" in captured.out

    with open(out / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {r["policy"] for r in rows} == {"adaptive", "fixed-300"}

    with open(out / "summary.csv", newline="") as fh:
        summary = list(csv.DictReader(fh))
    assert [r["policy"] for r in summary] == ["adaptive", "fixed-300"]


def test_run_honours_the_out_env_var(tmp_path, monkeypatch):
    config = write_config(tmp_path)
    out = tmp_path / "from-env"
    monkeypatch.setenv("CHURNCKPT_OUT", str(out))
    assert main(["run", config]) == EXIT_OK
    assert (out / "runs.csv").exists()


def test_run_seed_override_shrinks_the_batch(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["run", config, "--out", str(tmp_path / "o"),
                 "--seeds", "1"]) == EXIT_OK
    assert "2 runs" in capsys.readouterr().out


def test_run_rejects_bad_flag_values(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["run", config, "--seeds", "0"]) == EXIT_CONFIG
    assert main(["run", config, "--jobs", "0"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_run_missing_config_is_an_io_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.ini")]) == EXIT_IO
    assert "cannot read config" in capsys.readouterr().err


def test_run_invalid_config_is_a_config_error(tmp_path, capsys):
    config = write_config(tmp_path, "[churn]\nmtbf = soon\n")
    assert main(["run", config]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_run_unwritable_out_is_an_io_error(tmp_path, capsys):
    config = write_config(tmp_path)
    blocked = tmp_path / "blocked"
    blocked.write_text("not a directory")
    assert main(["run", config, "--out", str(blocked)]) == EXIT_IO
    assert "I/O error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# policy eval
# ---------------------------------------------------------------------------

def test_policy_eval_prints_the_optimum(capsys):
    assert main(["policy", "eval", "--mtbf", "7200", "--k", "8",
                 "--v", "20", "--td", "50"]) == EXIT_OK
    out = capsys.readouterr().out
    expected = optimal_lambda(PolicyParams(
        failure_rate=1.0 / 7200.0, peers=8,
        checkpoint_cost=20.0, restore_cost=50.0))
    assert f"{expected.checkpoint_rate:.10g}" in out
    assert f"{expected.interval:.10g}" in out
    assert "feasibility" in out


def test_policy_eval_mu_and_mtbf_agree(capsys):
    main(["policy", "eval", "--mu", str(1.0 / 7200.0), "--k", "8",
          "--v", "20", "--td", "50"])
    from_mu = capsys.readouterr().out
    main(["policy", "eval", "--mtbf", "7200", "--k", "8",
          "--v", "20", "--td", "50"])
    assert capsys.readouterr().out == from_mu


def test_policy_eval_rejects_contradictory_flags(capsys):
    code = main(["policy", "eval", "--mu", "0.001", "--mtbf", "7200",
                 "--k", "8", "--v", "20", "--td", "50"])
    assert code == EXIT_CONFIG
    capsys.readouterr()


def test_policy_eval_rejects_bad_parameters(capsys):
    assert main(["policy", "eval", "--mtbf", "7200", "--k", "0",
                 "--v", "20", "--td", "50"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# trace stats
# ---------------------------------------------------------------------------

def test_trace_stats(tmp_path, capsys):
    trace = tmp_path / "sessions.trace"
    trace.write_text("# start,duration\n0,100\n10,300\n20,200\n")
    assert main(["trace", "stats", str(trace)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "sessions     : 3" in out
    assert "mean         : 200 s" in out
    assert "median       : 200 s" in out
    assert "implied rate : 0.005 /s" in out


def test_trace_stats_bad_row_is_a_config_error(tmp_path, capsys):
    trace = tmp_path / "bad.trace"
    trace.write_text("0,100\nnope\n")
    assert main(["trace", "stats", str(trace)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "trace error" in err and "bad.trace:2" in err


def test_trace_stats_missing_file_is_an_io_error(tmp_path, capsys):
    assert main(["trace", "stats", str(tmp_path / "absent.trace")]) == EXIT_IO
    assert "cannot read trace" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def test_unknown_command_exits_with_usage_error(capsys):
    assert main(["frobnicate"]) == EXIT_CONFIG
    capsys.readouterr()


def test_missing_required_flags_exit_with_usage_error(capsys):
    assert main(["policy", "eval", "--k", "8", "--v", "20", "--td", "50"]) \
        == EXIT_CONFIG
    capsys.readouterr()
