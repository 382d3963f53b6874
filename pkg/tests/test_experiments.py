"""Batch runner: pairing, capped-run handling, CSV determinism."""

import csv
import math
import warnings
from dataclasses import replace

import pytest

from churnckpt.experiments import (
    RunRecord,
    ScenarioConfig,
    SummaryRow,
    emit_results,
    policy_id,
    relative_runtime,
    run_batch,
    run_one,
    summarize,
)
from churnckpt.job import (
    AdaptivePolicy,
    AdaptiveSettings,
    FixedIntervalPolicy,
    RunResult,
)
from churnckpt.policy import PolicyParams, optimal_lambda


def small_scenario(**kw):
    defaults = dict(
        scenario_id="small",
        base_rate=1.0 / 7200.0,
        population=40,
        degree=4,
        peers=4,
        work_required=1800.0,
        checkpoint_cost=5.0,
        restore_cost=10.0,
        policies=(AdaptivePolicy(), FixedIntervalPolicy(300.0)),
        seeds=(0, 1, 2),
    )
    defaults.update(kw)
    return ScenarioConfig(**defaults)


def fake_result(wall, capped=False):
    return RunResult(wall_time=wall, checkpoints=3, restarts=1, capped=capped,
                     mean_interval=100.0, final_interval=100.0, mu_hat=1e-4,
                     mu_from_prior=False, v_hat=5.0, td_hat=10.0,
                     useful_seconds=wall, wasted_seconds=0.0,
                     checkpoint_seconds=0.0, restore_seconds=0.0, events=10,
                     saved_history=())


def record(policy, seed, wall, capped=False, scenario="s"):
    return RunRecord(scenario=scenario, policy=policy, seed=seed,
                     result=fake_result(wall, capped))


# ---------------------------------------------------------------------------
# configuration and identifiers
# ---------------------------------------------------------------------------

def test_policy_ids():
    assert policy_id(AdaptivePolicy()) == "adaptive"
    assert policy_id(FixedIntervalPolicy(300.0)) == "fixed-300"
    assert policy_id(FixedIntervalPolicy(1800.0)) == "fixed-1800"
    assert policy_id(FixedIntervalPolicy(None)) == "fixed-none"


@pytest.mark.parametrize(
    "kw",
    [
        dict(scenario_id=""),
        dict(policies=()),
        dict(seeds=()),
        dict(work_required=0.0),
        dict(checkpoint_cost=-1.0),
        dict(policies=(FixedIntervalPolicy(300.0), FixedIntervalPolicy(300.0))),
    ],
)
def test_bad_scenarios_rejected(kw):
    with pytest.raises(ValueError):
        small_scenario(**kw)


def test_relative_runtime():
    assert relative_runtime(110.0, 100.0) == pytest.approx(110.0)
    assert relative_runtime(90.0, 100.0) == pytest.approx(90.0)
    with pytest.raises(ValueError):
        relative_runtime(0.0, 100.0)


# ---------------------------------------------------------------------------
# summarize: pairing and capped-run exclusion
# ---------------------------------------------------------------------------

def test_summary_pairs_by_seed():
    records = [
        record("adaptive", 0, 1000.0), record("adaptive", 1, 2000.0),
        record("fixed-300", 0, 1500.0), record("fixed-300", 1, 2200.0),
    ]
    rows = {r.policy: r for r in summarize(records)}
    assert rows["adaptive"].relative_runtime_pct == 100.0
    assert rows["adaptive"].n == 2
    # per-seed ratios (150%, 110%) averaged -- not a ratio of the means
    assert rows["fixed-300"].relative_runtime_pct == pytest.approx(130.0)
    assert rows["fixed-300"].n == 2
    assert rows["fixed-300"].mean_wall_time == pytest.approx(1850.0)


def test_capped_runs_drop_out_with_a_warning():
    records = [
        record("adaptive", 0, 1000.0), record("adaptive", 1, 2000.0),
        record("fixed-300", 0, 1500.0),
        record("fixed-300", 1, 9999.0, capped=True),
    ]
    with pytest.warns(RuntimeWarning, match="1 capped"):
        rows = {r.policy: r for r in summarize(records)}
    assert rows["fixed-300"].mean_wall_time == pytest.approx(1500.0)
    assert rows["fixed-300"].relative_runtime_pct == pytest.approx(150.0)
    assert rows["fixed-300"].n == 1  # only the surviving pair


def test_capped_adaptive_seed_breaks_that_pair_only():
    records = [
        record("adaptive", 0, 1000.0),
        record("adaptive", 1, 2000.0, capped=True),
        record("fixed-300", 0, 1500.0), record("fixed-300", 1, 2200.0),
    ]
    with pytest.warns(RuntimeWarning):
        rows = {r.policy: r for r in summarize(records)}
    assert rows["adaptive"].n == 1
    # fixed means still use both runs, but only seed 0 can be paired
    assert rows["fixed-300"].mean_wall_time == pytest.approx(1850.0)
    assert rows["fixed-300"].relative_runtime_pct == pytest.approx(150.0)
    assert rows["fixed-300"].n == 1


def test_no_adaptive_policy_leaves_relative_blank():
    records = [record("fixed-300", 0, 1500.0), record("fixed-300", 1, 2200.0)]
    (row,) = summarize(records)
    assert row.relative_runtime_pct is None
    assert row.n == 2


def test_all_runs_capped_yields_empty_means():
    records = [record("adaptive", 0, 1000.0, capped=True)]
    with pytest.warns(RuntimeWarning):
        (row,) = summarize(records)
    assert row.mean_wall_time is None
    assert row.stddev is None
    assert row.relative_runtime_pct is None
    assert row.n == 0


# ---------------------------------------------------------------------------
# running batches
# ---------------------------------------------------------------------------

def test_run_batch_covers_the_grid_in_order():
    scenario = small_scenario()
    records, summary = run_batch(scenario)
    assert len(records) == 2 * 3
    keys = [(r.scenario, r.policy, r.seed) for r in records]
    assert keys == sorted(keys)
    assert {r.policy for r in records} == {"adaptive", "fixed-300"}
    assert all(not r.result.capped for r in records)
    assert {(r.scenario, r.policy) for r in summary} == {
        ("small", "adaptive"), ("small", "fixed-300")}


def test_parallel_batch_matches_serial():
    scenario = small_scenario(seeds=(0, 1))
    serial, _ = run_batch(scenario, jobs=1)
    parallel, _ = run_batch(scenario, jobs=2)
    assert [(r.policy, r.seed, r.result) for r in serial] == \
           [(r.policy, r.seed, r.result) for r in parallel]


def test_adaptive_runs_use_the_scenario_estimator():
    settings = AdaptiveSettings(prior_rate=1.0 / 3600.0)
    scenario = small_scenario(base_rate=0.0, policies=(AdaptivePolicy(),),
                              seeds=(0,), estimator=settings)
    rec = run_one(scenario, scenario.policies[0], 0)
    # no churn: estimates never leave the configured prior
    assert rec.result.mu_from_prior
    assert rec.result.mu_hat == settings.prior_rate


def test_quiet_world_wall_times_are_exact():
    # Without churn every policy's wall time is work + checkpoints * cost,
    # which pins down the whole pipeline end to end.
    scenario = small_scenario(base_rate=0.0, seeds=(0,),
                              work_required=3600.0, checkpoint_cost=5.0)
    records, summary = run_batch(scenario)
    by_policy = {r.policy: r.result for r in records}
    fixed = by_policy["fixed-300"]
    assert fixed.wall_time == 3600.0 + 11 * 5.0  # final segment needs no save
    adaptive = by_policy["adaptive"]
    expected = optimal_lambda(PolicyParams(
        failure_rate=scenario.estimator.prior_rate, peers=4,
        checkpoint_cost=5.0, restore_cost=10.0))
    assert adaptive.final_interval == expected.interval
    rows = {r.policy: r for r in summary}
    assert rows["fixed-300"].relative_runtime_pct == pytest.approx(
        100.0 * fixed.wall_time / adaptive.wall_time)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def test_emit_results_round_trips(tmp_path):
    scenario = small_scenario(seeds=(0, 1))
    records, summary = run_batch(scenario)
    runs_path, summary_path = emit_results(records, summary, str(tmp_path))

    with open(runs_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(records)
    for row, rec in zip(rows, records):
        assert row["scenario"] == rec.scenario
        assert row["policy"] == rec.policy
        assert int(row["seed"]) == rec.seed
        assert float(row["wall_time_s"]) == rec.result.wall_time
        assert int(row["checkpoints"]) == rec.result.checkpoints
        assert row["capped"] == "false"

    with open(summary_path, newline="") as fh:
        srows = list(csv.DictReader(fh))
    assert [r["policy"] for r in srows] == ["adaptive", "fixed-300"]
    assert float(srows[0]["relative_runtime_pct"]) == 100.0


def test_reruns_are_byte_identical(tmp_path):
    scenario = small_scenario(seeds=(0, 1))
    first = tmp_path / "a"
    second = tmp_path / "b"
    emit_results(*run_batch(scenario, jobs=1), str(first))
    emit_results(*run_batch(scenario, jobs=2), str(second))
    assert (first / "runs.csv").read_bytes() == (second / "runs.csv").read_bytes()
    assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()


def test_empty_batch_emits_headers_only(tmp_path):
    runs_path, summary_path = emit_results([], [], str(tmp_path))
    assert open(runs_path).read() == (
        "scenario,policy,seed,wall_time_s,checkpoints,restarts,"
        "mean_interval_s,mu_hat,v_hat,td_hat,capped\n")
    assert open(summary_path).read() == (
        "scenario,policy,mean_wall_time_s,stddev_s,relative_runtime_pct,n\n")


def test_none_cells_are_blank(tmp_path):
    row = SummaryRow(scenario="s", policy="fixed-300", mean_wall_time=None,
                     stddev=None, relative_runtime_pct=None, n=0)
    _, summary_path = emit_results([], [row], str(tmp_path))
    lines = open(summary_path).read().splitlines()
    assert lines[1] == "s,fixed-300,,,,0"


def test_unwritable_out_dir_raises_oserror(tmp_path):
    target = tmp_path / "blocked"
    target.write_text("a file, not a directory")
    with pytest.raises(OSError):
        emit_results([], [], str(target))
