"""Batch experiment runner: scenarios × policies × seeds, paired reporting.

A scenario bundles a churn model, a job, true overheads, the policy list,
estimator settings, and seeds.  ``run_batch`` executes every (policy, seed)
combination — optionally across worker processes, since each run is an
isolated world — and ``summarize`` reduces the runs to one row per policy:
mean/stddev wall time plus the relative runtime of each fixed policy against
the adaptive one, *paired by seed* so both policies face the same churn
realization before averaging.

Runs that hit the wall-time or event cap are marked capped and excluded from
every mean (a ``RuntimeWarning`` says how many were dropped).
"""

from __future__ import annotations

import csv
import os
import statistics
import warnings
from dataclasses import dataclass, field
from multiprocessing import Pool

from .churn import ChurnSchedule, ingest_trace
from .job import (
    DEFAULT_MAX_EVENTS,
    AdaptivePolicy,
    AdaptiveSettings,
    FixedIntervalPolicy,
    JobSpec,
    Overheads,
    RunResult,
    run_job,
)
from .world import DEFAULT_STABILIZATION_PERIOD, SimWorld

__all__ = [
    "DEFAULT_FIXED_INTERVALS",
    "RunRecord",
    "ScenarioConfig",
    "SummaryRow",
    "emit_results",
    "relative_runtime",
    "run_batch",
    "run_one",
    "summarize",
]

DEFAULT_FIXED_INTERVALS = (60.0, 300.0, 900.0, 1800.0, 3600.0)
DEFAULT_WORK_REQUIRED = 8.0 * 3600.0
DEFAULT_SEED_COUNT = 30

RUNS_HEADER = ("scenario", "policy", "seed", "wall_time_s", "checkpoints",
               "restarts", "mean_interval_s", "mu_hat", "v_hat", "td_hat", "capped")
SUMMARY_HEADER = ("scenario", "policy", "mean_wall_time_s", "stddev_s",
                  "relative_runtime_pct", "n")

ADAPTIVE_ID = "adaptive"


def policy_id(policy: FixedIntervalPolicy | AdaptivePolicy) -> str:
    if isinstance(policy, AdaptivePolicy):
        return ADAPTIVE_ID
    if policy.interval is None:
        return "fixed-none"
    return f"fixed-{policy.interval:g}"


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment: a world recipe plus everything run_job needs."""

    scenario_id: str
    base_rate: float = 0.0  # per-peer departure rate; ignored when a trace is set
    doubling_period: float | None = None
    trace_path: str | None = None
    population: int = 1000
    degree: int = 4
    stabilization_period: float = DEFAULT_STABILIZATION_PERIOD
    peers: int = 8
    work_required: float = DEFAULT_WORK_REQUIRED
    checkpoint_cost: float = 20.0
    restore_cost: float = 50.0
    policies: tuple[FixedIntervalPolicy | AdaptivePolicy, ...] = (
        AdaptivePolicy(),
    ) + tuple(FixedIntervalPolicy(v) for v in DEFAULT_FIXED_INTERVALS)
    estimator: AdaptiveSettings = field(default_factory=AdaptiveSettings)
    seeds: tuple[int, ...] = tuple(range(DEFAULT_SEED_COUNT))
    max_wall_time: float | None = None  # None = the runner's default cap
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self) -> None:
        if not self.scenario_id:
            raise ValueError("scenario_id must be non-empty")
        if not self.policies:
            raise ValueError("at least one policy is required")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(policy_id(p) for p in self.policies)) != len(self.policies):
            raise ValueError("duplicate policies in scenario")
        for label in ("work_required", "checkpoint_cost", "restore_cost"):
            value = getattr(self, label)
            if value < 0.0 or (label == "work_required" and value == 0.0):
                raise ValueError(f"{label} must be positive, got {value!r}")

    def schedule(self) -> ChurnSchedule:
        if self.trace_path is not None:
            return ChurnSchedule(trace=ingest_trace(self.trace_path))
        return ChurnSchedule(base_rate=self.base_rate,
                             doubling_period=self.doubling_period)


@dataclass(frozen=True)
class RunRecord:
    """One CSV row of runs.csv: scenario/policy/seed plus the run's outputs."""

    scenario: str
    policy: str
    seed: int
    result: RunResult


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    policy: str
    mean_wall_time: float | None  # None when every run was capped
    stddev: float | None
    relative_runtime_pct: float | None  # None for the adaptive row's absence
    n: int  # uncapped runs (pairs, for fixed-vs-adaptive rows)


def relative_runtime(fixed_wall_time: float, adaptive_wall_time: float) -> float:
    """How much longer the fixed policy ran, as a percentage (>100 means the
    adaptive scheme won)."""
    if not (fixed_wall_time > 0.0 and adaptive_wall_time > 0.0):
        raise ValueError("wall times must be > 0")
    return 100.0 * fixed_wall_time / adaptive_wall_time


def run_one(
    scenario: ScenarioConfig,
    policy: FixedIntervalPolicy | AdaptivePolicy,
    seed: int,
    schedule: ChurnSchedule | None = None,
) -> RunRecord:
    """Execute a single (scenario, policy, seed) simulation."""
    if schedule is None:
        schedule = scenario.schedule()
    world = SimWorld(
        population=scenario.population,
        degree=scenario.degree,
        schedule=schedule,
        seed=seed,
        stabilization_period=scenario.stabilization_period,
    )
    if isinstance(policy, AdaptivePolicy):
        policy = AdaptivePolicy(settings=scenario.estimator)
    result = run_job(
        world,
        JobSpec(peers=scenario.peers, work_required=scenario.work_required),
        policy,
        Overheads(checkpoint_cost=scenario.checkpoint_cost,
                  restore_cost=scenario.restore_cost),
        max_wall_time=scenario.max_wall_time,
        max_events=scenario.max_events,
    )
    return RunRecord(scenario=scenario.scenario_id, policy=policy_id(policy),
                     seed=seed, result=result)


def _run_task(task: tuple[ScenarioConfig, FixedIntervalPolicy | AdaptivePolicy,
                          int, ChurnSchedule]) -> RunRecord:
    scenario, policy, seed, schedule = task
    return run_one(scenario, policy, seed, schedule)


def run_batch(
    scenarios: ScenarioConfig | list[ScenarioConfig],
    jobs: int = 1,
) -> tuple[list[RunRecord], list[SummaryRow]]:
    """Run every (scenario, policy, seed) combination and summarize.

    ``jobs`` > 1 fans the independent simulations out over worker processes;
    results are identical either way because each run is self-contained and
    the merge order is fixed by the task list.
    """
    if isinstance(scenarios, ScenarioConfig):
        scenarios = [scenarios]
    tasks = []
    for scenario in scenarios:
        schedule = scenario.schedule()  # ingest any trace exactly once
        for policy in scenario.policies:
            for seed in scenario.seeds:
                tasks.append((scenario, policy, seed, schedule))

    if jobs > 1 and len(tasks) > 1:
        with Pool(processes=jobs) as pool:
            records = pool.map(_run_task, tasks, chunksize=1)
    else:
        records = [_run_task(task) for task in tasks]

    records.sort(key=lambda r: (r.scenario, r.policy, r.seed))
    return records, summarize(records)


def summarize(records: list[RunRecord]) -> list[SummaryRow]:
    """One row per (scenario, policy): means over uncapped runs, fixed-policy
    relative runtime paired by seed against the adaptive runs."""
    capped = sum(1 for r in records if r.result.capped)
    if capped:
        warnings.warn(
            f"{capped} capped run(s) excluded from summary means",
            RuntimeWarning, stacklevel=2)

    by_key: dict[tuple[str, str], list[RunRecord]] = {}
    for record in records:
        by_key.setdefault((record.scenario, record.policy), []).append(record)

    rows: list[SummaryRow] = []
    for (scenario, policy), group in sorted(by_key.items()):
        ok = [r for r in group if not r.result.capped]
        walls = [r.result.wall_time for r in ok]
        mean = statistics.fmean(walls) if walls else None
        stddev = statistics.stdev(walls) if len(walls) >= 2 else (0.0 if walls else None)

        adaptive_walls = {
            r.seed: r.result.wall_time
            for r in by_key.get((scenario, ADAPTIVE_ID), [])
            if not r.result.capped
        }
        if policy == ADAPTIVE_ID:
            relative = 100.0 if walls else None
            n = len(walls)
        elif adaptive_walls:
            pairs = [
                relative_runtime(r.result.wall_time, adaptive_walls[r.seed])
                for r in ok
                if r.seed in adaptive_walls
            ]
            relative = statistics.fmean(pairs) if pairs else None
            n = len(pairs)
        else:
            relative = None  # nothing to compare against
            n = len(walls)
        rows.append(SummaryRow(scenario=scenario, policy=policy,
                               mean_wall_time=mean, stddev=stddev,
                               relative_runtime_pct=relative, n=n))
    return rows


def _cell(value: float | int | str | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_results(
    records: list[RunRecord],
    summary: list[SummaryRow],
    out_dir: str,
) -> tuple[str, str]:
    """Write ``runs.csv`` and ``summary.csv`` under ``out_dir``.

    Deterministic row order and float formatting (shortest round-trip repr),
    LF line endings; rerunning the same batch reproduces the bytes exactly.
    Returns the two file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    runs_path = os.path.join(out_dir, "runs.csv")
    summary_path = os.path.join(out_dir, "summary.csv")

    try:
        with open(runs_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RUNS_HEADER)
            for record in sorted(records, key=lambda r: (r.scenario, r.policy, r.seed)):
                res = record.result
                writer.writerow([
                    record.scenario, record.policy, record.seed,
                    _cell(res.wall_time), res.checkpoints, res.restarts,
                    _cell(res.mean_interval), _cell(res.mu_hat),
                    _cell(res.v_hat), _cell(res.td_hat), _cell(res.capped),
                ])
        with open(summary_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_HEADER)
            for row in summary:
                writer.writerow([
                    row.scenario, row.policy, _cell(row.mean_wall_time),
                    _cell(row.stddev), _cell(row.relative_runtime_pct), row.n,
                ])
    except OSError as exc:
        raise OSError(f"cannot write results under {out_dir!r}: {exc}") from exc
    return runs_path, summary_path
