"""Parallel-job execution over a churning world, with pluggable
checkpoint-interval policies.

A job occupies ``k`` seats of the world's overlay.  Work accrues at rate 1
while every participant is up.  A checkpoint freezes the job for the true
checkpoint cost, then commits atomically; any participant departure rolls the
job back to its last commit, pays the restore cost, and replaces the lost
peer with a random non-participant seat.  A failure mid-checkpoint loses the
in-flight image; a failure mid-restore restarts the restore from scratch.

Two policies:

- :class:`FixedIntervalPolicy` checkpoints every ``interval`` work-seconds
  (``None`` disables checkpointing);
- :class:`AdaptivePolicy` re-derives the interval from live estimates — the
  sliding-window failure rate, a checkpoint-cost estimate, and a restore-cost
  estimate — at every commit and every completed restore, picking the rate
  that maximises expected cycle utilization.

Checkpoint-cost estimation modes (``AdaptiveSettings.cost_method``):

- ``"measured"`` (default): each commit's own duration is the estimate.  The
  job starts from a cost of zero, which the policy clamps to its most
  aggressive allowed rate, so the first commit lands within seconds and real
  measurements take over immediately.
- ``"calibration-product"`` / ``"calibration-ratio"``: a two-phase prologue
  (no checkpoints for ``calibration_seconds``, then an eighth-of-a-phase
  bootstrap interval for another phase) feeds throughput and message-count
  drops into the corresponding slowdown formula, after which the estimate is
  frozen.  If the prologue yields nothing usable (e.g. churn destroyed every
  bootstrap cycle), the last measured commit duration is used instead.

All accounting buckets use compensated (Kahan) summation so the conservation
identity — wall time equals running + checkpointing + restoring seconds —
holds to well below a microsecond even over multi-year simulated spans.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .estimators import (
    DEFAULT_PRIOR_RATE,
    DEFAULT_WINDOW_CAPACITY,
    CalibrationError,
    CalibrationRecord,
    EstimatorState,
    LifetimeWindow,
    aggregate_global,
    estimate_checkpoint_overhead,
    update_download_time,
)
from .policy import PolicyParams, optimal_lambda
from .world import DEATH, JOB, STABILIZE, SimWorld

__all__ = [
    "AdaptivePolicy",
    "AdaptiveSettings",
    "DEFAULT_MAX_EVENTS",
    "FixedIntervalPolicy",
    "JobSpec",
    "Overheads",
    "RunResult",
    "WALL_CAP_FACTOR",
    "run_job",
]

# Runaway guard: under accelerating churn an infeasible run can generate
# events far faster than wall time advances, so the wall cap alone is not
# enough to terminate it in reasonable real time.
DEFAULT_MAX_EVENTS = 2_000_000
WALL_CAP_FACTOR = 50.0

RUNNING = "running"
CHECKPOINTING = "checkpointing"
RESTORING = "restoring"

DEFAULT_CALIBRATION_SECONDS = 120.0
DEFAULT_FRESHNESS_PERIODS = 10.0


@dataclass(frozen=True)
class JobSpec:
    """What the job needs: ``peers`` participants for ``work_required``
    fault-free seconds."""

    peers: int
    work_required: float

    def __post_init__(self) -> None:
        if not (isinstance(self.peers, int) and self.peers >= 1):
            raise ValueError(f"peers must be a positive integer, got {self.peers!r}")
        if not (math.isfinite(self.work_required) and self.work_required > 0.0):
            raise ValueError(f"work_required must be > 0, got {self.work_required!r}")


@dataclass(frozen=True)
class Overheads:
    """Ground-truth per-operation costs paid inside the simulation."""

    checkpoint_cost: float  # seconds per checkpoint (V)
    restore_cost: float  # seconds per image download (T_d)

    def __post_init__(self) -> None:
        for label in ("checkpoint_cost", "restore_cost"):
            value = getattr(self, label)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{label} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class FixedIntervalPolicy:
    """Checkpoint every ``interval`` work-seconds; ``None`` never checkpoints."""

    interval: float | None

    def __post_init__(self) -> None:
        if self.interval is not None and not self.interval > 0.0:
            raise ValueError(f"interval must be > 0 or None, got {self.interval!r}")


@dataclass(frozen=True)
class AdaptiveSettings:
    """Knobs of the online estimation pipeline."""

    window: int = DEFAULT_WINDOW_CAPACITY  # failure observations kept per peer
    calibration_seconds: float = DEFAULT_CALIBRATION_SECONDS  # per prologue phase
    exchange_every: int = 1  # commits between piggyback exchanges
    prior_rate: float = DEFAULT_PRIOR_RATE  # failure rate before any observation
    cost_method: str = "measured"
    freshness_periods: float = DEFAULT_FRESHNESS_PERIODS  # staleness horizon, in intervals

    def __post_init__(self) -> None:
        if self.cost_method not in ("measured", "calibration-product", "calibration-ratio"):
            raise ValueError(f"unknown cost_method {self.cost_method!r}")
        if not (isinstance(self.window, int) and self.window >= 1):
            raise ValueError(f"window must be a positive integer, got {self.window!r}")
        if not self.calibration_seconds > 0.0:
            raise ValueError("calibration_seconds must be > 0")
        if not (isinstance(self.exchange_every, int) and self.exchange_every >= 1):
            raise ValueError("exchange_every must be a positive integer")
        if not self.prior_rate > 0.0:
            raise ValueError("prior_rate must be > 0")
        if not self.freshness_periods > 0.0:
            raise ValueError("freshness_periods must be > 0")


@dataclass(frozen=True)
class AdaptivePolicy:
    """Re-derive the checkpoint interval online from estimator outputs."""

    settings: AdaptiveSettings = field(default_factory=AdaptiveSettings)


@dataclass(frozen=True)
class RunResult:
    """Everything one simulated run produced."""

    wall_time: float
    checkpoints: int
    restarts: int
    capped: bool
    mean_interval: float | None  # mean committed cycle length
    final_interval: float | None  # interval in force at the end (None = disabled)
    mu_hat: float  # failure-rate estimate the run ended with
    mu_from_prior: bool  # True if no failure was ever observed
    v_hat: float | None  # checkpoint-cost estimate (None = never estimated)
    td_hat: float | None  # restore-cost estimate (None = never estimated)
    useful_seconds: float  # running seconds that survived to the end
    wasted_seconds: float  # running seconds destroyed by rollbacks
    checkpoint_seconds: float
    restore_seconds: float
    events: int  # world events processed
    saved_history: tuple[tuple[float, float], ...]  # (commit time, saved progress)

    @property
    def work_seconds(self) -> float:
        return self.useful_seconds + self.wasted_seconds


class _Acc:
    """Kahan-compensated accumulator: float sums stay exact to ~1 ulp."""

    __slots__ = ("_sum", "_c")

    def __init__(self) -> None:
        self._sum = 0.0
        self._c = 0.0

    def add(self, x: float) -> None:
        y = x - self._c
        t = self._sum + y
        self._c = (t - self._sum) - y
        self._sum = t

    @property
    def value(self) -> float:
        return self._sum


class _JobRun:
    def __init__(
        self,
        world: SimWorld,
        job: JobSpec,
        policy: FixedIntervalPolicy | AdaptivePolicy,
        overheads: Overheads,
        max_wall_time: float,
        max_events: int,
    ) -> None:
        self.world = world
        self.job = job
        self.policy = policy
        self.true_cost = overheads
        self.max_wall_time = max_wall_time
        self.max_events = max_events

        self.adaptive = isinstance(policy, AdaptivePolicy)
        self.settings = policy.settings if self.adaptive else AdaptiveSettings()

        self.rng = random.Random(f"{world.seed}:job")

        seats = self.rng.sample(range(world.population), job.peers)
        self.seat_of_rank: list[int] = list(seats)
        self.rank_of_seat: dict[int, int] = {s: r for r, s in enumerate(seats)}
        for seat in seats:
            world.start_observing(seat)

        self.states = [
            EstimatorState(window=LifetimeWindow(capacity=self.settings.window),
                           prior_rate=self.settings.prior_rate)
            for _ in range(job.peers)
        ]

        # accounting
        self.saved = 0.0
        self.work_since = 0.0  # uncommitted work, excluding the open segment
        self.work = _Acc()  # every running second
        self.ckpt = _Acc()
        self.restore = _Acc()
        self.wasted = _Acc()  # running seconds destroyed by rollbacks
        self.checkpoints = 0
        self.restarts = 0
        self.cycle_sum = 0.0
        self.saved_history: list[tuple[float, float]] = []

        self.epoch = 0
        self.phase = RUNNING
        self.phase_start = 0.0
        self.finished = False
        self.capped = False
        self.wall = 0.0

        # estimation bookkeeping
        self.first_commit_seen = False
        self.bg_measure_scheduled = False
        self.last_commit_duration: float | None = None
        self.commits_since_exchange = 0
        self.last_aggregate: tuple[float, float, float] | None = None

        # adaptive driver
        if not self.adaptive:
            self.mode = "fixed"
            self.interval: float | None = policy.interval
        elif self.settings.cost_method == "measured":
            self.mode = "steady"
            self.interval = None
            self._recompute_interval(0.0)
        else:
            self.mode = "cal1"
            self.interval = None
            t = self.settings.calibration_seconds
            self.cal1_running = 0.0
            self.cal2_start = 0.0
            self.cal2_run_mark = 0.0
            self.commits_in_cal2 = 0
            self._schedule(t, "cal1_end", epoch=None)
            self._schedule(2.0 * t, "cal2_end", epoch=None)

        self._enter_running(0.0)

    # -- scheduling helpers ----------------------------------------------

    def _schedule(self, time: float, kind: str, epoch: int | None) -> None:
        self.world.schedule_event(time, JOB, (kind, epoch))

    def _running_seconds(self, now: float) -> float:
        open_segment = now - self.phase_start if self.phase == RUNNING else 0.0
        return self.work.value + open_segment

    def _enter_running(self, now: float) -> None:
        self.phase = RUNNING
        self.phase_start = now
        self._schedule_work_boundary(now)

    def _schedule_work_boundary(self, now: float, *, fresh_cycle: bool = False) -> None:
        """Schedule whichever comes first: job completion or checkpoint start.

        ``work_since`` may already hold uncommitted work (after a
        mid-cycle interval change), so the next checkpoint normally fires
        after the *remainder* of the interval; ``fresh_cycle`` instead grants
        a full interval of new work (used when the calibration bootstrap
        starts, so its throughput window sees evenly spaced checkpoints).
        """
        pending = self.work_since
        remaining = self.job.work_required - self.saved - pending
        interval = self.interval
        if interval is None or math.isinf(interval):
            self._schedule(now + remaining, "done", self.epoch)
            return
        to_checkpoint = interval if fresh_cycle else max(interval - pending, 0.0)
        if remaining <= to_checkpoint:
            self._schedule(now + remaining, "done", self.epoch)
        else:
            self._schedule(now + to_checkpoint, "ckpt", self.epoch)

    def _close_running_segment(self, now: float) -> None:
        dt = now - self.phase_start
        self.work.add(dt)
        self.work_since += dt
        self.phase_start = now

    # -- event handlers ----------------------------------------------------

    def on_death(self, now: float, seat: int) -> None:
        if seat not in self.rank_of_seat:
            return
        rank = self.rank_of_seat.pop(seat)

        if self.phase == RUNNING:
            self._close_running_segment(now)
            self.wasted.add(self.work_since)
            self.work_since = 0.0
        elif self.phase == CHECKPOINTING:
            self.ckpt.add(now - self.phase_start)
            self.wasted.add(self.work_since)  # the in-flight image is lost too
            self.work_since = 0.0
        else:  # a failure mid-restore restarts the restore
            self.restore.add(now - self.phase_start)

        self.epoch += 1
        self.restarts += 1

        while True:  # replacement: a random non-participant seat
            candidate = self.rng.randrange(self.world.population)
            if candidate not in self.rank_of_seat:
                break
        self.rank_of_seat[candidate] = rank
        self.seat_of_rank[rank] = candidate
        self.world.start_observing(candidate)

        self.phase = RESTORING
        self.phase_start = now
        self._schedule(now + self.true_cost.restore_cost, "restored", self.epoch)

    def on_stabilize(self, _now: float) -> None:
        for seat, rank in self.rank_of_seat.items():
            for _pid, lifetime in self.world.detect_failures(seat):
                if lifetime > 0.0:
                    self.states[rank].observe_lifetime(lifetime)

    def dispatch(self, now: float, kind: str, epoch: int | None) -> None:
        if epoch is not None and epoch != self.epoch:
            return  # belongs to a timeline a failure already tore down
        handler = getattr(self, f"_on_{kind}")
        handler(now)

    def _on_ckpt(self, now: float) -> None:
        self._close_running_segment(now)
        self.phase = CHECKPOINTING
        self._schedule(now + self.true_cost.checkpoint_cost, "commit", self.epoch)

    def _on_commit(self, now: float) -> None:
        duration = now - self.phase_start
        self.ckpt.add(duration)
        self.last_commit_duration = duration
        self.saved += self.work_since
        self.cycle_sum += self.work_since
        self.work_since = 0.0
        self.checkpoints += 1
        self.saved_history.append((now, self.saved))

        if self.mode in ("fixed", "steady") and self.settings.cost_method == "measured":
            for st in self.states:
                st.set_checkpoint_cost(duration)
        if not self.first_commit_seen:
            self.first_commit_seen = True
            for st in self.states:
                if st.restore_cost is None and st.checkpoint_cost is not None:
                    update_download_time(st, "init")
        if not self.bg_measure_scheduled and self.true_cost.restore_cost > 0.0:
            # first image exists now; fetch it once in the background to
            # learn the real download time
            self.bg_measure_scheduled = True
            self._schedule(now + self.true_cost.restore_cost, "bg_measure", None)

        if self.mode == "cal2":
            self.commits_in_cal2 += 1
        if self.adaptive and self.mode == "steady":
            self.commits_since_exchange += 1
            if self.commits_since_exchange >= self.settings.exchange_every:
                self._exchange(now)
                self.commits_since_exchange = 0
            self._recompute_interval(now)

        self._enter_running(now)

    def _on_restored(self, now: float) -> None:
        duration = now - self.phase_start
        self.restore.add(duration)
        for st in self.states:
            if duration > 0.0:
                update_download_time(st, "restart", duration)
            else:
                st.restore_cost = 0.0
        if self.adaptive and self.mode == "steady":
            self._exchange(now)
            self.commits_since_exchange = 0
            self._recompute_interval(now)
        self._enter_running(now)

    def _on_bg_measure(self, now: float) -> None:
        for st in self.states:
            update_download_time(st, "background", self.true_cost.restore_cost)

    def _on_done(self, now: float) -> None:
        self._close_running_segment(now)
        self.finished = True
        self.wall = now

    # -- calibration prologue ---------------------------------------------

    def _on_cal1_end(self, now: float) -> None:
        if self.finished:
            return
        self.cal1_running = self._running_seconds(now)
        self.mode = "cal2"
        self.cal2_start = now
        self.cal2_run_mark = self.cal1_running
        self.commits_in_cal2 = 0
        self.interval = self.settings.calibration_seconds / 8.0
        self._apply_interval_now(now, fresh_cycle=True)

    def _on_cal2_end(self, now: float) -> None:
        if self.finished or self.mode != "cal2":
            return
        if self.commits_in_cal2 == 0:
            # churn ate every bootstrap cycle; stretch the phase and retry
            self._schedule(now + self.settings.calibration_seconds, "cal2_end", None)
            return
        t = self.settings.calibration_seconds
        span2 = now - self.cal2_start
        p1 = self.cal1_running / t
        p2 = (self._running_seconds(now) - self.cal2_run_mark) / span2
        method = {"calibration-product": "product",
                  "calibration-ratio": "ratio-average"}[self.settings.cost_method]
        try:
            record = CalibrationRecord(
                cpu_before=p1, cpu_after=p2,
                messages_before=p1 * t, messages_after=p2 * t,
                phase_seconds=t, checkpoints=self.commits_in_cal2)
            v_hat = estimate_checkpoint_overhead(record, method)
        except (CalibrationError, ValueError):
            v_hat = self.last_commit_duration  # calibration unusable; fall back
        if v_hat is None:
            v_hat = 0.0
        for st in self.states:
            st.set_checkpoint_cost(v_hat)
            if st.restore_cost is None:
                update_download_time(st, "init")
        self.mode = "steady"
        self._exchange(now)
        self._recompute_interval(now)
        self._apply_interval_now(now)

    def _apply_interval_now(self, now: float, *, fresh_cycle: bool = False) -> None:
        """Make a mid-cycle interval change take effect immediately."""
        if self.phase == RUNNING:
            self.epoch += 1  # orphan the boundary scheduled under the old interval
            self._close_running_segment(now)
            self._schedule_work_boundary(now, fresh_cycle=fresh_cycle)
        # otherwise the new interval is picked up at the next _enter_running

    # -- adaptive recomputation ---------------------------------------------

    def _exchange(self, now: float) -> None:
        bundles = [st.bundle(origin=rank, stamp=now)
                   for rank, st in enumerate(self.states)]
        for rank, st in enumerate(self.states):
            for other_rank, bundle in enumerate(bundles):
                if other_rank != rank:
                    st.take_bundle(bundle)

    def _recompute_interval(self, now: float) -> None:
        horizon = None
        if self.interval is not None and math.isfinite(self.interval):
            horizon = self.settings.freshness_periods * self.interval
        best: float | None = None
        for rank, st in enumerate(self.states):
            rate, v_est, td_est = aggregate_global(
                st.bundle(origin=rank, stamp=now),
                list(st.received.values()),
                now=now, horizon=horizon)
            out = optimal_lambda(PolicyParams(
                failure_rate=rate, peers=self.job.peers,
                checkpoint_cost=v_est, restore_cost=td_est))
            if best is None or out.interval < best:
                best = out.interval
            if rank == 0:
                self.last_aggregate = (rate, v_est, td_est)
        self.interval = best

    # -- wrap-up -----------------------------------------------------------

    def truncate(self, now: float) -> None:
        if self.phase == RUNNING:
            self._close_running_segment(now)
        elif self.phase == CHECKPOINTING:
            self.ckpt.add(now - self.phase_start)
        else:
            self.restore.add(now - self.phase_start)
        self.capped = True
        self.wall = now

    def result(self) -> RunResult:
        conservation = self.wall - (self.work.value + self.ckpt.value + self.restore.value)
        if abs(conservation) > 1e-6 + 1e-9 * abs(self.wall):
            raise AssertionError(
                f"accounting leak: wall={self.wall!r} buckets off by {conservation!r}")

        if self.adaptive and self.last_aggregate is not None:
            mu_hat, v_hat, td_hat = self.last_aggregate
            mu_from_prior = self.states[0].using_prior
            v_out: float | None = v_hat
            td_out: float | None = td_hat
        else:
            st = self.states[0]
            mu_hat = st.failure_rate()
            mu_from_prior = st.using_prior
            v_out = st.checkpoint_cost
            td_out = st.restore_cost

        return RunResult(
            wall_time=self.wall,
            checkpoints=self.checkpoints,
            restarts=self.restarts,
            capped=self.capped,
            mean_interval=(self.cycle_sum / self.checkpoints if self.checkpoints else None),
            final_interval=self.interval,
            mu_hat=mu_hat,
            mu_from_prior=mu_from_prior,
            v_hat=v_out,
            td_hat=td_out,
            useful_seconds=self.work.value - self.wasted.value,
            wasted_seconds=self.wasted.value,
            checkpoint_seconds=self.ckpt.value,
            restore_seconds=self.restore.value,
            events=self.world.events_processed,
            saved_history=tuple(self.saved_history),
        )


def run_job(
    world: SimWorld,
    job: JobSpec,
    policy: FixedIntervalPolicy | AdaptivePolicy,
    overheads: Overheads,
    *,
    max_wall_time: float | None = None,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> RunResult:
    """Simulate one job on a fresh world and return its :class:`RunResult`.

    ``max_wall_time`` defaults to ``WALL_CAP_FACTOR * work_required``; runs
    that hit either it or ``max_events`` stop where they are and come back
    with ``capped=True`` (how stalled configurations terminate).  The world
    must be freshly constructed: the job assumes it starts at virtual
    time 0.
    """
    if job.peers >= world.population:
        raise ValueError(
            f"population {world.population} cannot host {job.peers} participants "
            "and still offer replacements")
    if world.clock != 0.0:
        raise ValueError("run_job needs a fresh world (clock at 0)")
    if max_wall_time is None:
        max_wall_time = WALL_CAP_FACTOR * job.work_required
    if not max_wall_time > 0.0:
        raise ValueError(f"max_wall_time must be > 0, got {max_wall_time!r}")

    run = _JobRun(world, job, policy, overheads, max_wall_time, max_events)
    while not run.finished:
        event = world.next_event(until=max_wall_time)
        if event is None:
            run.truncate(max_wall_time)
            break
        now, kind, payload = event
        if kind == DEATH:
            _pid, seat = payload  # type: ignore[misc]
            run.on_death(now, seat)
        elif kind == STABILIZE:
            run.on_stabilize(now)
        elif kind == JOB:
            ev_kind, epoch = payload  # type: ignore[misc]
            run.dispatch(now, ev_kind, epoch)
        if world.events_processed >= max_events and not run.finished:
            run.truncate(world.clock)
            break
    return run.result()
