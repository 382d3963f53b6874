"""Churn models: how long peers stay before departing.

Three session-length sources, all wrapped by :class:`ChurnSchedule`:

- constant-rate exponential sessions (``base_rate``);
- exponentially accelerating churn, where the instantaneous departure rate
  doubles every ``doubling_period`` seconds — draws use hazard thinning
  against a per-segment rate bound, which is exact for a monotone rate;
- replay of a recorded session trace (one ``start,duration`` pair per line),
  in file order, instead of random draws.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass

__all__ = [
    "ChurnSchedule",
    "SessionTrace",
    "TraceFormatError",
    "draw_lifetime",
    "ingest_trace",
    "trace_summary",
]

# Beyond this many doublings the rate is astronomically past anything a job
# can survive; capping keeps 2**x inside float range.
_MAX_DOUBLINGS = 64.0


class TraceFormatError(ValueError):
    """Session trace file could not be parsed."""


@dataclass(frozen=True)
class SessionTrace:
    """Validated session rows, sorted by start time."""

    rows: tuple[tuple[float, float], ...]  # (start_seconds, duration_seconds)

    @property
    def durations(self) -> tuple[float, ...]:
        return tuple(d for _, d in self.rows)

    @property
    def mean_duration(self) -> float:
        return statistics.fmean(self.durations)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ChurnSchedule:
    """Departure-rate description driving a simulated peer population."""

    base_rate: float = 0.0  # per-peer departures per second
    doubling_period: float | None = None  # rate doubles every this many seconds
    trace: SessionTrace | None = None  # replay these sessions instead

    def __post_init__(self) -> None:
        if self.trace is None and self.base_rate < 0.0:
            raise ValueError(f"base_rate must be >= 0, got {self.base_rate!r}")
        if self.doubling_period is not None and not self.doubling_period > 0.0:
            raise ValueError(f"doubling_period must be > 0, got {self.doubling_period!r}")

    @property
    def trace_driven(self) -> bool:
        return self.trace is not None

    def rate_at(self, t: float) -> float:
        """Instantaneous departure rate at virtual time ``t``."""
        if self.trace_driven:
            raise ValueError("trace-driven schedules have no analytic rate")
        if self.doubling_period is None:
            return self.base_rate
        return self.base_rate * 2.0 ** min(t / self.doubling_period, _MAX_DOUBLINGS)

    def trace_duration(self, index: int) -> float:
        """The ``index``-th replayed session length (cycling past the end)."""
        assert self.trace is not None
        rows = self.trace.rows
        return rows[index % len(rows)][1]


def draw_lifetime(schedule: ChurnSchedule, now: float, rng: random.Random) -> float:
    """Sample a session length for a peer arriving at virtual time ``now``.

    Constant-rate schedules draw a plain exponential.  Doubling schedules use
    thinning: candidate points come from a homogeneous process at the
    segment's upper rate bound and are accepted with probability
    rate(t)/bound, segment by segment, so the realized hazard matches
    rate(t) exactly.  Returns ``inf`` when the rate is zero (the peer never
    leaves).
    """
    if schedule.trace_driven:
        raise ValueError("trace-driven schedules replay recorded sessions; "
                         "they are consumed in order by the simulation world")
    if schedule.base_rate <= 0.0:
        return math.inf
    if schedule.doubling_period is None:
        return rng.expovariate(schedule.base_rate)

    horizon = schedule.doubling_period / 4.0  # rate grows ~19% per segment
    seg_start = now
    while True:
        seg_end = seg_start + horizon
        bound = schedule.rate_at(seg_end)  # rate is increasing, so this bounds the segment
        t = seg_start
        while True:
            t += rng.expovariate(bound)
            if t >= seg_end:
                seg_start = seg_end
                break
            if rng.random() * bound <= schedule.rate_at(t):
                return t - now


def ingest_trace(path: str) -> SessionTrace:
    """Parse a session trace file: ``start_seconds,duration_seconds`` per
    line, ``#`` comments and blank lines ignored, UTF-8 with LF endings.

    Raises :class:`TraceFormatError` with the offending line number on any
    malformed row, non-positive duration, or an empty trace; I/O problems
    propagate as plain :class:`OSError`.
    """
    rows: list[tuple[float, float]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TraceFormatError(
                    f"{path}:{lineno}: expected 'start,duration', got {line!r}")
            try:
                start, duration = float(parts[0]), float(parts[1])
            except ValueError:
                raise TraceFormatError(
                    f"{path}:{lineno}: non-numeric field in {line!r}") from None
            if not math.isfinite(start) or not math.isfinite(duration):
                raise TraceFormatError(f"{path}:{lineno}: non-finite value in {line!r}")
            if start < 0.0:
                raise TraceFormatError(f"{path}:{lineno}: negative session start {start!r}")
            if duration <= 0.0:
                raise TraceFormatError(
                    f"{path}:{lineno}: session duration must be > 0, got {duration!r}")
            rows.append((start, duration))
    if not rows:
        raise TraceFormatError(f"{path}: no session rows found")
    rows.sort(key=lambda r: r[0])
    return SessionTrace(rows=tuple(rows))


def trace_summary(trace: SessionTrace) -> dict[str, float]:
    """Session-length statistics used by the ``trace stats`` CLI command."""
    durations = sorted(trace.durations)
    return {
        "sessions": float(len(durations)),
        "mean_s": statistics.fmean(durations),
        "median_s": statistics.median(durations),
        "min_s": durations[0],
        "max_s": durations[-1],
        "implied_rate": 1.0 / statistics.fmean(durations),
    }
