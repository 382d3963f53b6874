"""Discrete-event world: a churning peer population under a stationary-size
renewal model.

Every departure is immediately backfilled by a fresh arrival in the same
overlay seat, so the population size and the (fixed, directed) overlay graph
are constant while the individual peers rotate through the seats.  Failure
detection is overlay-scoped: an observer seat only learns about departures
among its one- and two-hop neighbours, and only at stabilization ticks.

The network is assumed to predate the simulation: the initial occupants are
already mid-session, carrying an exponentially distributed elapsed age
(their ``session_start`` lies before time 0).  Without this stationary
start, every session observable early in a run would necessarily be short,
and the failure-rate estimates fed by those observations would be badly
inflated until the run had lasted several mean lifetimes.

Event ordering is a classic ``(time, seq)`` heap; ties resolve in scheduling
order.  All churn randomness comes from a stream seeded with
``"{seed}:churn"`` so that job-level decisions (which draw from a separate
``"{seed}:job"`` stream) never perturb the departure trajectory — two runs
with the same seed see identical churn regardless of policy.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field

from .churn import ChurnSchedule, draw_lifetime

__all__ = [
    "DEATH",
    "JOB",
    "PeerState",
    "SimWorld",
    "STABILIZE",
]

DEATH = "death"
STABILIZE = "stabilize"
JOB = "job"

DEFAULT_STABILIZATION_PERIOD = 30.0


@dataclass
class PeerState:
    """One session of one peer occupying an overlay seat."""

    peer_id: int
    slot: int
    session_start: float  # before time 0 for the initial, already-aged peers
    lifetime: float  # inf = stays forever
    neighbors: tuple[int, ...]  # out-neighbour seats, fixed for the seat
    alive: bool = field(default=True)


class SimWorld:
    """Event queue plus peer table for one simulated run."""

    def __init__(
        self,
        population: int,
        degree: int,
        schedule: ChurnSchedule,
        seed: int | str,
        stabilization_period: float | None = DEFAULT_STABILIZATION_PERIOD,
    ) -> None:
        if population < 2:
            raise ValueError(f"population must be >= 2, got {population}")
        if not 1 <= degree < population:
            raise ValueError(f"degree must be in [1, population), got {degree}")
        if stabilization_period is not None and not stabilization_period > 0.0:
            raise ValueError(
                f"stabilization_period must be > 0 or None, got {stabilization_period!r}")

        self.population = population
        self.degree = degree
        self.schedule = schedule
        self.seed = seed
        self.stabilization_period = stabilization_period

        self.clock = 0.0
        self.events_processed = 0
        self._rng = random.Random(f"{seed}:churn")
        self._heap: list[tuple[float, int, str, object]] = []
        self._seq = itertools.count()
        self._trace_idx = 0
        self._next_peer_id = itertools.count()

        # Fixed overlay: each seat picks `degree` distinct other seats, then
        # monitors everything within two hops.  Built before any lifetime is
        # drawn so the churn stream layout is stable.
        self.neighbors: list[tuple[int, ...]] = [
            tuple(sorted(self._rng.sample(
                [s for s in range(population) if s != seat], degree)))
            for seat in range(population)
        ]
        self.monitored: list[tuple[int, ...]] = []
        self._monitored_sets: list[frozenset[int]] = []
        for seat in range(population):
            near = set(self.neighbors[seat])
            for other in self.neighbors[seat]:
                near.update(self.neighbors[other])
            near.discard(seat)
            self.monitored.append(tuple(sorted(near)))
            self._monitored_sets.append(frozenset(near))

        self.peers: dict[int, PeerState] = {}
        self.slots: list[int] = [-1] * population
        # Global departure log, consumed through per-observer cursors.
        self.departures: list[tuple[float, int, int, float]] = []
        self._cursors: dict[int, int] = {}

        for seat in range(population):
            self._spawn(seat, 0.0, aged=True)
        if stabilization_period is not None:
            self.schedule_event(stabilization_period, STABILIZE, None)

    # -- peer lifecycle -------------------------------------------------

    def _draw_lifetime(self, now: float) -> float:
        if self.schedule.trace_driven:
            duration = self.schedule.trace_duration(self._trace_idx)
            self._trace_idx += 1
            return duration
        return draw_lifetime(self.schedule, now, self._rng)

    def _spawn(self, seat: int, now: float, aged: bool = False) -> PeerState:
        pid = next(self._next_peer_id)
        remaining = self._draw_lifetime(now)
        age = 0.0
        if aged and not self.schedule.trace_driven:
            # stationary start: the occupant has been up for a while already
            # (memorylessness keeps its remaining time a fresh draw)
            rate = self.schedule.rate_at(now)
            if rate > 0.0:
                age = self._rng.expovariate(rate)
        peer = PeerState(
            peer_id=pid,
            slot=seat,
            session_start=now - age,
            lifetime=age + remaining,
            neighbors=self.neighbors[seat],
        )
        self.peers[pid] = peer
        self.slots[seat] = pid
        if math.isfinite(remaining):
            self.schedule_event(now + remaining, DEATH, (pid, seat))
        return peer

    def occupant(self, seat: int) -> PeerState:
        return self.peers[self.slots[seat]]

    def script_departure(self, seat: int, at: float) -> None:
        """Force the seat's current occupant to leave at time ``at``.

        Meant for tests with a zero-rate schedule; with natural churn the
        occupant may already be gone by then, making this a no-op.
        """
        self.schedule_event(at, DEATH, (self.slots[seat], seat))

    # -- event core -------------------------------------------------------

    def schedule_event(self, time: float, kind: str, payload: object) -> None:
        if time < self.clock:
            raise ValueError(f"cannot schedule into the past: {time} < {self.clock}")
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def next_event(self, until: float | None = None) -> tuple[float, str, object] | None:
        """Pop, process, and return the next live event.

        Departures are fully handled here (log + backfill) before being
        returned, so callers observe a world already containing the
        replacement peer.  Returns ``None`` — with the clock advanced to
        ``until`` — when the next event lies beyond the horizon, or when the
        queue is empty.
        """
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                self.clock = max(self.clock, until)
                return None
            time, _, kind, payload = heapq.heappop(self._heap)
            self.clock = time
            self.events_processed += 1
            if kind == DEATH:
                pid, seat = payload  # type: ignore[misc]
                peer = self.peers[pid]
                if not peer.alive or self.slots[seat] != pid:
                    continue  # superseded (seat already turned over)
                peer.alive = False
                self.departures.append((time, pid, seat, peer.session_start))
                self._spawn(seat, time)
            elif kind == STABILIZE:
                assert self.stabilization_period is not None
                self.schedule_event(time + self.stabilization_period, STABILIZE, None)
            return (time, kind, payload)
        if until is not None:
            self.clock = max(self.clock, until)
        return None

    def run_churn(self, until: float) -> int:
        """Drain events up to ``until``; returns how many were processed."""
        n = 0
        while self.next_event(until) is not None:
            n += 1
        return n

    # -- overlay-scoped failure detection --------------------------------

    def start_observing(self, seat: int) -> None:
        """Begin reporting departures visible from ``seat`` (future ones only)."""
        self._cursors[seat] = len(self.departures)

    def detect_failures(self, seat: int) -> list[tuple[int, float]]:
        """Departures of monitored peers since the observer's last call.

        Returns ``(peer_id, observed_lifetime)`` pairs in departure order;
        empty when nothing monitored left.  An observer that never called
        :meth:`start_observing` starts from the present.
        """
        cursor = self._cursors.setdefault(seat, len(self.departures))
        watched = self._monitored_sets[seat]
        seen = [
            (pid, time - session_start)
            for time, pid, dep_seat, session_start in self.departures[cursor:]
            if dep_seat in watched
        ]
        self._cursors[seat] = len(self.departures)
        return seen
