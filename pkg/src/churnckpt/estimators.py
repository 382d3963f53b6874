"""Online estimation of the three policy inputs from local observations.

Each peer taking part in a job keeps an :class:`EstimatorState`:

- the per-peer failure rate comes from a sliding :class:`LifetimeWindow` of
  observed neighbor session lengths (maximum-likelihood for exponential
  sessions: count / sum);
- the checkpoint cost estimate comes either from timing the job's own
  checkpoints or from a two-phase throughput calibration
  (:func:`estimate_checkpoint_overhead`);
- the restore cost starts out equal to the checkpoint-cost estimate and is
  replaced by whatever the most recent real image download took
  (:func:`update_download_time`).

Peers exchange their latest estimates as :class:`PiggybackBundle`s riding on
checkpoint traffic; :func:`aggregate_global` averages the freshest bundle per
origin into the values the policy actually uses.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

__all__ = [
    "DEFAULT_WINDOW_CAPACITY",
    "DEFAULT_PRIOR_RATE",
    "NoObservationsError",
    "CalibrationError",
    "LifetimeWindow",
    "CalibrationRecord",
    "PiggybackBundle",
    "EstimatorState",
    "ml_failure_rate",
    "record_peer_failure",
    "estimate_checkpoint_overhead",
    "update_download_time",
    "aggregate_global",
]

DEFAULT_WINDOW_CAPACITY = 50
DEFAULT_PRIOR_RATE = 1.0 / 7200.0


class NoObservationsError(ValueError):
    """No lifetimes observed yet — callers should fall back to their prior."""


class CalibrationError(ValueError):
    """Calibration record is incomplete (no checkpoints or no phase time)."""


class LifetimeWindow:
    """Sliding window of observed peer session durations, oldest evicted first."""

    def __init__(self, capacity: int = DEFAULT_WINDOW_CAPACITY):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity!r}")
        self.capacity = capacity
        self._lifetimes: deque[float] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._lifetimes)

    def __repr__(self) -> str:
        return f"LifetimeWindow(capacity={self.capacity}, n={len(self)})"

    @property
    def lifetimes(self) -> tuple[float, ...]:
        return tuple(self._lifetimes)


def record_peer_failure(window: LifetimeWindow, lifetime: float) -> LifetimeWindow:
    """Append an observed session duration; evicts the oldest entry when full.

    Observations made on behalf of neighbors (and neighbors-of-neighbors,
    shared during stabilization) enter through this same call.
    """
    if not lifetime > 0.0:
        raise ValueError(f"lifetime must be > 0, got {lifetime!r}")
    window._lifetimes.append(float(lifetime))
    return window


def ml_failure_rate(window: LifetimeWindow) -> float:
    """Maximum-likelihood departure rate: observation count over summed
    lifetimes, i.e. the reciprocal of the mean observed session."""
    n = len(window)
    if n == 0:
        raise NoObservationsError("no lifetimes observed yet")
    return n / sum(window._lifetimes)


@dataclass(frozen=True)
class CalibrationRecord:
    """Statistics from the two calibration phases run at job start.

    Phase 1 runs the application for ``phase_seconds`` without checkpoints,
    phase 2 for the same length with ``checkpoints`` frequent checkpoints;
    ``cpu_before``/``cpu_after`` are the mean CPU-usage fractions and
    ``messages_before``/``messages_after`` the message counts of the phases.
    """

    cpu_before: float  # P1
    cpu_after: float  # P2
    messages_before: float  # M1
    messages_after: float  # M2
    phase_seconds: float  # t
    checkpoints: int  # y


def estimate_checkpoint_overhead(record: CalibrationRecord, method: str = "product") -> float:
    """Per-checkpoint cost inferred from the phase-1 vs phase-2 slowdown.

    ``method="product"`` multiplies the CPU drop by the message drop:
    (P1-P2)(M1-M2) t / (2 P1 M1 y).  ``method="ratio-average"`` averages the
    two relative drops instead: ((P1-P2)/P1 + (M1-M2)/M1) t / (2 y).  Either
    way the result is clamped at zero — measurement noise can make phase 2
    look faster than phase 1, and a checkpoint cannot have negative cost.
    """
    if record.checkpoints < 1:
        raise CalibrationError("phase 2 completed no checkpoints")
    if not record.phase_seconds > 0.0:
        raise CalibrationError("calibration phase length must be > 0")
    if not (record.cpu_before > 0.0 and record.messages_before > 0.0):
        raise CalibrationError("phase 1 statistics must be positive")

    p1, p2 = record.cpu_before, record.cpu_after
    m1, m2 = record.messages_before, record.messages_after
    t, y = record.phase_seconds, record.checkpoints
    if method == "product":
        value = ((p1 - p2) * (m1 - m2) * t) / (2.0 * p1 * m1 * y)
    elif method == "ratio-average":
        value = ((p1 - p2) / p1 + (m1 - m2) / m1) * t / (2.0 * y)
    else:
        raise ValueError(f"unknown method {method!r}")
    return max(value, 0.0)


@dataclass(frozen=True)
class PiggybackBundle:
    """One peer's latest estimates, as shipped on checkpoint messages."""

    rate: float  # estimated per-peer failure rate
    checkpoint_cost: float
    restore_cost: float
    origin: int  # sending peer
    stamp: float  # virtual time the estimates were current

    def __post_init__(self) -> None:
        if not self.rate > 0.0:
            raise ValueError(f"rate must be > 0, got {self.rate!r}")
        if self.checkpoint_cost < 0.0 or self.restore_cost < 0.0:
            raise ValueError("cost estimates must be >= 0")


def aggregate_global(
    local: PiggybackBundle,
    received: list[PiggybackBundle],
    now: float | None = None,
    horizon: float | None = None,
) -> tuple[float, float, float]:
    """Average the local bundle with the freshest received bundle per origin.

    When ``now`` and ``horizon`` are given, bundles whose stamp is older than
    ``now - horizon`` are ignored (stale peers drop out of the average); the
    local bundle always survives so the result is well-defined.
    Returns (rate, checkpoint_cost, restore_cost).
    """
    freshest: dict[int, PiggybackBundle] = {}
    for bundle in [local, *received]:
        kept = freshest.get(bundle.origin)
        if kept is None or bundle.stamp >= kept.stamp:
            freshest[bundle.origin] = bundle

    # Summation order is fixed by origin so the mean is exactly independent
    # of delivery order.
    pool = sorted(freshest.values(), key=lambda b: b.origin)
    if now is not None and horizon is not None:
        cutoff = now - horizon
        pool = [b for b in pool if b.stamp >= cutoff]
        if not pool:
            pool = [freshest.get(local.origin, local)]

    n = len(pool)
    return (
        sum(b.rate for b in pool) / n,
        sum(b.checkpoint_cost for b in pool) / n,
        sum(b.restore_cost for b in pool) / n,
    )


@dataclass
class EstimatorState:
    """Everything one peer knows about the policy inputs.

    ``checkpoint_cost`` and ``restore_cost`` are ``None`` until first
    estimated; ``failure_rate()`` falls back to the configured prior (and
    says so via ``using_prior``) until a first session is observed.
    """

    window: LifetimeWindow = field(default_factory=LifetimeWindow)
    prior_rate: float = DEFAULT_PRIOR_RATE
    checkpoint_cost: float | None = None
    restore_cost: float | None = None
    received: dict[int, PiggybackBundle] = field(default_factory=dict)

    @property
    def using_prior(self) -> bool:
        return len(self.window) == 0

    def failure_rate(self) -> float:
        try:
            return ml_failure_rate(self.window)
        except NoObservationsError:
            return self.prior_rate

    def observe_lifetime(self, lifetime: float) -> None:
        record_peer_failure(self.window, lifetime)

    def set_checkpoint_cost(self, value: float) -> None:
        if value < 0.0:
            raise ValueError(f"checkpoint cost must be >= 0, got {value!r}")
        self.checkpoint_cost = value

    def bundle(self, origin: int, stamp: float) -> PiggybackBundle:
        """Snapshot the local estimates for piggybacking."""
        return PiggybackBundle(
            rate=self.failure_rate(),
            checkpoint_cost=self.checkpoint_cost if self.checkpoint_cost is not None else 0.0,
            restore_cost=self.restore_cost if self.restore_cost is not None else 0.0,
            origin=origin,
            stamp=stamp,
        )

    def take_bundle(self, bundle: PiggybackBundle) -> None:
        kept = self.received.get(bundle.origin)
        if kept is None or bundle.stamp >= kept.stamp:
            self.received[bundle.origin] = bundle


def update_download_time(state: EstimatorState, event: str, measured: float | None = None) -> float:
    """Maintain the restore-cost estimate.

    ``event="init"`` seeds it from the current checkpoint-cost estimate (the
    image has never been fetched, so its transfer is assumed to cost about as
    much as writing it).  ``event="background"`` records the duration of the
    first real image download, performed alongside normal processing;
    ``event="restart"`` records the duration measured during an actual
    restore.  The most recent measurement always wins — it reflects current
    network conditions.
    """
    if event == "init":
        if state.checkpoint_cost is None:
            raise ValueError("cannot init restore cost before a checkpoint-cost estimate exists")
        state.restore_cost = state.checkpoint_cost
    elif event in ("background", "restart"):
        if measured is None or not measured > 0.0:
            raise ValueError(f"measured duration must be > 0, got {measured!r}")
        state.restore_cost = float(measured)
    else:
        raise ValueError(f"unknown event {event!r}")
    return state.restore_cost
