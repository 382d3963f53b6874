"""Checkpoint-rate policy math for parallel jobs on churning peer pools.

A job runs on ``peers`` machines, each of which departs independently after an
exponentially distributed session, so the job as a whole fails at rate
``peers * failure_rate``.  Checkpointing at rate ``checkpoint_rate`` costs
``checkpoint_cost`` seconds per checkpoint; every failure rolls the job back
to its last committed checkpoint and additionally costs ``restore_cost``
seconds to fetch the saved image.  From those four numbers this module
computes the expected waste per failure, the mean overhead per checkpoint
cycle, the resulting cycle utilization, and — in closed form, via the
principal branch of the Lambert W function — the checkpoint rate that
maximizes utilization.

Everything here is a pure function of its arguments: no state, no RNG, no
external dependencies.  All times are seconds and all rates are 1/seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "LAMBDA_FLOOR",
    "PolicyParams",
    "PolicyOutput",
    "CycleBreakdown",
    "lambert_w0",
    "failure_pdf",
    "mean_fault_free_cycles",
    "expected_wasted_time",
    "cycle_overhead",
    "utilization",
    "cycle_breakdown",
    "rate_ceiling",
    "optimal_lambda",
    "feasibility",
]

# Checkpoint rates are clamped into [LAMBDA_FLOOR, rate_ceiling(V)]: at least
# one checkpoint per day, and a cycle must be at least twice its own
# checkpoint cost to be worth taking.
LAMBDA_FLOOR = 1.0 / 86400.0

# Beyond exp(700) the doubles overflow; the guarded branches return the
# analytically correct limits instead (no fault-free cycles ever complete).
_EXP_GUARD = 700.0

_BRANCH_POINT = -math.exp(-1.0)  # -1/e, left edge of the W0 domain
_DOMAIN_SLACK = 1e-12


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function, w * exp(w) = x.

    Valid for ``x >= -1/e`` (up to a small numerical slack below the branch
    point, which is clamped).  Uses a series expansion around the branch
    point, a rational/log seed elsewhere, and Halley iterations to 1e-12
    relative tolerance.

    Raises
    ------
    ValueError
        If ``x`` lies below the branch point by more than the slack.
    """
    if math.isnan(x):
        raise ValueError("lambert_w0: x is NaN")
    if x < _BRANCH_POINT:
        if x < _BRANCH_POINT - _DOMAIN_SLACK:
            raise ValueError(f"lambert_w0: x={x!r} below branch point -1/e")
        x = _BRANCH_POINT
    if x == _BRANCH_POINT:
        return -1.0
    if x == 0.0:
        return 0.0

    # Initial guess.
    if x < -0.32:
        # Series around the branch point, p = sqrt(2 (e x + 1)).
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)))
    elif x < math.e:
        # Pade-flavoured seed, good on (-0.32, e).
        w = x * (1.0 + 1.25 * x) / (1.0 + x * (2.25 + 0.75 * x))
    else:
        # Asymptotic seed for x >= e, where log(log(x)) >= 0.
        lx = math.log(x)
        llx = math.log(lx)
        w = lx - llx + llx / lx

    # Halley's method.
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        w1 = w + 1.0
        denom = ew * w1 - f * (w + 2.0) / (2.0 * w1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= 1e-12 * (abs(w) + 1e-300):
            break
    return w


@dataclass(frozen=True)
class PolicyParams:
    """Inputs to the utilization model.

    failure_rate     per-peer departure rate (1/seconds), > 0
    peers            number of machines the job runs on, >= 1
    checkpoint_cost  wall seconds each checkpoint freezes the job for (V)
    restore_cost     wall seconds to fetch the saved image on restart (T_d)
    """

    failure_rate: float
    peers: int
    checkpoint_cost: float
    restore_cost: float

    def __post_init__(self) -> None:
        if not (self.failure_rate > 0.0 and math.isfinite(self.failure_rate)):
            raise ValueError(f"failure_rate must be positive and finite, got {self.failure_rate!r}")
        if self.peers < 1 or int(self.peers) != self.peers:
            raise ValueError(f"peers must be a positive integer, got {self.peers!r}")
        if not (self.checkpoint_cost >= 0.0 and math.isfinite(self.checkpoint_cost)):
            raise ValueError(f"checkpoint_cost must be >= 0, got {self.checkpoint_cost!r}")
        if not (self.restore_cost >= 0.0 and math.isfinite(self.restore_cost)):
            raise ValueError(f"restore_cost must be >= 0, got {self.restore_cost!r}")

    @property
    def job_failure_rate(self) -> float:
        """Failure rate of the whole job: any of the peers departing."""
        return self.peers * self.failure_rate

    @property
    def job_mtbf(self) -> float:
        return 1.0 / self.job_failure_rate


@dataclass(frozen=True)
class PolicyOutput:
    """Result of the closed-form optimization."""

    checkpoint_rate: float  # optimal checkpoints per second, after clamping
    interval: float  # 1/checkpoint_rate
    utilization: float  # cycle utilization at the chosen rate
    feasible: bool  # True when the job makes expected progress at all
    clamped: bool  # True when the raw optimum was pulled into the clamp range


@dataclass(frozen=True)
class CycleBreakdown:
    """Per-cycle cost decomposition at a given checkpoint rate."""

    wasted_time: float  # expected lost computation per failure (seconds)
    cycles_per_failure: float  # mean fault-free cycles between failures
    overhead: float  # mean total overhead per cycle (seconds)
    utilization: float


def failure_pdf(t: float, p: PolicyParams) -> float:
    """Density of the job's time-to-failure at ``t`` seconds (exponential)."""
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t!r}")
    a = p.job_failure_rate
    return a * math.exp(-a * t)


def mean_fault_free_cycles(p: PolicyParams, checkpoint_rate: float) -> float:
    """Expected number of whole checkpoint cycles completed between failures.

    Equals 1/(exp(peers*failure_rate/checkpoint_rate) - 1).  Returns 0.0 when
    the exponent exceeds the overflow guard — cycles are then so long relative
    to the job MTBF that effectively none completes.
    """
    _check_rate(checkpoint_rate)
    x = p.job_failure_rate / checkpoint_rate
    if x > _EXP_GUARD:
        return 0.0
    return 1.0 / math.expm1(x)


def expected_wasted_time(p: PolicyParams, checkpoint_rate: float) -> float:
    """Expected computation lost per failure: job MTBF minus saved cycles."""
    _check_rate(checkpoint_rate)
    cycles = mean_fault_free_cycles(p, checkpoint_rate)
    return 1.0 / p.job_failure_rate - cycles / checkpoint_rate


def cycle_overhead(p: PolicyParams, checkpoint_rate: float) -> float:
    """Mean overhead charged to each cycle: checkpoint cost plus the per-cycle
    share of failure waste and restore cost.

    Returns ``inf`` when no fault-free cycle ever completes.
    """
    _check_rate(checkpoint_rate)
    cycles = mean_fault_free_cycles(p, checkpoint_rate)
    if cycles == 0.0:
        return math.inf
    wasted = expected_wasted_time(p, checkpoint_rate)
    return p.checkpoint_cost + (wasted + p.restore_cost) / cycles


def utilization(p: PolicyParams, checkpoint_rate: float) -> float:
    """Fraction of a checkpoint cycle spent on useful work, in [0, 1).

    Zero when overheads meet or exceed the whole cycle (the job makes no
    expected progress at this rate).
    """
    overhead = cycle_overhead(p, checkpoint_rate)
    if math.isinf(overhead):
        return 0.0
    load = overhead * checkpoint_rate
    return 1.0 - load if load < 1.0 else 0.0


def cycle_breakdown(p: PolicyParams, checkpoint_rate: float) -> CycleBreakdown:
    """All four per-cycle quantities at once."""
    return CycleBreakdown(
        wasted_time=expected_wasted_time(p, checkpoint_rate),
        cycles_per_failure=mean_fault_free_cycles(p, checkpoint_rate),
        overhead=cycle_overhead(p, checkpoint_rate),
        utilization=utilization(p, checkpoint_rate),
    )


def rate_ceiling(checkpoint_cost: float) -> float:
    """Highest admissible checkpoint rate for a given checkpoint cost."""
    if checkpoint_cost > 0.0:
        return 1.0 / (2.0 * checkpoint_cost)
    return 0.1


def optimal_lambda(p: PolicyParams) -> PolicyOutput:
    """Utilization-maximizing checkpoint rate, in closed form.

    Solves d(utilization)/d(rate) = 0 via the principal Lambert W branch and
    clamps the result into [LAMBDA_FLOOR, rate_ceiling(checkpoint_cost)].
    The W argument is >= -1/e for any non-negative checkpoint cost, with
    equality exactly at zero cost — that degenerate case goes straight to the
    ceiling (checkpoints are free, so take them as often as allowed).
    """
    a = p.job_failure_rate
    floor = LAMBDA_FLOOR
    ceiling = rate_ceiling(p.checkpoint_cost)
    clamped = False

    if p.checkpoint_cost == 0.0:
        rate = ceiling
        clamped = True
    else:
        va = p.checkpoint_cost * a
        da = p.restore_cost * a
        arg = (va - da - 1.0) / ((da + 1.0) * math.e)
        w = lambert_w0(max(arg, _BRANCH_POINT))
        denom = w + 1.0
        if denom <= 0.0:
            rate = ceiling
            clamped = True
        else:
            rate = a / denom

    if rate < floor:
        rate = floor
        clamped = True
    if rate > ceiling:
        rate = ceiling
        clamped = True

    u = utilization(p, rate)
    return PolicyOutput(
        checkpoint_rate=rate,
        interval=1.0 / rate,
        utilization=u,
        feasible=u > 0.0,
        clamped=clamped,
    )


def feasibility(p: PolicyParams) -> str:
    """``"progressing"`` if the job gains ground at the optimal rate, else
    ``"stalled"`` (overheads swallow every cycle no matter the rate)."""
    return "progressing" if optimal_lambda(p).feasible else "stalled"


def _check_rate(checkpoint_rate: float) -> None:
    if not (checkpoint_rate > 0.0):
        raise ValueError(f"checkpoint_rate must be > 0, got {checkpoint_rate!r}")
