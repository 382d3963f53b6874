"""Adaptive checkpointing for parallel jobs on churning peer-to-peer pools.

Four pieces:

- :mod:`churnckpt.policy` — closed-form optimal checkpoint rate and the
  utilization model behind it.
- :mod:`churnckpt.estimators` — online estimation of the failure rate,
  checkpoint cost, and restore cost from locally observable events, plus
  piggybacked averaging across the job's peers.
- :mod:`churnckpt.world` / :mod:`churnckpt.job` / :mod:`churnckpt.churn` —
  a deterministic discrete-event simulator of a churning peer population
  executing a checkpointed job.
- :mod:`churnckpt.experiments` / :mod:`churnckpt.cli` — batch experiment
  runner comparing fixed checkpoint intervals against the adaptive policy.
"""

from churnckpt.churn import ChurnSchedule, SessionTrace, draw_lifetime, ingest_trace
from churnckpt.estimators import (
    EstimatorState,
    LifetimeWindow,
    PiggybackBundle,
    aggregate_global,
    estimate_checkpoint_overhead,
    ml_failure_rate,
    record_peer_failure,
    update_download_time,
)
from churnckpt.experiments import (
    RunRecord,
    ScenarioConfig,
    emit_results,
    relative_runtime,
    run_batch,
)
from churnckpt.job import (
    AdaptivePolicy,
    AdaptiveSettings,
    FixedIntervalPolicy,
    JobSpec,
    Overheads,
    RunResult,
    run_job,
)
from churnckpt.policy import (
    CycleBreakdown,
    PolicyOutput,
    PolicyParams,
    cycle_breakdown,
    cycle_overhead,
    expected_wasted_time,
    failure_pdf,
    feasibility,
    lambert_w0,
    mean_fault_free_cycles,
    optimal_lambda,
    utilization,
)
from churnckpt.world import PeerState, SimWorld

__version__ = "0.1.0"

__all__ = [
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
    "optimal_lambda",
    "feasibility",
    "LifetimeWindow",
    "EstimatorState",
    "PiggybackBundle",
    "ml_failure_rate",
    "record_peer_failure",
    "estimate_checkpoint_overhead",
    "update_download_time",
    "aggregate_global",
    "ChurnSchedule",
    "SessionTrace",
    "draw_lifetime",
    "ingest_trace",
    "SimWorld",
    "PeerState",
    "JobSpec",
    "Overheads",
    "FixedIntervalPolicy",
    "AdaptivePolicy",
    "AdaptiveSettings",
    "RunResult",
    "run_job",
    "ScenarioConfig",
    "RunRecord",
    "run_batch",
    "relative_runtime",
    "emit_results",
    "__version__",
]
