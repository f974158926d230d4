"""Deterministic discrete-event engine.

Feeds a sorted request stream into a scheduler plus prediction oracle and
collects latency/retraining metrics. Events are totally ordered by
(time, kind priority, insertion sequence); at equal timestamps retraining
completions are processed first, then unlearning arrivals, then inference
arrivals, which keeps hand-traces unambiguous and maximizes certified
responses.

After the last workload event the engine drains to quiescence: leftover
pending unlearning requests are executed by a final update and every
postponed inference resolves. Waits accrued past the horizon count in
full toward the average waiting time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import oracle as oracle_mod
from .ensemble import aggregate, count_votes
from .scheduler import (
    CompleteUpdate,
    HaltInference,
    PostponeInference,
    RefuseInference,
    RespondCertified,
    RespondUncertified,
    Scheduler,
    StartRetraining,
    VariantConfig,
)
from .workload import INFERENCE, UNLEARNING

_PRIO_RETRAIN = 0
_PRIO_UNLEARN = 1
_PRIO_INFER = 2


@dataclass(frozen=True)
class SimParams:
    retrain_duration: float
    horizon: float
    seed: int = 0
    inference_service_time: float = 0.0

    def __post_init__(self):
        if self.retrain_duration <= 0:
            raise ValueError("retrain_duration must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.inference_service_time < 0:
            raise ValueError("inference_service_time must be >= 0")


@dataclass(frozen=True)
class RequestRecord:
    """Terminal outcome of one inference request."""

    request_id: int
    arrival: float
    response: float
    wait: float
    verdict: str  # certified | uncertified | plain | refused_*
    label: int
    sample: int
    is_noise: bool
    versions: tuple
    hypothetical_versions: tuple


@dataclass
class Metrics:
    awt: float
    nor: int
    uncertified_responses: int
    postponed_count: int
    refused_count: int
    p50: float
    p95: float
    p99: float
    p_uc: float
    judgements: int
    judgements_uncertified: int
    uncertification_triggers: int
    final_triggers: int
    num_inferences: int
    num_unlearnings: int
    per_request_log: list[RequestRecord] = field(repr=False, default_factory=list)


class SimulationError(RuntimeError):
    """Internal consistency failure of the engine (a bug, not bad input)."""


def _validate_workload(workload, horizon):
    last = -1.0
    for r in workload:
        if r.arrival < last:
            raise ValueError(
                f"workload not sorted by arrival at request {r.request_id}"
            )
        if not 0.0 <= r.arrival <= horizon:
            raise ValueError(
                f"request {r.request_id} arrives at {r.arrival}, outside [0, {horizon}]"
            )
        last = r.arrival


def run(workload, variant: VariantConfig, oracle_cfg, params: SimParams,
        collect_log: bool = True) -> Metrics:
    """Simulate one variant over one workload to quiescence."""
    _validate_workload(workload, params.horizon)
    sched = Scheduler(variant, oracle_cfg, params.retrain_duration)

    heap = []
    seq = 0
    for r in workload:
        prio = _PRIO_UNLEARN if r.kind == UNLEARNING else _PRIO_INFER
        heapq.heappush(heap, (r.arrival, prio, seq, r))
        seq += 1

    records: list[RequestRecord] = []
    waits: list[float] = []
    terminal: set[int] = set()
    postponed: set[int] = set()
    n_inferences = sum(1 for r in workload if r.kind == INFERENCE)
    n_unlearnings = len(workload) - n_inferences
    uncertified_responses = 0
    refused = 0
    now = 0.0

    def record_response(request, now, verdict, label, versions=(), hypo=()):
        nonlocal uncertified_responses, refused
        if request.request_id in terminal:
            raise SimulationError(
                f"request {request.request_id} answered more than once"
            )
        terminal.add(request.request_id)
        response = now + params.inference_service_time
        wait = response - request.arrival
        if wait < -1e-9:
            raise SimulationError(
                f"request {request.request_id} answered before its arrival"
            )
        waits.append(wait)
        if verdict == "uncertified":
            uncertified_responses += 1
        if verdict.startswith("refused"):
            refused += 1
        if collect_log:
            records.append(
                RequestRecord(
                    request.request_id, request.arrival, response, wait, verdict,
                    label, request.sample, request.is_noise, versions, hypo,
                )
            )

    def apply(actions, now):
        nonlocal seq
        for act in actions:
            if isinstance(act, StartRetraining):
                heapq.heappush(heap, (act.job.completion, _PRIO_RETRAIN, seq, act.job))
                seq += 1
            elif isinstance(act, RespondCertified):
                record_response(
                    act.request, now, act.verdict, act.label,
                    act.versions, act.hypothetical_versions,
                )
            elif isinstance(act, RespondUncertified):
                record_response(
                    act.request, now, "uncertified", act.label,
                    act.versions, act.hypothetical_versions,
                )
            elif isinstance(act, RefuseInference):
                record_response(act.request, now, f"refused_{act.reason}", -1)
            elif isinstance(act, PostponeInference):
                postponed.add(act.request.request_id)
            elif isinstance(act, (HaltInference, CompleteUpdate)):
                pass
            else:
                raise SimulationError(f"unknown scheduler action {act!r}")

    def drain_heap():
        nonlocal now
        while heap:
            time, prio, _, payload = heapq.heappop(heap)
            now = time
            if prio == _PRIO_RETRAIN:
                apply(sched.on_retraining_complete(payload.job_id, now), now)
            elif prio == _PRIO_UNLEARN:
                apply(sched.on_unlearning_arrival(payload, now), now)
            else:
                apply(sched.on_inference_arrival(payload, now), now)

    drain_heap()
    now = max(now, params.horizon)
    while not sched.quiet():
        actions = sched.finalize(now)
        if not actions and not heap:
            raise SimulationError("simulation cannot make progress toward quiescence")
        apply(actions, now)
        drain_heap()
        now = max(now, params.horizon)

    if len(terminal) != n_inferences:
        raise SimulationError(
            f"{n_inferences} inference arrivals but {len(terminal)} terminal actions"
        )
    if any(sched.pending[k] for k in range(sched.num_shards)):
        raise SimulationError("pending unlearning requests survived quiescence")

    if waits:
        arr = np.asarray(waits)
        awt = float(arr.mean())
        p50, p95, p99 = (float(x) for x in np.percentile(arr, [50, 95, 99]))
    else:
        awt = p50 = p95 = p99 = 0.0
    p_uc = (
        sched.judgements_uncertified / sched.judgements if sched.judgements else 0.0
    )
    records.sort(key=lambda rec: rec.request_id)
    return Metrics(
        awt=awt,
        nor=sched.retrainings_completed,
        uncertified_responses=uncertified_responses,
        postponed_count=len(postponed),
        refused_count=refused,
        p50=p50,
        p95=p95,
        p99=p99,
        p_uc=p_uc,
        judgements=sched.judgements,
        judgements_uncertified=sched.judgements_uncertified,
        uncertification_triggers=sched.uncertification_triggers,
        final_triggers=sched.final_triggers,
        num_inferences=n_inferences,
        num_unlearnings=n_unlearnings,
        per_request_log=records,
    )


def replay_privacy_check(per_request_log, oracle_cfg) -> int:
    """Re-derive each answered label under executed-unlearning state.

    For every response served as authoritative (certified, or plain from a
    certification-free policy), recompute the ensemble label with all
    then-pending unlearning already applied (shard versions advanced past
    their outstanding retrainings) and count disagreements. Uncertified
    and refused responses are excluded: they were never claimed
    consistent.
    """
    violations = 0
    for rec in per_request_log:
        if rec.verdict not in ("certified", "plain"):
            continue
        sample = oracle_mod.sample_for(oracle_cfg, rec.sample, rec.is_noise)
        preds = oracle_mod.predict_vector(oracle_cfg, sample, rec.hypothetical_versions)
        if aggregate(count_votes(preds, oracle_cfg.num_classes)) != rec.label:
            violations += 1
    return violations


def estimate_p_uc(metrics: Metrics) -> float:
    """Fraction of consistency judgements that failed, re-checks included."""
    if metrics.judgements == 0:
        return 0.0
    return metrics.judgements_uncertified / metrics.judgements
