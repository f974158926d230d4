"""Request-handling policies over the sharded ensemble.

Eight variants are supported, spanned by three design options:

* Option I  — single context (inference halts while shards retrain) or
  double context (old model copies keep serving during retraining).
* Option II — when unlearning executes: immediately on arrival, when an
  inference fails the consistency check, or when the failure ratio since
  the last update crosses a threshold.
* Option III — failed inferences either wait for the update (postpone) or
  are answered anyway while the failure ratio stays under the threshold.

=====  ==============  =========  ==================  ==================
name   I               II         III                 notes
=====  ==============  =========  ==================  ==================
DIMP   double          immediate  postpone
SUTP   single          uncert     postpone
DUTP   double          uncert     postpone
STTU   single          threshold  respond_uncert
DTTU   double          threshold  respond_uncert
STTP   single          threshold  postpone
DTTP   double          threshold  postpone
SISA   single          immediate  postpone            no certification
=====  ==============  =========  ==================  ==================

The scheduler is a deterministic state machine driven by the simulator's
events; it holds no clock of its own and draws no randomness beyond the
seeded hashes shared with the oracle.

Bookkeeping is split into two planes so that variants differing only in
Option I make identical retraining decisions and differ in response
timing alone:

* the *response plane* answers requests as early as soundness allows —
  double-context variants evaluate arrivals mid-update and re-check
  postponed requests at every retraining completion;
* the *control plane* (threshold counters and update triggers) acts only
  while no update runs and at update completions, where it re-evaluates
  the whole backlog in arrival order against the post-update state. Those
  control verdicts depend only on arrival order and retraining state,
  which single- and double-context twins share.

A request leaves the backlog only once the control plane sees it
certified, refused, or answered-uncertified; until then completed updates
keep re-counting it toward the threshold window, which is what makes the
postpone-threshold variants slower to re-trigger than their
answer-uncertified siblings.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import oracle as oracle_mod
from .certify import certify_coarse, fine_certified
from .ensemble import aggregate, count_votes
from .hashing import mix64
from .oracle import OracleConfig, SampleId
from .workload import INFERENCE, UNLEARNING, Request

SINGLE_CONTEXT = "single_context"
DOUBLE_CONTEXT = "double_context"
IMMEDIATE = "immediate"
UNCERT_TRIGGERED = "uncert_triggered"
THRESHOLD_TRIGGERED = "threshold_triggered"
RESPOND_UNCERTIFIED = "respond_uncertified"
POSTPONE = "postpone"

RETRAIN_ALL_PENDING = "retrain_all_pending"
RETRAIN_MINIMAL = "retrain_minimal"

VARIANT_TABLE = {
    "DIMP": (DOUBLE_CONTEXT, IMMEDIATE, POSTPONE),
    "SUTP": (SINGLE_CONTEXT, UNCERT_TRIGGERED, POSTPONE),
    "DUTP": (DOUBLE_CONTEXT, UNCERT_TRIGGERED, POSTPONE),
    "STTU": (SINGLE_CONTEXT, THRESHOLD_TRIGGERED, RESPOND_UNCERTIFIED),
    "DTTU": (DOUBLE_CONTEXT, THRESHOLD_TRIGGERED, RESPOND_UNCERTIFIED),
    "STTP": (SINGLE_CONTEXT, THRESHOLD_TRIGGERED, POSTPONE),
    "DTTP": (DOUBLE_CONTEXT, THRESHOLD_TRIGGERED, POSTPONE),
    "SISA": (SINGLE_CONTEXT, IMMEDIATE, POSTPONE),
}
VARIANT_NAMES = tuple(VARIANT_TABLE)

_SALT_DETECT = 0xD1
_SALT_SHUFFLE = 0xD2


@dataclass(frozen=True)
class MitigationConfig:
    """Defenses against hard-to-classify inference floods.

    The detector fires before inference with the given true/false positive
    rates (seeded, per request). The confidence threshold discards answers
    whose ensemble agreement is too low. Filtered requests are answered
    with a refusal and never feed the uncertification counters.
    """

    detector_enabled: bool = False
    detector_tpr: float = 1.0
    detector_fpr: float = 0.0
    confidence_threshold: float | None = None

    def __post_init__(self):
        for rate in (self.detector_tpr, self.detector_fpr):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"detector rates must be in [0, 1], got {rate}")
        if self.confidence_threshold is not None and not (
            0.0 <= self.confidence_threshold <= 1.0
        ):
            raise ValueError("confidence_threshold must be in [0, 1]")


MITIGATION_PASS = "pass"
MITIGATION_REJECT = "reject_detected"
MITIGATION_DISCARD = "discard_low_confidence"


@dataclass(frozen=True)
class VariantConfig:
    name: str
    option_i: str
    option_ii: str
    option_iii: str
    threshold: float = 0.05
    parallel_capacity: int = 1
    retrain_policy: str = RETRAIN_ALL_PENDING
    certified: bool = True
    cert_mode: str = "fine"
    mitigation: MitigationConfig | None = None
    shuffle_shards: bool = False
    context_switch_latency: float = 0.0

    def __post_init__(self):
        triple = (self.option_i, self.option_ii, self.option_iii)
        if triple not in VARIANT_TABLE.values():
            raise ValueError(f"unsupported option combination {triple}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.parallel_capacity < 1:
            raise ValueError("parallel_capacity must be a positive integer")
        if self.retrain_policy not in (RETRAIN_ALL_PENDING, RETRAIN_MINIMAL):
            raise ValueError(f"unknown retrain_policy {self.retrain_policy!r}")
        if self.cert_mode not in ("fine", "coarse", "disabled"):
            raise ValueError(f"unknown cert_mode {self.cert_mode!r}")
        if self.context_switch_latency < 0:
            raise ValueError("context_switch_latency must be >= 0")


def variant_config(name: str, **overrides) -> VariantConfig:
    """Build the VariantConfig for one of the eight named policies."""
    if name not in VARIANT_TABLE:
        raise ValueError(f"unknown variant {name!r}; choose from {VARIANT_NAMES}")
    i, ii, iii = VARIANT_TABLE[name]
    overrides.setdefault("certified", name != "SISA")
    return VariantConfig(name, i, ii, iii, **overrides)


# --- actions emitted toward the simulator ---------------------------------


@dataclass
class Job:
    job_id: int
    shard: int
    covered: int  # oldest pending requests this retraining clears
    cause: str  # immediate | uncertified | final
    completion: float | None = None


@dataclass(frozen=True)
class StartRetraining:
    job: Job


@dataclass(frozen=True)
class CompleteUpdate:
    pass


@dataclass(frozen=True)
class HaltInference:
    request: Request


@dataclass(frozen=True)
class PostponeInference:
    request: Request


@dataclass(frozen=True)
class RespondCertified:
    request: Request
    label: int
    verdict: str  # "certified" or "plain"
    versions: tuple
    hypothetical_versions: tuple


@dataclass(frozen=True)
class RespondUncertified:
    request: Request
    label: int
    versions: tuple
    hypothetical_versions: tuple


@dataclass(frozen=True)
class RefuseInference:
    request: Request
    reason: str  # "detected" or "low_confidence"


@dataclass
class _Eval:
    refusal: str | None
    certified: bool
    label: int
    verdict: str
    confidence: float
    preds: np.ndarray
    versions: tuple
    hypothetical: tuple


class _Entry:
    __slots__ = ("request", "sample", "responded", "release_after", "control_counted")

    def __init__(self, request, sample, release_after=0):
        self.request = request
        self.sample = sample
        self.responded = False
        # certification-free baseline only: answer once this many
        # retraining jobs have completed (= jobs outstanding at arrival)
        self.release_after = release_after
        # threshold variants: this request already fed the window counters;
        # later drains reprocess it for response only, never re-counting it
        self.control_counted = False


class Scheduler:
    """Deterministic policy state machine for one simulation run."""

    def __init__(self, cfg: VariantConfig, oracle_cfg: OracleConfig, retrain_duration: float):
        if retrain_duration <= 0:
            raise ValueError("retrain_duration must be positive")
        self.cfg = cfg
        self.oracle_cfg = oracle_cfg
        self.retrain_duration = retrain_duration
        k = oracle_cfg.num_shards
        self.num_shards = k
        self.num_classes = oracle_cfg.num_classes
        self.versions = [0] * k
        self.pending = [deque() for _ in range(k)]
        self.covered = [0] * k  # pendings already claimed by scheduled jobs
        self.jobs_scheduled = [0] * k  # in-flight plus queued jobs per shard
        self.inflight = {}
        self.queue = deque()
        self.backlog: list[_Entry] = []
        self.window_inferences = 0
        self.window_uncertified = 0
        self.judgements = 0
        self.judgements_uncertified = 0
        self.jobs_created = 0
        self.retrainings_completed = 0
        self.uncertification_triggers = 0
        self.final_triggers = 0
        self._job_counter = 0
        self._versions_tuple = tuple(self.versions)
        self._impacted_cache: np.ndarray | None = np.empty(0, dtype=np.int64)

    # -- state inspection --------------------------------------------------

    def busy(self) -> bool:
        return bool(self.inflight) or bool(self.queue)

    def quiet(self) -> bool:
        return not self.busy() and not self.backlog and not any(
            self.pending[k] for k in range(self.num_shards)
        )

    def impacted_shards(self) -> np.ndarray:
        """Shards whose serving model lags behind their pending unlearning."""
        if self._impacted_cache is None:
            self._impacted_cache = np.array(
                [k for k in range(self.num_shards) if self.pending[k]], dtype=np.int64
            )
        return self._impacted_cache

    def _hypothetical_versions(self) -> tuple:
        """Versions each shard will reach once all pending work executes."""
        impacted = self.impacted_shards()
        if impacted.size == 0 and not any(self.jobs_scheduled):
            return self._versions_tuple
        hypo = list(self.versions)
        for k in range(self.num_shards):
            extra = self.jobs_scheduled[k]
            if len(self.pending[k]) > self.covered[k]:
                extra += 1
            hypo[k] += extra
        return tuple(hypo)

    # -- mitigation ----------------------------------------------------------

    def mitigation_filter(self, request: Request, sample: SampleId, confidence: float) -> str:
        """Classify a request under the enabled mitigation policies."""
        mit = self.cfg.mitigation
        if mit is None:
            return MITIGATION_PASS
        if mit.detector_enabled:
            rate = mit.detector_tpr if sample.is_noise else mit.detector_fpr
            draw = mix64(self.oracle_cfg.seed, _SALT_DETECT, request.request_id)
            if draw < min(int(round(rate * 2.0**64)), 2**64):
                return MITIGATION_REJECT
        if mit.confidence_threshold is not None and confidence < mit.confidence_threshold:
            return MITIGATION_DISCARD
        return MITIGATION_PASS

    # -- evaluation ----------------------------------------------------------

    def _evaluate(self, sample: SampleId, request: Request, apply_mitigation=True) -> _Eval:
        mit = self.cfg.mitigation
        if apply_mitigation and mit is not None and mit.detector_enabled:
            rate = mit.detector_tpr if sample.is_noise else mit.detector_fpr
            draw = mix64(self.oracle_cfg.seed, _SALT_DETECT, request.request_id)
            if draw < min(int(round(rate * 2.0**64)), 2**64):
                return _Eval("detected", False, -1, "refused", 0.0, None, (), ())
        preds = oracle_mod.predict_vector(self.oracle_cfg, sample, self.versions)
        counts = count_votes(preds, self.num_classes)
        winner = aggregate(counts)
        conf = int(counts[winner]) / self.num_shards
        if (
            apply_mitigation
            and mit is not None
            and mit.confidence_threshold is not None
            and conf < mit.confidence_threshold
        ):
            return _Eval("low_confidence", False, winner, "refused", conf, preds, (), ())
        versions = self._versions_tuple
        if self.cfg.cert_mode == "disabled":
            return _Eval(
                None, True, winner, "plain", conf, preds, versions,
                self._hypothetical_versions(),
            )
        impacted = self.impacted_shards()
        if self.cfg.cert_mode == "coarse":
            ok = certify_coarse(preds, impacted, self.num_classes).certified
        else:
            ok, _ = fine_certified(preds, impacted, self.num_classes)
        self.judgements += 1
        if not ok:
            self.judgements_uncertified += 1
        return _Eval(
            None, ok, winner, "certified" if ok else "uncertified", conf, preds,
            versions, self._hypothetical_versions(),
        )

    def _plain_eval(self, sample: SampleId) -> _Eval:
        # SISA answers with the serving ensemble and consults no certification.
        preds = oracle_mod.predict_vector(self.oracle_cfg, sample, self.versions)
        counts = count_votes(preds, self.num_classes)
        winner = aggregate(counts)
        return _Eval(
            None, True, winner, "plain", int(counts[winner]) / self.num_shards,
            preds, self._versions_tuple, self._hypothetical_versions(),
        )

    def _respond(self, entry_or_none, request, ev) -> list:
        if entry_or_none is not None:
            entry_or_none.responded = True
        if ev.verdict == "uncertified":
            return [RespondUncertified(request, ev.label, ev.versions, ev.hypothetical)]
        return [RespondCertified(request, ev.label, ev.verdict, ev.versions, ev.hypothetical)]

    def _refuse(self, entry_or_none, request, ev) -> list:
        if entry_or_none is not None:
            entry_or_none.responded = True
        return [RefuseInference(request, ev.refusal)]

    # -- retraining job plumbing ----------------------------------------------

    def _start_or_enqueue(self, job: Job, now: float, delay: float = 0.0) -> list:
        self.jobs_scheduled[job.shard] += 1
        if len(self.inflight) < self.cfg.parallel_capacity:
            job.completion = now + delay + self.retrain_duration
            self.inflight[job.job_id] = job
            return [StartRetraining(job)]
        self.queue.append(job)
        return []

    def _new_job(self, shard: int, covered: int, cause: str) -> Job:
        self._job_counter += 1
        self.jobs_created += 1
        return Job(self._job_counter, shard, covered, cause)

    # -- arrival handling -------------------------------------------------------

    def on_unlearning_arrival(self, request: Request, now: float) -> list:
        if request.kind != UNLEARNING:
            raise ValueError(f"expected an unlearning request, got {request.kind}")
        shard = request.target_shard
        if self.cfg.shuffle_shards:
            shard = mix64(self.oracle_cfg.seed, _SALT_SHUFFLE, request.request_id) % self.num_shards
        if not 0 <= shard < self.num_shards:
            raise ValueError(f"target shard {shard} outside [0, {self.num_shards})")
        self.pending[shard].append(request.request_id)
        self._impacted_cache = None
        if self.cfg.option_ii != IMMEDIATE:
            return []
        # one retraining per request, even when the shard already has jobs
        job = self._new_job(shard, covered=1, cause="immediate")
        self.covered[shard] += 1
        return self._start_or_enqueue(job, now)

    def on_inference_arrival(self, request: Request, now: float) -> list:
        if request.kind != INFERENCE:
            raise ValueError(f"expected an inference request, got {request.kind}")
        sample = oracle_mod.sample_for(self.oracle_cfg, request.sample, request.is_noise)
        if not self.cfg.certified:
            if self.busy():
                # unlearning-request-first: wait for every retraining that
                # predates this request, but not for later arrivals
                self.backlog.append(_Entry(request, sample, self.jobs_created))
                return [HaltInference(request)]
            return self._respond(None, request, self._plain_eval(sample))
        if self.cfg.option_i == SINGLE_CONTEXT and self.busy():
            self.backlog.append(_Entry(request, sample))
            return [HaltInference(request)]
        if self.cfg.option_i == DOUBLE_CONTEXT and self.cfg.option_ii != IMMEDIATE and self.busy():
            # mid-update: answer what we soundly can; counting waits for the
            # control pass at update completion
            entry = _Entry(request, sample)
            self.backlog.append(entry)
            ev = self._evaluate(sample, request)
            if ev.refusal is not None:
                return self._refuse(entry, request, ev)
            if ev.certified:
                return self._respond(entry, request, ev)
            return [PostponeInference(request)]
        return self._live_inference(request, sample, now)

    def _live_inference(self, request: Request, sample: SampleId, now: float) -> list:
        ev = self._evaluate(sample, request)
        if ev.refusal is not None:
            return self._refuse(None, request, ev)
        threshold = self.cfg.option_ii == THRESHOLD_TRIGGERED
        if threshold:
            self.window_inferences += 1
        if ev.certified:
            return self._respond(None, request, ev)
        if self.cfg.option_ii == IMMEDIATE:
            self.backlog.append(_Entry(request, sample))
            return [PostponeInference(request)]
        if self.cfg.option_ii == UNCERT_TRIGGERED:
            self.backlog.append(_Entry(request, sample))
            return [PostponeInference(request)] + self._trigger_update(now, ev)
        self.window_uncertified += 1
        entry = _Entry(request, sample)
        entry.control_counted = True
        if self.window_uncertified > self.cfg.threshold * self.window_inferences:
            self.backlog.append(entry)
            return [PostponeInference(request)] + self._trigger_update(now, ev)
        if self.cfg.option_iii == RESPOND_UNCERTIFIED:
            return self._respond(None, request, ev)
        self.backlog.append(entry)
        return [PostponeInference(request)]

    # -- retraining completion -----------------------------------------------

    def on_retraining_complete(self, job_id: int, now: float) -> list:
        job = self.inflight.pop(job_id, None)
        if job is None:
            raise RuntimeError(f"completion for unknown retraining job {job_id}")
        shard = job.shard
        self.versions[shard] += 1
        self._versions_tuple = tuple(self.versions)
        for _ in range(job.covered):
            self.pending[shard].popleft()
        self.covered[shard] -= job.covered
        self.jobs_scheduled[shard] -= 1
        self._impacted_cache = None
        self.retrainings_completed += 1
        actions = []
        if self.queue:
            nxt = self.queue.popleft()
            nxt.completion = now + self.retrain_duration
            self.inflight[nxt.job_id] = nxt
            actions.append(StartRetraining(nxt))
        if not self.cfg.certified:
            actions += self._release_baseline(now)
        elif self.cfg.option_i == DOUBLE_CONTEXT:
            actions += self._respond_ready(now)
        if not self.busy():
            actions += self._on_update_complete(now)
        return actions

    def _release_baseline(self, now: float) -> list:
        # jobs finish in creation order, so an entry is safe to answer once
        # the completion count reaches the jobs outstanding at its arrival
        actions = []
        keep = []
        for entry in self.backlog:
            if entry.release_after <= self.retrainings_completed:
                actions += self._respond(entry, entry.request, self._plain_eval(entry.sample))
            else:
                keep.append(entry)
        self.backlog = keep
        return actions

    def _respond_ready(self, now: float) -> list:
        # response plane: every completion shrinks the impacted set, so
        # postponed requests are re-judged and answered as soon as they pass
        actions = []
        for entry in self.backlog:
            if entry.responded:
                continue
            ev = self._evaluate(entry.sample, entry.request, apply_mitigation=False)
            if ev.certified:
                actions += self._respond(entry, entry.request, ev)
        return actions

    def _on_update_complete(self, now: float) -> list:
        actions: list = [CompleteUpdate()]
        if self.cfg.option_ii == THRESHOLD_TRIGGERED:
            self.window_inferences = 0
            self.window_uncertified = 0
        actions += self._drain(now)
        return actions

    def _drain(self, now: float) -> list:
        """Control pass over the backlog after an update (or at shutdown)."""
        actions: list = []
        remaining: list[_Entry] = []
        trigger_ev = None
        for i, entry in enumerate(self.backlog):
            if not self.cfg.certified:
                if not entry.responded:
                    actions += self._respond(entry, entry.request, self._plain_eval(entry.sample))
                continue
            ev = self._evaluate(entry.sample, entry.request)
            if ev.refusal is not None:
                if not entry.responded:
                    actions += self._refuse(entry, entry.request, ev)
                continue
            threshold = self.cfg.option_ii == THRESHOLD_TRIGGERED
            if threshold and entry.control_counted:
                # reprocessing of an already-counted request: respond if the
                # fresh state certifies it, otherwise keep waiting
                if ev.certified:
                    if not entry.responded:
                        actions += self._respond(entry, entry.request, ev)
                else:
                    remaining.append(entry)
                continue
            if threshold:
                self.window_inferences += 1
            if ev.certified:
                if not entry.responded:
                    actions += self._respond(entry, entry.request, ev)
                continue
            if self.cfg.option_ii == IMMEDIATE:
                remaining.append(entry)
                continue
            if self.cfg.option_ii == UNCERT_TRIGGERED:
                trigger_ev = ev
                remaining.append(entry)
                remaining.extend(self.backlog[i + 1 :])
                break
            self.window_uncertified += 1
            entry.control_counted = True
            if self.window_uncertified > self.cfg.threshold * self.window_inferences:
                trigger_ev = ev
                remaining.append(entry)
                remaining.extend(self.backlog[i + 1 :])
                break
            if self.cfg.option_iii == RESPOND_UNCERTIFIED:
                if not entry.responded:
                    actions += self._respond(entry, entry.request, ev)
                continue
            remaining.append(entry)
        else:
            self.backlog = remaining
            return actions
        # a trigger fired mid-drain; the rest of the backlog rides along
        self.backlog = remaining
        actions += self._trigger_update(now, trigger_ev)
        if self.cfg.option_i == DOUBLE_CONTEXT:
            actions += self._respond_ready(now)
        return actions

    # -- update triggering -----------------------------------------------------

    def trigger_update(self, now: float) -> list:
        """Batch-retrain every shard with pending unlearning requests."""
        return self._trigger_update(now, None)

    def _trigger_update(self, now: float, trigger_ev, cause: str = "uncertified") -> list:
        if self.busy():
            raise RuntimeError("update triggered while retraining is in progress")
        candidates = [k for k in range(self.num_shards) if self.pending[k]]
        if not candidates:
            return []
        if self.cfg.retrain_policy == RETRAIN_MINIMAL and trigger_ev is not None:
            chosen = self._minimal_shard_set(candidates, trigger_ev)
        else:
            chosen = candidates
        if cause == "uncertified":
            self.uncertification_triggers += 1
        else:
            self.final_triggers += 1
        delay = (
            self.cfg.context_switch_latency
            if self.cfg.option_i == SINGLE_CONTEXT
            else 0.0
        )
        actions = []
        for k in chosen:
            job = self._new_job(k, covered=len(self.pending[k]), cause=cause)
            self.covered[k] = len(self.pending[k])
            actions += self._start_or_enqueue(job, now, delay)
        return actions

    def _minimal_shard_set(self, candidates, trigger_ev) -> list:
        # most-loaded shards first; retrain just enough that the triggering
        # sample would certify, topped up to the parallel capacity
        order = sorted(candidates, key=lambda k: (-len(self.pending[k]), k))
        need = len(order)
        for j in range(1, len(order) + 1):
            rest = np.array(sorted(set(candidates) - set(order[:j])), dtype=np.int64)
            ok, _ = fine_certified(trigger_ev.preds, rest, self.num_classes)
            if ok:
                need = j
                break
        take = min(max(need, self.cfg.parallel_capacity), len(order))
        return sorted(order[:take])

    # -- shutdown ---------------------------------------------------------------

    def finalize(self, now: float) -> list:
        """Drain step run at end of workload: execute leftover unlearning.

        The serving period ends with every pending request actually
        unlearned, so schedulers that batch lazily still pay for their
        leftovers and postponed inferences always resolve.
        """
        if self.busy():
            return []
        if any(self.pending[k] for k in range(self.num_shards)):
            return self._trigger_update(now, None, cause="final")
        if self.backlog:
            return self._drain(now)
        return []
