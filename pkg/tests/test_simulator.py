import numpy as np
import pytest

from eraser.oracle import OracleConfig, PredictionTrace
from eraser.simulator import (
    SimParams,
    estimate_p_uc,
    replay_privacy_check,
    run,
)
from eraser.scheduler import variant_config
from eraser.workload import Request, WorkloadSpec, generate


def oc(K=3, C=2, accuracy=1.0, seed=1, **kw):
    return OracleConfig(C, K, accuracy, seed=seed, **kw)


def u(rid, shard, t):
    return Request("unlearning", t, rid, target_shard=shard)


def q(rid, sample, t, noise=False):
    return Request("inference", t, rid, sample=sample, is_noise=noise)


def test_empty_workload():
    m = run([], variant_config("SISA", parallel_capacity=3), oc(), SimParams(5.0, 10.0))
    assert m.awt == 0.0 and m.nor == 0 and m.num_inferences == 0


def test_sisa_halts_until_prior_retraining_finishes():
    wl = [u(0, 1, 0.0), q(1, 0, 2.0)]
    m = run(wl, variant_config("SISA", parallel_capacity=3), oc(), SimParams(5.0, 10.0))
    assert m.awt == pytest.approx(3.0)
    assert m.nor == 1
    rec = m.per_request_log[0]
    assert rec.response == pytest.approx(5.0) and rec.verdict == "plain"


def test_dimp_certified_inference_does_not_wait():
    wl = [u(0, 1, 0.0), q(1, 0, 2.0)]
    m = run(wl, variant_config("DIMP", parallel_capacity=3), oc(), SimParams(5.0, 10.0))
    assert m.awt == 0.0 and m.nor == 1
    assert m.per_request_log[0].verdict == "certified"


def test_unsorted_workload_rejected():
    wl = [q(0, 0, 5.0), u(1, 0, 1.0)]
    with pytest.raises(ValueError, match="sorted"):
        run(wl, variant_config("SISA", parallel_capacity=3), oc(), SimParams(5.0, 10.0))


def test_out_of_horizon_arrival_rejected():
    wl = [q(0, 0, 50.0)]
    with pytest.raises(ValueError, match="outside"):
        run(wl, variant_config("SISA", parallel_capacity=3), oc(), SimParams(5.0, 10.0))


def _trace_oracle():
    # sample 0 at version 0 votes [0,0,0,1,0]; retrained shards keep shapes
    # that leave the winner at 0
    entries = {}
    votes = [0, 0, 0, 1, 0]
    for k in range(5):
        entries[(0, k, 0)] = (votes[k], 1.0)
    entries[(0, 0, 1)] = (0, 1.0)
    entries[(0, 1, 1)] = (1, 1.0)
    trace = PredictionTrace(2, 5, entries)
    return OracleConfig(2, 5, 0.9, seed=0, backend="trace", trace=trace)


def test_postponed_inference_released_at_first_sufficient_completion():
    # two impacted winner-voting shards make sample 0 uncertified; after the
    # first retraining completes the remaining margin certifies it, so the
    # response lands at that completion, not at the end of the whole update
    cfg = _trace_oracle()
    wl = [u(0, 0, 0.0), u(1, 1, 0.5), q(2, 0, 1.0)]
    m = run(wl, variant_config("DUTP", parallel_capacity=1), cfg, SimParams(5.0, 20.0))
    rec = m.per_request_log[0]
    assert rec.verdict == "certified"
    assert rec.response == pytest.approx(6.0)  # first completion: 1 + 5
    assert m.nor == 2  # second shard still retrains, finishing at 11
    assert m.postponed_count == 1
    assert replay_privacy_check(m.per_request_log, cfg) == 0


def test_single_context_twin_waits_for_the_full_update():
    cfg = _trace_oracle()
    wl = [u(0, 0, 0.0), u(1, 1, 0.5), q(2, 0, 1.0)]
    m = run(wl, variant_config("SUTP", parallel_capacity=1), cfg, SimParams(5.0, 20.0))
    rec = m.per_request_log[0]
    assert rec.response == pytest.approx(11.0)  # both jobs done: 1 + 5 + 5
    assert m.nor == 2


def test_mid_update_arrival_halts_in_single_context():
    cfg = _trace_oracle()
    wl = [u(0, 0, 0.0), u(1, 1, 0.5), q(2, 0, 1.0), q(3, 0, 2.0)]
    m = run(wl, variant_config("SUTP", parallel_capacity=2), cfg, SimParams(5.0, 20.0))
    by_id = {rec.request_id: rec for rec in m.per_request_log}
    # both jobs run in parallel [1, 6]; the trigger request and the halted
    # mid-update arrival drain at the context switch
    assert by_id[2].response == pytest.approx(6.0)
    assert by_id[3].response == pytest.approx(6.0)


def test_leftover_pending_unlearning_runs_at_shutdown():
    wl = [u(0, 2, 1.0)]
    m = run(wl, variant_config("SUTP", parallel_capacity=3), oc(), SimParams(5.0, 10.0))
    assert m.nor == 1
    assert m.final_triggers == 1 and m.uncertification_triggers == 0


def test_conservation_and_awt_recomputation():
    spec = WorkloadSpec(40, 400, 40.0, seed=12, noise_fraction=0.05)
    wl = generate(spec, 10)
    cfg = oc(K=10, C=4, accuracy=0.8, seed=12)
    for name in ("DIMP", "SUTP", "DTTU", "STTP", "SISA"):
        m = run(wl, variant_config(name, parallel_capacity=10), cfg, SimParams(1.0, 40.0))
        assert len(m.per_request_log) == m.num_inferences == 400
        assert m.num_unlearnings == 40
        recomputed = float(np.mean([rec.wait for rec in m.per_request_log]))
        assert recomputed == pytest.approx(m.awt, abs=0.0)
        assert all(rec.response >= rec.arrival for rec in m.per_request_log)


def test_runs_are_bit_identical():
    spec = WorkloadSpec(30, 300, 30.0, seed=8)
    wl = generate(spec, 10)
    cfg = oc(K=10, C=10, accuracy=0.85, seed=8)
    a = run(wl, variant_config("DTTP", parallel_capacity=10), cfg, SimParams(1.0, 30.0))
    b = run(wl, variant_config("DTTP", parallel_capacity=10), cfg, SimParams(1.0, 30.0))
    assert a == b


def test_service_time_extends_every_response():
    wl = [q(0, 0, 1.0)]
    m = run(wl, variant_config("DIMP", parallel_capacity=3), oc(),
            SimParams(5.0, 10.0, inference_service_time=0.25))
    assert m.per_request_log[0].response == pytest.approx(1.25)
    assert m.awt == pytest.approx(0.25)


def test_replay_clean_for_postpone_variants():
    spec = WorkloadSpec(60, 500, 60.0, seed=21)
    wl = generate(spec, 12)
    cfg = oc(K=12, C=6, accuracy=0.75, seed=21)
    for name in ("DIMP", "SUTP", "DUTP", "STTP", "DTTP"):
        m = run(wl, variant_config(name, parallel_capacity=12), cfg, SimParams(1.0, 60.0))
        assert replay_privacy_check(m.per_request_log, cfg) == 0


def test_replay_counts_only_authoritative_answers():
    spec = WorkloadSpec(60, 500, 60.0, seed=22)
    wl = generate(spec, 12)
    cfg = oc(K=12, C=6, accuracy=0.75, seed=22)
    m = run(wl, variant_config("STTU", parallel_capacity=12), cfg, SimParams(1.0, 60.0))
    assert m.uncertified_responses > 0
    certified = [rec for rec in m.per_request_log if rec.verdict == "certified"]
    assert replay_privacy_check(m.per_request_log, cfg) == 0
    assert replay_privacy_check(certified, cfg) == 0


def test_disabled_certification_emulation_leaks():
    # answer-everything-now service: pending unlearning piles up while stale
    # answers go out, and the replay finds flipped labels
    cfg = oc(K=10, C=10, accuracy=0.6, seed=11)
    spec = WorkloadSpec(100, 500, 100.0, seed=11,
                        shard_assignment="scattered_round_robin", noise_fraction=0.5)
    wl = generate(spec, 10)
    v = variant_config("DUTP", parallel_capacity=10, cert_mode="disabled")
    m = run(wl, v, cfg, SimParams(1.0, 100.0))
    assert m.awt == 0.0  # nothing ever waits
    assert replay_privacy_check(m.per_request_log, cfg) > 0


def test_estimate_p_uc():
    spec = WorkloadSpec(40, 300, 40.0, seed=4)
    wl = generate(spec, 8)
    cfg = oc(K=8, C=4, accuracy=0.7, seed=4)
    m = run(wl, variant_config("DIMP", parallel_capacity=8), cfg, SimParams(1.0, 40.0))
    assert estimate_p_uc(m) == pytest.approx(m.judgements_uncertified / m.judgements)
    empty = run([], variant_config("DIMP", parallel_capacity=8), cfg, SimParams(1.0, 40.0))
    assert estimate_p_uc(empty) == 0.0


def test_at_most_capacity_jobs_in_flight():
    import heapq

    from eraser.scheduler import Scheduler, StartRetraining

    s = Scheduler(variant_config("DIMP", parallel_capacity=2), oc(K=10, C=2, seed=6), 3.0)
    heap = []
    seq = 0

    def push(acts):
        nonlocal seq
        for a in acts:
            if isinstance(a, StartRetraining):
                heapq.heappush(heap, (a.job.completion, seq, a.job))
                seq += 1
            assert len(s.inflight) <= 2

    for rid in range(100):
        push(s.on_unlearning_arrival(u(rid, rid % 10, 0.0), 0.0))
    last = 0.0
    while heap:
        t, _, job = heapq.heappop(heap)
        last = t
        push(s.on_retraining_complete(job.job_id, t))
    assert s.retrainings_completed == 100
    assert last == pytest.approx(150.0)  # 100 jobs, 2 slots, 3s each


def test_uncertified_responses_stay_within_the_budget():
    # answered-uncertified responses obey the window rule, which caps the
    # run total at theta times the inferences ever counted
    spec = WorkloadSpec(500, 4500, 500.0, seed=42)
    wl = generate(spec, 20)
    cfg = oc(K=20, C=10, accuracy=0.9, seed=42)
    for theta in (0.02, 0.05, 0.1):
        for name in ("STTU", "DTTU"):
            m = run(wl, variant_config(name, threshold=theta, parallel_capacity=20),
                    cfg, SimParams(1.0, 500.0), collect_log=False)
            assert m.uncertified_responses <= theta * m.num_inferences
    for name in ("STTP", "DTTP", "SUTP", "DUTP", "DIMP", "SISA"):
        m = run(wl, variant_config(name, parallel_capacity=20), cfg,
                SimParams(1.0, 500.0), collect_log=False)
        assert m.uncertified_responses == 0
