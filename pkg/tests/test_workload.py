import numpy as np
import pytest
from scipy import stats

from eraser.workload import (
    INFERENCE,
    SCATTERED_ROUND_ROBIN,
    UNLEARNING,
    Gaussian,
    Multimodal,
    Request,
    WorkloadSpec,
    deterministic_unlearning_grid,
    export_csv,
    generate,
    import_csv,
    merge_streams,
    symmetric_multimodal,
)


def arrivals(stream, kind=None):
    return [r.arrival for r in stream if kind is None or r.kind == kind]


def test_generate_uniform_sorted_in_range():
    spec = WorkloadSpec(4, 10, 100.0, seed=1)
    stream = generate(spec, 8)
    times = arrivals(stream)
    assert times == sorted(times)
    assert all(0 <= t <= 100 for t in times)
    assert sum(r.kind == UNLEARNING for r in stream) == 4
    assert sum(r.kind == INFERENCE for r in stream) == 10
    assert [r.request_id for r in stream] == list(range(14))


def test_generate_is_pure_function_of_spec():
    spec = WorkloadSpec(50, 100, 40.0, seed=77, noise_fraction=0.2)
    assert generate(spec, 5) == generate(spec, 5)
    assert generate(spec, 5) != generate(WorkloadSpec(50, 100, 40.0, seed=78, noise_fraction=0.2), 5)


def test_gaussian_tail_mass_resampled_into_range():
    spec = WorkloadSpec(0, 2000, 100.0, seed=3, distribution_i=Gaussian(50.0, 33.3))
    times = arrivals(generate(spec, 1))
    assert min(times) >= 0 and max(times) <= 100
    # edge-centered peak still lands inside
    spec = WorkloadSpec(0, 2000, 100.0, seed=3, distribution_i=Gaussian(25.0, 50.0))
    times = arrivals(generate(spec, 1))
    assert min(times) >= 0 and max(times) <= 100


def test_degenerate_sigma_rejected():
    with pytest.raises(ValueError):
        Gaussian(10.0, 0.0)
    with pytest.raises(ValueError):
        Multimodal((10.0,), (-1.0,), (1.0,))
    with pytest.raises(ValueError):
        Multimodal((10.0, 20.0), (1.0, 1.0), (0.7, 0.7))


def test_truncated_gaussian_moments():
    T = 100.0
    spec = WorkloadSpec(0, 100_000, T, seed=9, distribution_i=Gaussian(T / 2, T / 3))
    arr = np.array(arrivals(generate(spec, 1)))
    a, b = (0 - T / 2) / (T / 3), (T - T / 2) / (T / 3)
    tmean = stats.truncnorm.mean(a, b, loc=T / 2, scale=T / 3)
    tstd = stats.truncnorm.std(a, b, loc=T / 2, scale=T / 3)
    assert abs(arr.mean() - tmean) / tmean < 0.02
    assert abs(arr.std() - tstd) / tstd < 0.02


def test_more_modes_approach_uniform_coverage():
    T = 100.0
    ks = []
    for m in (2, 4, 8, 16):
        spec = WorkloadSpec(0, 20_000, T, seed=9, distribution_i=symmetric_multimodal(m, T))
        arr = np.array(arrivals(generate(spec, 1))) / T
        ks.append(stats.kstest(arr, "uniform").statistic)
    assert all(later < earlier for earlier, later in zip(ks, ks[1:]))


def test_scattered_round_robin_targets():
    spec = WorkloadSpec(45, 0, 100.0, seed=5, shard_assignment=SCATTERED_ROUND_ROBIN)
    stream = generate(spec, 20)
    unlearn = [r for r in stream if r.kind == UNLEARNING]
    assert [r.target_shard for r in unlearn] == [i % 20 for i in range(45)]


def test_noise_fraction_exact_count():
    spec = WorkloadSpec(0, 1001, 10.0, seed=2, noise_fraction=0.25)
    stream = generate(spec, 3)
    assert sum(r.is_noise for r in stream) == round(0.25 * 1001)


def test_unlearning_grid_examples():
    grid = deterministic_unlearning_grid(4, 100.0)
    assert arrivals(grid) == [0.0, 25.0, 50.0, 75.0]
    assert arrivals(deterministic_unlearning_grid(1, 100.0)) == [0.0]
    times = arrivals(deterministic_unlearning_grid(10, 100.0))
    assert all(b - a == pytest.approx(10.0) for a, b in zip(times, times[1:]))
    assert all(r.kind == UNLEARNING for r in grid)


def test_merge_streams_reassigns_ids():
    grid = deterministic_unlearning_grid(3, 30.0, num_shards=4, seed=0)
    infer = generate(WorkloadSpec(0, 5, 30.0, seed=0), 4)
    merged = merge_streams(grid, infer)
    assert [r.request_id for r in merged] == list(range(8))
    times = arrivals(merged)
    assert times == sorted(times)


def test_equal_time_unlearning_sorts_first():
    stream = merge_streams(
        [Request(INFERENCE, 5.0, 0, sample=0)],
        [Request(UNLEARNING, 5.0, 0, target_shard=1)],
    )
    assert [r.kind for r in stream] == [UNLEARNING, INFERENCE]


def test_csv_roundtrip(tmp_path):
    spec = WorkloadSpec(20, 30, 50.0, seed=11, noise_fraction=0.1)
    stream = generate(spec, 6)
    path = tmp_path / "workload.csv"
    export_csv(stream, path)
    assert import_csv(path) == stream


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope\n")
    with pytest.raises(ValueError, match="line 1"):
        import_csv(path)


def test_request_validation():
    with pytest.raises(ValueError):
        Request("other", 0.0, 0)
    with pytest.raises(ValueError):
        Request(INFERENCE, -1.0, 0, sample=1)
    with pytest.raises(ValueError):
        Request(INFERENCE, 0.0, 0)  # missing sample
    with pytest.raises(ValueError):
        Request(UNLEARNING, 0.0, 0)  # missing shard
