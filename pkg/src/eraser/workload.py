"""Request stream generation.

A workload is a time-sorted list of inference and unlearning requests over
a horizon [0, T]. Arrival times follow uniform, (truncated) Gaussian, or
multimodal-Gaussian profiles; samples falling outside [0, T] are re-drawn
until they land inside. Unlearning requests target shards either uniformly
at random or in the adversarial round-robin pattern that maximizes how
scattered the pending set is. A configurable fraction of inference samples
is flagged as noise (the hard-to-classify attack inputs).

Streams round-trip through CSV (schema:
``request_id,kind,arrival,shard_or_sample,is_noise``) so the identical
workload can be fed to every scheduler variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INFERENCE = "inference"
UNLEARNING = "unlearning"

# Merge order at equal arrival times: unlearning ahead of inference.
_KIND_PRIORITY = {UNLEARNING: 0, INFERENCE: 1}

UNIFORM_RANDOM = "uniform_random"
SCATTERED_ROUND_ROBIN = "scattered_round_robin"


@dataclass(frozen=True)
class Request:
    kind: str
    arrival: float
    request_id: int = -1
    sample: int = -1
    is_noise: bool = False
    target_shard: int = -1

    def __post_init__(self):
        if self.kind not in (INFERENCE, UNLEARNING):
            raise ValueError(f"unknown request kind {self.kind!r}")
        if self.arrival < 0:
            raise ValueError(f"arrival must be >= 0, got {self.arrival}")
        if self.kind == INFERENCE and self.sample < 0:
            raise ValueError("inference request needs a sample id")
        if self.kind == UNLEARNING and self.target_shard < 0:
            raise ValueError("unlearning request needs a target shard")


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Multimodal:
    means: tuple
    sigmas: tuple
    weights: tuple

    def __post_init__(self):
        if not (len(self.means) == len(self.sigmas) == len(self.weights)):
            raise ValueError("means, sigmas, weights must have equal length")
        if len(self.means) == 0:
            raise ValueError("multimodal needs at least one component")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError("all sigmas must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")


def symmetric_multimodal(num_modes: int, horizon: float) -> Multimodal:
    """Default m-peak profile: equal weights, means at i*T/(m+1), sigma T/(3m)."""
    if num_modes < 1:
        raise ValueError("num_modes must be >= 1")
    means = tuple(i * horizon / (num_modes + 1) for i in range(1, num_modes + 1))
    return Multimodal(
        means, (horizon / (3 * num_modes),) * num_modes, (1.0 / num_modes,) * num_modes
    )


UNIFORM = "uniform"


@dataclass(frozen=True)
class WorkloadSpec:
    n_unlearning: int
    n_inference: int
    horizon: float
    seed: int
    distribution_u: object = UNIFORM
    distribution_i: object = UNIFORM
    shard_assignment: str = UNIFORM_RANDOM
    noise_fraction: float = 0.0

    def __post_init__(self):
        if self.n_unlearning < 0 or self.n_inference < 0:
            raise ValueError("request counts must be non-negative")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.shard_assignment not in (UNIFORM_RANDOM, SCATTERED_ROUND_ROBIN):
            raise ValueError(f"unknown shard_assignment {self.shard_assignment!r}")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")
        for dist in (self.distribution_u, self.distribution_i):
            if dist != UNIFORM and not isinstance(dist, (Gaussian, Multimodal)):
                raise ValueError(f"unknown distribution {dist!r}")


def _sample_arrivals(rng, dist, n, horizon):
    if n == 0:
        return np.empty(0)
    if dist == UNIFORM:
        return rng.uniform(0.0, horizon, n)
    out = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        if isinstance(dist, Gaussian):
            draw = rng.normal(dist.mu, dist.sigma, want)
        else:
            comp = rng.choice(len(dist.means), size=want, p=np.asarray(dist.weights))
            draw = rng.normal(
                np.asarray(dist.means)[comp], np.asarray(dist.sigmas)[comp]
            )
        keep = draw[(draw >= 0.0) & (draw <= horizon)]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    return out


def _finalize(requests):
    requests.sort(key=lambda r: (r.arrival, _KIND_PRIORITY[r.kind], r.request_id))
    return [
        Request(
            r.kind, r.arrival, i, r.sample, r.is_noise, r.target_shard
        )
        for i, r in enumerate(requests)
    ]


def generate(spec: WorkloadSpec, num_shards: int) -> list[Request]:
    """Produce the sorted request stream described by ``spec``.

    The result is a pure function of (spec, num_shards). Exactly
    ``round(noise_fraction * n_inference)`` inference samples carry the
    noise flag.
    """
    if num_shards < 1:
        raise ValueError(f"num_shards must be >= 1, got {num_shards}")
    rng = np.random.default_rng(spec.seed)
    u_arrivals = np.sort(_sample_arrivals(rng, spec.distribution_u, spec.n_unlearning, spec.horizon))
    i_arrivals = np.sort(_sample_arrivals(rng, spec.distribution_i, spec.n_inference, spec.horizon))

    if spec.shard_assignment == SCATTERED_ROUND_ROBIN:
        shards = np.arange(spec.n_unlearning, dtype=np.int64) % num_shards
    else:
        shards = rng.integers(0, num_shards, spec.n_unlearning)

    n_noise = round(spec.noise_fraction * spec.n_inference)
    noise = np.zeros(spec.n_inference, dtype=bool)
    if n_noise:
        noise[rng.choice(spec.n_inference, size=n_noise, replace=False)] = True

    requests = [
        Request(UNLEARNING, float(t), i, target_shard=int(shards[i]))
        for i, t in enumerate(u_arrivals)
    ]
    requests += [
        Request(INFERENCE, float(t), i, sample=i, is_noise=bool(noise[i]))
        for i, t in enumerate(i_arrivals)
    ]
    return _finalize(requests)


def deterministic_unlearning_grid(
    n_unlearning: int,
    horizon: float,
    num_shards: int = 1,
    seed: int = 0,
    shard_assignment: str = UNIFORM_RANDOM,
) -> list[Request]:
    """Unlearning requests at exact fixed intervals: 0, T/n, 2T/n, ...

    This is the arrival model the closed-form waiting-time results assume;
    use it whenever simulation is compared against them.
    """
    if n_unlearning < 1:
        raise ValueError("need at least one unlearning request")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(seed)
    if shard_assignment == SCATTERED_ROUND_ROBIN:
        shards = np.arange(n_unlearning, dtype=np.int64) % num_shards
    elif shard_assignment == UNIFORM_RANDOM:
        shards = rng.integers(0, num_shards, n_unlearning)
    else:
        raise ValueError(f"unknown shard_assignment {shard_assignment!r}")
    return _finalize(
        [
            Request(UNLEARNING, i * horizon / n_unlearning, i, target_shard=int(shards[i]))
            for i in range(n_unlearning)
        ]
    )


def merge_streams(*streams) -> list[Request]:
    """Merge pre-built streams into one sorted stream with fresh request ids."""
    merged = [r for s in streams for r in s]
    return _finalize(merged)


def export_csv(stream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("request_id,kind,arrival,shard_or_sample,is_noise\n")
        for r in stream:
            payload = r.target_shard if r.kind == UNLEARNING else r.sample
            fh.write(f"{r.request_id},{r.kind},{r.arrival!r},{payload},{int(r.is_noise)}\n")


def import_csv(path) -> list[Request]:
    requests = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "request_id,kind,arrival,shard_or_sample,is_noise":
            raise ValueError(f"line 1: unexpected workload header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(fields)}")
            rid, kind, arrival, payload, is_noise = fields
            try:
                rid = int(rid)
                arrival = float(arrival)
                payload = int(payload)
                is_noise = bool(int(is_noise))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            if kind == UNLEARNING:
                requests.append(Request(kind, arrival, rid, target_shard=payload))
            elif kind == INFERENCE:
                requests.append(Request(kind, arrival, rid, sample=payload, is_noise=is_noise))
            else:
                raise ValueError(f"line {lineno}: unknown kind {kind!r}")
    return requests
