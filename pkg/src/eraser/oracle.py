"""Constituent-model prediction oracle.

The simulator never trains real models. Instead, every (sample, shard,
version) triple maps deterministically to a label:

* synthetic backend — a seeded counter-based hash decides, per triple,
  whether the shard predicts the sample's true label (with probability
  ``accuracy``) or a uniformly random wrong label. Noise samples (the
  hard-to-classify adversarial inputs) draw uniformly over all classes
  regardless of accuracy. Retraining a shard (version bump) resamples its
  prediction independently, matching the worst-case stance of the
  consistency analysis; an optional ``flip_probability`` makes retrained
  models keep their previous prediction with probability 1-p instead.
* trace backend — predictions replayed from a file exported by real
  models (format below), for driving the simulator with measured data.

Trace file format (UTF-8)::

    eraser-trace v1 C=<int> K=<int>
    <sample_id>,<shard_id>,<version>,<label>,<confidence>

with one record per line and confidence a decimal in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import aggregate, count_votes
from .hashing import mix64, mix64_array, mix64_chain

_SALT_TRUE = 0xA1
_SALT_ACCEPT = 0xA2
_SALT_WRONG = 0xA3
_SALT_NOISE = 0xA4
_SALT_FLIP = 0xA5

_MASK = 0xFFFFFFFFFFFFFFFF


class TraceError(ValueError):
    """Raised for malformed trace files or missing trace entries."""


@dataclass(frozen=True)
class SampleId:
    """One inference sample: integer identity, noise flag, ground-truth label."""

    value: int
    is_noise: bool
    true_label: int


@dataclass(frozen=True)
class PredictionTrace:
    """In-memory replay table: (sample, shard, version) -> (label, confidence)."""

    num_classes: int
    num_shards: int
    entries: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OracleConfig:
    num_classes: int
    num_shards: int
    accuracy: float
    seed: int
    backend: str = "synthetic"
    trace: PredictionTrace | None = None
    flip_probability: float | None = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.num_shards < 1:
            raise ValueError(f"num_shards must be >= 1, got {self.num_shards}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if self.backend not in ("synthetic", "trace"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "trace" and self.trace is None:
            raise ValueError("trace backend requires a loaded PredictionTrace")
        if self.flip_probability is not None and not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must be in [0, 1]")

    @property
    def accept_threshold(self) -> int:
        return min(int(round(self.accuracy * 2.0**64)), 2**64)


def true_label_for(cfg: OracleConfig, sample_value: int) -> int:
    """Ground-truth label of a sample, derived from the oracle seed."""
    return mix64(cfg.seed, _SALT_TRUE, sample_value) % cfg.num_classes


def sample_for(cfg: OracleConfig, sample_value: int, is_noise: bool = False) -> SampleId:
    """Build the SampleId for a raw workload sample id."""
    return SampleId(sample_value, is_noise, true_label_for(cfg, sample_value))


def _fresh_label(cfg, sample, shard, version) -> int:
    if sample.is_noise:
        return mix64(cfg.seed, _SALT_NOISE, sample.value, shard, version) % cfg.num_classes
    if mix64(cfg.seed, _SALT_ACCEPT, sample.value, shard, version) < cfg.accept_threshold:
        return sample.true_label
    wrong = mix64(cfg.seed, _SALT_WRONG, sample.value, shard, version) % (
        cfg.num_classes - 1
    )
    return wrong if wrong < sample.true_label else wrong + 1


def predict(cfg: OracleConfig, sample: SampleId, shard: int, version: int) -> int:
    """Label the constituent model (shard, version) assigns to the sample.

    A pure function of (cfg, sample, shard, version); repeated calls agree
    and no simulation state is consulted.
    """
    if not 0 <= shard < cfg.num_shards:
        raise ValueError(f"shard {shard} outside [0, {cfg.num_shards})")
    if version < 0:
        raise ValueError(f"version must be non-negative, got {version}")
    if cfg.backend == "trace":
        key = (sample.value, shard, version)
        try:
            return cfg.trace.entries[key][0]
        except KeyError:
            raise TraceError(
                f"trace has no entry for sample={sample.value} "
                f"shard={shard} version={version}"
            ) from None
    if cfg.flip_probability is not None:
        flip_threshold = min(int(round(cfg.flip_probability * 2.0**64)), 2**64)
        v = version
        while v > 0:
            if mix64(cfg.seed, _SALT_FLIP, sample.value, shard, v) < flip_threshold:
                break
            v -= 1
        return _fresh_label(cfg, sample, shard, v)
    return _fresh_label(cfg, sample, shard, version)


_VECTOR_CUTOVER = 48  # ndarray hashing only pays off for wide ensembles


def _predict_small(cfg, sample, versions) -> np.ndarray:
    # shared (seed, salt, sample) hash prefix, extended per shard
    out = [0] * cfg.num_shards
    if sample.is_noise:
        base = mix64(cfg.seed, _SALT_NOISE, sample.value)
        c = cfg.num_classes
        for k in range(cfg.num_shards):
            out[k] = mix64_chain(base, k, int(versions[k])) % c
        return np.asarray(out, dtype=np.int64)
    base_accept = mix64(cfg.seed, _SALT_ACCEPT, sample.value)
    base_wrong = mix64(cfg.seed, _SALT_WRONG, sample.value)
    thr = cfg.accept_threshold
    true = sample.true_label
    c1 = cfg.num_classes - 1
    for k in range(cfg.num_shards):
        v = int(versions[k])
        if mix64_chain(base_accept, k, v) < thr:
            out[k] = true
        else:
            wrong = mix64_chain(base_wrong, k, v) % c1
            out[k] = wrong if wrong < true else wrong + 1
    return np.asarray(out, dtype=np.int64)


def predict_vector(cfg: OracleConfig, sample: SampleId, versions) -> np.ndarray:
    """Predictions of all K shards at the given serving versions.

    Hash-chained per shard at desk scale, vectorized for wide ensembles;
    falls back to per-shard :func:`predict` for the trace backend and the
    flip extension. All paths agree element-for-element.
    """
    if len(versions) != cfg.num_shards:
        raise ValueError(
            f"expected {cfg.num_shards} versions, got {len(versions)}"
        )
    if cfg.backend == "trace" or cfg.flip_probability is not None:
        return np.array(
            [predict(cfg, sample, k, int(versions[k])) for k in range(cfg.num_shards)],
            dtype=np.int64,
        )
    if cfg.num_shards <= _VECTOR_CUTOVER:
        return _predict_small(cfg, sample, versions)
    versions = np.asarray(versions, dtype=np.int64)
    shards = np.arange(cfg.num_shards, dtype=np.uint64)
    vers = versions.astype(np.uint64)
    if sample.is_noise:
        h = mix64_array(cfg.seed, _SALT_NOISE, sample.value, shards, vers)
        return (h % np.uint64(cfg.num_classes)).astype(np.int64)
    accept = mix64_array(cfg.seed, _SALT_ACCEPT, sample.value, shards, vers)
    labels = np.full(cfg.num_shards, sample.true_label, dtype=np.int64)
    thr = cfg.accept_threshold
    if thr > _MASK:
        miss = np.zeros(cfg.num_shards, dtype=bool)
    else:
        miss = accept >= np.uint64(thr)
    if miss.any():
        wrong = mix64_array(cfg.seed, _SALT_WRONG, sample.value, shards[miss], vers[miss])
        wrong = (wrong % np.uint64(cfg.num_classes - 1)).astype(np.int64)
        labels[miss] = np.where(wrong < sample.true_label, wrong, wrong + 1)
    return labels


def confidence(cfg: OracleConfig, sample: SampleId, serving_versions) -> float:
    """Ensemble agreement ratio: shards voting for the winner over K.

    Stands in for a softmax score; always in (0, 1], monotone in how
    cleanly the ensemble separates the sample.
    """
    preds = predict_vector(cfg, sample, serving_versions)
    counts = count_votes(preds, cfg.num_classes)
    return int(counts[aggregate(counts)]) / cfg.num_shards


def load_trace(path) -> PredictionTrace:
    """Parse a trace file, validating every record against its header."""
    entries = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if (
            len(parts) != 4
            or parts[0] != "eraser-trace"
            or parts[1] != "v1"
            or not parts[2].startswith("C=")
            or not parts[3].startswith("K=")
        ):
            raise TraceError(f"line 1: bad header {header!r}")
        try:
            num_classes = int(parts[2][2:])
            num_shards = int(parts[3][2:])
        except ValueError:
            raise TraceError(f"line 1: bad header {header!r}") from None
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 5:
                raise TraceError(
                    f"line {lineno}: expected 5 comma-separated fields, got {len(fields)}"
                )
            try:
                sample, shard, version, label = (int(x) for x in fields[:4])
                conf = float(fields[4])
            except ValueError as exc:
                raise TraceError(f"line {lineno}: {exc}") from None
            if not 0 <= label < num_classes:
                raise TraceError(
                    f"line {lineno}: label {label} outside [0, {num_classes})"
                )
            if not 0 <= shard < num_shards:
                raise TraceError(
                    f"line {lineno}: shard {shard} outside [0, {num_shards})"
                )
            if not 0.0 <= conf <= 1.0:
                raise TraceError(f"line {lineno}: confidence {conf} outside [0, 1]")
            entries[(sample, shard, version)] = (label, conf)
    return PredictionTrace(num_classes, num_shards, entries)
