"""Certified prediction-consistency checks for sharded ensembles.

A shard is *impacted* while it has pending (unexecuted) unlearning
requests: its serving model may differ from the model it would become
after the unlearning runs. The checks below decide, from the serving
predictions and the impacted-shard set alone, whether the ensemble's
final label is guaranteed to survive any retraining of the impacted
shards.

Three checks are provided:

* :func:`certify_fine` —  the per-challenger margin test. For the winner
  ``y_a`` and each challenger ``y_b`` it compares ``2*gamma1 + gamma3``
  against that challenger's own vote margin. This is exactly the
  worst-case flip condition, so it certifies iff no reassignment of the
  impacted shards' labels can change the winner.
* :func:`certify_coarse` — the blunter test ``2*|impacted| <= margin``
  adapted from certified-robustness-style counting. Sound but strictly
  weaker: whenever it certifies, the fine test certifies too.
* :func:`certify_fine_shared_margin` — the fine counts compared against a
  single margin shared by all challengers (the *largest* one). This
  variant is UNSOUND and exists only so the fuzz suite can demonstrate
  why the margin must be per-challenger; never use it for serving.

:func:`brute_force_consistent` is the independent ground-truth oracle: it
enumerates every possible post-unlearning label assignment of the
impacted shards and checks the winner directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import aggregate, count_votes


class EnumerationCapError(ValueError):
    """Raised when a brute-force enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class GammaCounts:
    """Impacted-shard vote split with respect to a (winner, challenger) pair.

    gamma1: impacted shards currently voting for the winner. Independent of
        the challenger.
    gamma2: impacted shards currently voting for the challenger.
    gamma3: impacted shards voting for neither.
    """

    gamma1: int
    gamma2: int
    gamma3: int

    @property
    def total(self) -> int:
        return self.gamma1 + self.gamma2 + self.gamma3


@dataclass(frozen=True)
class ChallengerCheck:
    """Outcome of the consistency condition against one challenger label."""

    challenger: int
    gammas: GammaCounts
    margin: int
    satisfied: bool


@dataclass(frozen=True)
class CertificationVerdict:
    certified: bool
    winner: int
    checks: tuple[ChallengerCheck, ...]


def _normalize_impacted(impacted, num_shards: int) -> np.ndarray:
    idx = np.asarray(sorted(impacted), dtype=np.int64)
    if idx.size:
        if idx[0] < 0 or idx[-1] >= num_shards:
            raise ValueError(
                f"impacted shard ids must lie in [0, {num_shards}), got {impacted}"
            )
        if np.unique(idx).size != idx.size:
            raise ValueError("impacted set contains duplicate shard ids")
    return idx


def gamma_counts(preds, impacted, y_a: int, y_b: int) -> GammaCounts:
    """Split the impacted shards by their current vote relative to (y_a, y_b)."""
    if y_a == y_b:
        raise ValueError(f"challenger must differ from winner, both are {y_a}")
    p = np.asarray(preds, dtype=np.int64)
    idx = _normalize_impacted(impacted, p.size)
    if idx.size == 0:
        return GammaCounts(0, 0, 0)
    ip = p[idx]
    g1 = int(np.count_nonzero(ip == y_a))
    g2 = int(np.count_nonzero(ip == y_b))
    return GammaCounts(g1, g2, idx.size - g1 - g2)


def _margin(counts: np.ndarray, winner: int, challenger: int) -> int:
    return int(counts[winner] - counts[challenger]) - (1 if challenger < winner else 0)


def _verdict(preds, impacted, num_classes, lhs_fn, shared_margin=False):
    p = np.asarray(preds, dtype=np.int64)
    counts = count_votes(p, num_classes)
    winner = aggregate(counts)
    idx = _normalize_impacted(impacted, p.size)
    if idx.size:
        imp_counts = np.bincount(p[idx], minlength=num_classes)
    else:
        imp_counts = np.zeros(num_classes, dtype=np.int64)
    g1 = int(imp_counts[winner])
    m = int(idx.size)

    checks = []
    margins = {
        yb: _margin(counts, winner, yb) for yb in range(num_classes) if yb != winner
    }
    biggest = max(margins.values()) if margins else 0
    certified = True
    for yb in range(num_classes):
        if yb == winner:
            continue
        g2 = int(imp_counts[yb])
        gammas = GammaCounts(g1, g2, m - g1 - g2)
        margin = biggest if shared_margin else margins[yb]
        ok = lhs_fn(gammas, m) <= margin
        certified = certified and ok
        checks.append(ChallengerCheck(yb, gammas, margin, ok))
    return CertificationVerdict(certified, winner, tuple(checks))


def certify_fine(preds, impacted, num_classes: int) -> CertificationVerdict:
    """Per-challenger consistency test: 2*gamma1 + gamma3 <= margin(y_b).

    Certifies exactly when no possible relabeling of the impacted shards
    can change the aggregated winner (see :func:`brute_force_consistent`).
    """
    return _verdict(preds, impacted, num_classes, lambda g, m: 2 * g.gamma1 + g.gamma3)


def certify_coarse(preds, impacted, num_classes: int) -> CertificationVerdict:
    """Coarse consistency test: 2*|impacted| <= margin(y_b) for every y_b.

    Ignores how the impacted shards currently vote, so it rejects some
    instances the fine test certifies; it never certifies an instance the
    fine test rejects.
    """
    return _verdict(preds, impacted, num_classes, lambda g, m: 2 * m)


def certify_fine_shared_margin(preds, impacted, num_classes: int) -> CertificationVerdict:
    """Fine counts checked against one shared margin: max over challengers.

    UNSOUND: the shared margin is the *weakest* challenger's, so a strong
    challenger with a small margin can slip through. Kept so the
    validation suite can exhibit concrete counterexamples; do not serve
    with this.
    """
    return _verdict(
        preds, impacted, num_classes, lambda g, m: 2 * g.gamma1 + g.gamma3,
        shared_margin=True,
    )


def fine_certified(preds, impacted, num_classes: int) -> tuple[bool, int]:
    """Allocation-light fine check for hot loops: (certified, winner)."""
    p = np.asarray(preds, dtype=np.int64)
    counts = count_votes(p, num_classes)
    winner = int(np.argmax(counts))
    idx = np.asarray(impacted, dtype=np.int64)
    if idx.size == 0:
        return True, winner
    imp_counts = np.bincount(p[idx], minlength=num_classes)
    g1 = int(imp_counts[winner])
    m = int(idx.size)
    wc = int(counts[winner])
    for yb in range(num_classes):
        if yb == winner:
            continue
        g3 = m - g1 - int(imp_counts[yb])
        margin = wc - int(counts[yb]) - (1 if yb < winner else 0)
        if 2 * g1 + g3 > margin:
            return False, winner
    return True, winner


_ENUM_CHUNK = 1 << 16


def brute_force_consistent(preds, impacted, num_classes: int, cap: int = 12) -> bool:
    """Ground truth: does every relabeling of impacted shards keep the winner?

    Enumerates all ``num_classes ** len(impacted)`` assignments of labels to
    the impacted shards and recomputes the aggregate for each; returns True
    iff the winner never changes. Raises :class:`EnumerationCapError` when
    ``len(impacted) > cap`` (the enumeration grows exponentially).
    """
    p = np.asarray(preds, dtype=np.int64)
    counts = count_votes(p, num_classes)
    winner = aggregate(counts)
    idx = _normalize_impacted(impacted, p.size)
    m = int(idx.size)
    if m == 0:
        return True
    if m > cap:
        raise EnumerationCapError(
            f"{m} impacted shards exceed the enumeration cap of {cap}; "
            f"reduce the instance size or raise the cap"
        )
    base = counts - np.bincount(p[idx], minlength=num_classes)
    total = num_classes**m
    radix = num_classes ** np.arange(m, dtype=np.int64)
    for start in range(0, total, _ENUM_CHUNK):
        codes = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.int64)
        digits = (codes[:, None] // radix[None, :]) % num_classes
        trial = np.broadcast_to(base, (codes.size, num_classes)).copy()
        rows = np.arange(codes.size)
        for j in range(m):
            trial[rows, digits[:, j]] += 1
        # argmax keeps the smallest label on ties, matching aggregate().
        if not (np.argmax(trial, axis=1) == winner).all():
            return False
    return True
