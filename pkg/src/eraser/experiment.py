"""Experiment orchestration: runs, sweeps, fuzzing, theory comparison.

All CSV artifacts are written once, after every run has finished, with
rows sorted by (variant, seed) so repeated invocations with the same
configuration produce byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import os
import time
from dataclasses import dataclass

import numpy as np

from . import simulator
from .certify import (
    brute_force_consistent,
    certify_coarse,
    certify_fine,
    certify_fine_shared_margin,
)
from .config import ExperimentConfig, apply_override, build_experiment_config
from .scheduler import VARIANT_NAMES
from .simulator import Metrics, run as run_sim
from .theory import (
    TheoryParams,
    dimp_upper_bound,
    expected_wait_dimp_series,
    expected_wait_sisa,
    require_grid_workload,
)
from .workload import WorkloadSpec, deterministic_unlearning_grid, generate, merge_streams

METRICS_COLUMNS = (
    "variant", "seed", "awt", "nor", "uncertified_responses", "p_uc",
    "p50", "p95", "p99",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        if not np.isfinite(x):
            raise ValueError(f"non-finite value {x} has no place in a CSV artifact")
        return repr(x)
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def run_one(cfg: ExperimentConfig, variant_name: str, seed: int,
            collect_log: bool = True) -> Metrics:
    """One (variant, seed) simulation under an experiment config."""
    workload = cfg.build_workload(seed)
    return run_sim(
        workload,
        cfg.variant(variant_name),
        cfg.oracle_config(seed),
        cfg.sim_params(seed),
        collect_log=collect_log,
    )


def _run_job(args):
    cfg, name, seed, collect_log = args
    return (name, seed), run_one(cfg, name, seed, collect_log)


def _run_all(cfg: ExperimentConfig, jobs: int, collect_log: bool):
    work = [(cfg, name, seed, collect_log) for name in cfg.variants for seed in cfg.seeds()]
    results = {}
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, metrics in pool.map(_run_job, work):
                results[key] = metrics
    else:
        for item in work:
            key, metrics = _run_job(item)
            results[key] = metrics
    return results


def _canonical_order(cfg):
    names = [n for n in VARIANT_NAMES if n in cfg.variants]
    names += [n for n in cfg.variants if n not in names]
    return [(n, s) for n in names for s in cfg.seeds()]


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> int:
    """Run every variant x replication; emit metrics/requests/summary CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    results = _run_all(cfg, jobs, collect_log=True)
    order = _canonical_order(cfg)

    metrics_rows = []
    request_rows = []
    for name, seed in order:
        m = results[(name, seed)]
        metrics_rows.append(
            (name, seed, m.awt, m.nor, m.uncertified_responses, m.p_uc,
             m.p50, m.p95, m.p99)
        )
        for rec in m.per_request_log:
            request_rows.append(
                (name, seed, rec.request_id, rec.arrival, rec.response,
                 rec.wait, rec.verdict, rec.label)
            )
    write_csv(os.path.join(out_dir, "metrics.csv"), METRICS_COLUMNS, metrics_rows)
    write_csv(
        os.path.join(out_dir, "requests.csv"),
        ("variant", "seed", "request_id", "arrival", "response", "wait", "verdict", "label"),
        request_rows,
    )

    names = [n for n, _ in order]
    unique_names = list(dict.fromkeys(names))
    mean = {
        n: (
            float(np.mean([results[(n, s)].awt for s in cfg.seeds()])),
            float(np.mean([results[(n, s)].nor for s in cfg.seeds()])),
        )
        for n in unique_names
    }
    sisa_awt, sisa_nor = mean.get("SISA", (float("nan"), float("nan")))
    summary_rows = []
    for n in unique_names:
        awt, nor = mean[n]
        speedup = sisa_awt / awt if "SISA" in mean and awt > 0 else 0.0
        ratio = nor / sisa_nor if "SISA" in mean and sisa_nor > 0 else 0.0
        summary_rows.append((n, awt, speedup, nor, ratio))
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ("variant", "awt", "awt_speedup_vs_sisa", "nor", "nor_ratio_vs_sisa"),
        summary_rows,
    )
    return 0


def run_sweep(values: dict, param: str, sweep_values, out_dir, jobs: int = 1) -> int:
    """Re-run the experiment for each value of one config key."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for value in sweep_values:
        cfg = build_experiment_config(apply_override(values, param, str(value)))
        results = _run_all(cfg, jobs, collect_log=False)
        for name, seed in _canonical_order(cfg):
            m = results[(name, seed)]
            rows.append(
                (param, value, name, seed, m.awt, m.nor, m.uncertified_responses,
                 m.p_uc, m.p50, m.p95, m.p99)
            )
    write_csv(
        os.path.join(out_dir, "sweep.csv"),
        ("param", "value") + METRICS_COLUMNS,
        rows,
    )
    return 0


# --- certification fuzzing ---------------------------------------------------


@dataclass
class FuzzReport:
    trials: int
    soundness_violations: int
    dominance_violations: int
    shared_margin_counterexamples: int
    fine_certified: int
    coarse_certified: int
    brute_consistent: int
    fine_incompleteness_gap: int
    elapsed_seconds: float

    @property
    def ok(self) -> bool:
        return self.soundness_violations == 0 and self.dominance_violations == 0


def verify_cert(trials: int, max_shards: int = 8, max_classes: int = 4,
                seed: int = 0, enumeration_cap: int = 12) -> FuzzReport:
    """Fuzz the consistency checks against the brute-force oracle.

    Soundness: a fine certificate must imply the enumeration finds no
    winner flip. Dominance: a coarse certificate must imply a fine one.
    The shared-margin variant is expected to produce brute-force-refuted
    certificates; their count documents why it must not be used.
    """
    if max_shards < 1 or max_classes < 2:
        raise ValueError("need max_shards >= 1 and max_classes >= 2")
    rng = np.random.default_rng(seed)
    start = time.monotonic()
    sound = dom = shared_bad = 0
    fine_n = coarse_n = brute_n = gap = 0
    for _ in range(trials):
        k = int(rng.integers(1, max_shards + 1))
        c = int(rng.integers(2, max_classes + 1))
        preds = rng.integers(0, c, k)
        m = int(rng.integers(0, k + 1))
        impacted = np.sort(rng.choice(k, size=m, replace=False))
        fine = certify_fine(preds, impacted, c).certified
        coarse = certify_coarse(preds, impacted, c).certified
        shared = certify_fine_shared_margin(preds, impacted, c).certified
        brute = brute_force_consistent(preds, impacted, c, cap=enumeration_cap)
        fine_n += fine
        coarse_n += coarse
        brute_n += brute
        if fine and not brute:
            sound += 1
        if coarse and not fine:
            dom += 1
        if shared and not brute:
            shared_bad += 1
        if brute and not fine:
            gap += 1
    return FuzzReport(
        trials, sound, dom, shared_bad, fine_n, coarse_n, brute_n, gap,
        time.monotonic() - start,
    )


# --- theory vs simulation ----------------------------------------------------


def grid_workload(n_u, horizon, n_i, num_shards, seed):
    """Fixed-interval unlearning grid merged with uniform inference arrivals."""
    streams = [deterministic_unlearning_grid(n_u, horizon, num_shards, seed)]
    if n_i:
        spec = WorkloadSpec(0, n_i, horizon, seed)
        streams.append(generate(spec, num_shards))
    return merge_streams(*streams)


def compare_theory(cfg: ExperimentConfig, r_values, n_inference: int = 50_000,
                   seed: int = 0) -> list[dict]:
    """Formula-vs-simulation rows over a grid of retrain durations."""
    rows = []
    horizon = cfg.horizon
    for r in r_values:
        workload = grid_workload(cfg.n_unlearning, horizon, n_inference, cfg.num_shards, seed)
        require_grid_workload(workload, cfg.n_unlearning, horizon)
        params = simulator.SimParams(retrain_duration=r, horizon=horizon, seed=seed)
        theory = TheoryParams(cfg.n_unlearning, horizon, r)
        oracle_cfg = cfg.oracle_config(seed)

        sisa = run_sim(workload, cfg.variant("SISA"), oracle_cfg, params, collect_log=False)
        dimp = run_sim(workload, cfg.variant("DIMP"), oracle_cfg, params, collect_log=False)
        p_uc = simulator.estimate_p_uc(dimp)
        with_p = TheoryParams(cfg.n_unlearning, horizon, r, p_uc)
        sisa_formula = expected_wait_sisa(theory)
        rows.append({
            "r": r,
            "sisa_formula": sisa_formula,
            "sisa_simulated": sisa.awt,
            "sisa_rel_error": abs(sisa.awt - sisa_formula) / sisa_formula
            if sisa_formula else 0.0,
            "p_uc": p_uc,
            "dimp_bound": dimp_upper_bound(with_p),
            "dimp_series": expected_wait_dimp_series(with_p),
            "dimp_simulated": dimp.awt,
        })
    return rows
