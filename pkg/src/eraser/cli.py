"""Command-line front end.

Subcommands:

* ``run --config <path> --out <dir> [--jobs N]`` — run the configured
  variants and emit metrics.csv / requests.csv / summary.csv.
* ``sweep --config <path> --param <section.key> --values <comma list>
  --out <dir> [--jobs N]`` — rerun the experiment per value, emit sweep.csv.
* ``verify-cert --trials N [--max-shards K] [--max-classes C] [--seed S]``
  — fuzz the consistency checks against the brute-force oracle; exits
  nonzero on any soundness or dominance violation.
* ``theory --n-u N --t T --r R [--p-uc P] [--grid]`` — print the
  closed-form waiting times; with ``--grid``, also simulate over a grid
  of retrain durations and report relative errors as CSV.
* ``gen-workload --spec <path> --out <csv>`` — generate the workload
  described by a config file's [workload]/[oracle] sections.

The ``ERASER_SEED`` environment variable overrides every config seed.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, parse_config_text
from .experiment import compare_theory, run_experiment, run_sweep, verify_cert
from .theory import TheoryParams, dimp_upper_bound, expected_wait_dimp_series, expected_wait_sisa
from .workload import export_csv


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="eraser",
        description="inference-serving-aware unlearning scheduler simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--jobs", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="sweep one config key over several values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, help="dotted key, e.g. oracle.num_shards")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--jobs", type=int, default=1)

    p_cert = sub.add_parser("verify-cert", help="fuzz certification against brute force")
    p_cert.add_argument("--trials", type=int, required=True)
    p_cert.add_argument("--max-shards", type=int, default=8)
    p_cert.add_argument("--max-classes", type=int, default=4)
    p_cert.add_argument("--seed", type=int, default=0)

    p_theory = sub.add_parser("theory", help="closed-form waiting times")
    p_theory.add_argument("--n-u", type=int, required=True)
    p_theory.add_argument("--t", type=float, required=True)
    p_theory.add_argument("--r", type=float, required=True)
    p_theory.add_argument("--p-uc", type=float, default=0.0)
    p_theory.add_argument("--grid", action="store_true",
                          help="also simulate over a grid of retrain durations")
    p_theory.add_argument("--out", default=None, help="write the grid report CSV here")

    p_gen = sub.add_parser("gen-workload", help="generate a workload CSV")
    p_gen.add_argument("--spec", required=True, help="config file with a [workload] section")
    p_gen.add_argument("--out", required=True)

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    return run_experiment(cfg, args.out, jobs=args.jobs)


def _cmd_sweep(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    sweep_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not sweep_values:
        print("sweep: --values is empty", file=sys.stderr)
        return 2
    return run_sweep(values, args.param, sweep_values, args.out, jobs=args.jobs)


def _cmd_verify_cert(args) -> int:
    report = verify_cert(args.trials, args.max_shards, args.max_classes, args.seed)
    print(f"trials                         {report.trials}")
    print(f"soundness violations           {report.soundness_violations}")
    print(f"dominance violations           {report.dominance_violations}")
    print(f"shared-margin counterexamples  {report.shared_margin_counterexamples}")
    print(f"fine certified                 {report.fine_certified}")
    print(f"coarse certified               {report.coarse_certified}")
    print(f"brute-force consistent         {report.brute_consistent}")
    print(f"fine incompleteness gap        {report.fine_incompleteness_gap}")
    print(f"elapsed seconds                {report.elapsed_seconds:.1f}")
    return 0 if report.ok else 1


def _cmd_theory(args) -> int:
    params = TheoryParams(args.n_u, args.t, args.r, args.p_uc)
    print(f"expected_wait_sisa     {expected_wait_sisa(params)!r}")
    print(f"dimp_upper_bound       {dimp_upper_bound(params)!r}")
    print(f"dimp_series            {expected_wait_dimp_series(params)!r}")
    if not args.grid:
        return 0
    from .config import build_experiment_config, parse_config_text as _parse

    base = build_experiment_config(_parse(
        f"[workload]\nn_unlearning = {args.n_u}\nhorizon = {args.t}\n"
        f"[sim]\nretrain_duration = {args.r}\n"
    ))
    period = args.t / args.n_u
    r_values = [0.5 * period, period, 2 * period, 4 * period]
    rows = compare_theory(base, r_values, n_inference=20_000)
    header = list(rows[0].keys())
    lines = [",".join(header)] + [
        ",".join(repr(row[h]) if isinstance(row[h], float) else str(row[h]) for h in header)
        for row in rows
    ]
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_gen_workload(args) -> int:
    cfg = load_config(args.spec)
    stream = cfg.build_workload(cfg.base_seed)
    export_csv(stream, args.out)
    print(f"wrote {len(stream)} requests to {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "verify-cert": _cmd_verify_cert,
    "theory": _cmd_theory,
    "gen-workload": _cmd_gen_workload,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
