"""Command-line interface: run, sweep, bench, and ksd subcommands."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import parse_config, parse_grid
from .diagnostics import KsdConfig, ksd
from .harness import (
    bench_step,
    run_experiment,
    sweep,
    write_record_csv,
    write_selection_csv,
    write_sidecar,
)
from .targets import target_by_name

_RUN_FLAGS = (
    ("--target", str, "target name (donut, butterfly, spaceships, funnel:<d>, gaussian:<mean>,<s>)"),
    ("--sampler", str, "sampler name (kfrflow-euler, kfrflow-ab4, kfrflow-i, "
     "kfrflow-i-newton:<iters>, kfrd, svgd, ula, rwm-serial, rwm-parallel)"),
    ("--J", int, "ensemble size"),
    ("--N", int, "number of steps"),
    ("--T", float, "stopping time (infinite-time samplers only; unit-time fixes T=1)"),
    ("--lambda", float, "Tikhonov regularization of the coupling matrix"),
    ("--epsilon", float, "KFRD noise level"),
    ("--seed", int, "base seed; trial t uses seed+t"),
    ("--trials", int, "number of independent trials"),
    ("--observe_every", int, "diagnostic cadence in steps (endpoints always observed)"),
    ("--bandwidth", str, "fixed kernel bandwidth, or 'median'"),
    ("--h_floor", float, "lower clamp for the median-heuristic bandwidth"),
    ("--ksd_estimator", str, "'v' or 'u' statistic for KSD"),
)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file with a [run] section")
    for flag, typ, help_text in _RUN_FLAGS:
        p.add_argument(flag, dest=flag.lstrip("-"), type=typ, help=help_text)


def _overrides(args: argparse.Namespace) -> dict:
    keys = [f[0].lstrip("-") for f in _RUN_FLAGS]
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _stem(cfg) -> str:
    name = f"{cfg.target}_{cfg.sampler}_J{cfg.J}_N{cfg.N}_seed{cfg.seed}"
    return name.replace(":", "-").replace(",", "_")


def _cmd_run(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    record = run_experiment(cfg)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, _stem(cfg))
    write_record_csv(record, stem + ".csv")
    write_sidecar(record, stem + ".json")
    print(f"wrote {stem}.csv ({len(record.rows)} rows)")
    print(f"final mean KSD vs target: {record.final_mean_ksd():.6g}")
    if record.unstable_trials:
        print(f"unstable trials: {record.unstable_trials}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    grid_overrides = {
        "J": args.grid_J,
        "N": args.grid_N,
        "lambda": args.grid_lambda,
        "epsilon": args.grid_epsilon,
        "T": args.grid_T,
    }
    grid = parse_grid(args.config, {k: v for k, v in grid_overrides.items() if v})
    result = sweep(cfg, grid)
    os.makedirs(args.out, exist_ok=True)
    for cell, record in result.records:
        tag = "_".join(f"{k}{v}" for k, v in cell.items()) or "single"
        stem = os.path.join(args.out, _stem(record.config) + "_" + tag)
        write_record_csv(record, stem + ".csv")
        write_sidecar(record, stem + ".json")
    sel_path = os.path.join(args.out, "selection.csv")
    write_selection_csv(result, sel_path)
    print(f"wrote {len(result.records)} runs and {sel_path}")
    for entry in result.selection:
        print(
            f"best (J={entry['J']}, N={entry['N']}): "
            f"lambda={entry['lambda']} epsilon={entry['epsilon']} T={entry['T']} "
            f"final KSD={entry['final_ksd']:.6g}"
        )
    return 0 if result.all_stable else 1


def _cmd_bench(args) -> int:
    cfg = parse_config(args.config, _overrides(args))
    result = bench_step(cfg, reps=args.reps)
    print(
        f"{cfg.sampler} J={cfg.J}: median step time "
        f"{result.median_ns} ns ({result.median_ns / 1e6:.3f} ms)"
    )
    return 0


def _load_samples(path: str) -> np.ndarray:
    with open(path) as fh:
        first = fh.readline()
    delim = "," if "," in first else None
    tokens = [t for t in first.replace(",", " ").split() if t]
    try:
        [float(t) for t in tokens]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=delim, skiprows=skip, ndmin=2)
    return data


def _cmd_ksd(args) -> int:
    target = target_by_name(args.target)
    samples = _load_samples(args.samples)
    if samples.shape[1] != target.dim:
        raise SystemExit(
            f"samples have d={samples.shape[1]} but target {args.target!r} "
            f"has d={target.dim}"
        )
    value = ksd(samples, target.score_target, KsdConfig(h=args.h, estimator=args.estimator))
    print(f"{value!r}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kfrflow",
        description="Unit-time kernelized particle transport samplers and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment (multi-trial)")
    _add_run_flags(p_run)
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid sweep with best-per-(J,N) selection")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--out", default="results", help="output directory")
    p_sweep.add_argument("--grid-J", help="comma-separated J values")
    p_sweep.add_argument("--grid-N", help="comma-separated N values")
    p_sweep.add_argument("--grid-lambda", help="comma-separated lambda values")
    p_sweep.add_argument("--grid-epsilon", help="comma-separated epsilon values")
    p_sweep.add_argument("--grid-T", help="comma-separated T values")
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_bench = sub.add_parser("bench", help="median time of one ensemble update")
    _add_run_flags(p_bench)
    p_bench.add_argument("--reps", type=int, default=30, help="timed repetitions (>=30)")
    p_bench.set_defaults(fn=_cmd_bench)

    p_ksd = sub.add_parser("ksd", help="KSD between a sample file and a named target")
    p_ksd.add_argument("--samples", required=True, help="CSV, one particle per row")
    p_ksd.add_argument("--target", required=True, help="target name")
    p_ksd.add_argument("--h", type=float, default=1.0, help="KSD kernel bandwidth")
    p_ksd.add_argument("--estimator", choices=("v", "u"), default="v")
    p_ksd.set_defaults(fn=_cmd_ksd)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
