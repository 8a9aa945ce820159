"""Command-line harness.

Subcommands::

    gen           generate a problem instance and write it to a text file
    run           execute an experiment grid, appending rows to results.csv
    speedup       build the speedup table (CSV + figure) from results.csv
    stationarity  trace the smoothed gradient norm along one run (CSV + figure)
    recover       dump reshaped iterates of one run (text matrices + figure)
    stability     replace-one perturbation sweep (CSV + summary + figure)

``--config PATH`` loads a plain-text key/value file; flags override file
keys. Exit code 0 on success, 2 on configuration errors; failures of
individual grid runs are recorded as rows and do not fail the process.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, plots
from .algorithms import SolverConfig, epoch_iterations, ExperimentSchedule
from .algorithms import run_solver
from .models import ModelKind, model_constants
from .problems import (GenSpec, gen_least_abs_dev, gen_synthetic_blind_deconv,
                       gen_synthetic_phase_retrieval, gen_zipcode_instance,
                       load_image, save_instance)
from .stability import run_stability_trials
from .stationarity import full_objective_oracle


def _add_common(p):
    p.add_argument("--config", help="plain-text key/value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes for grids")
    p.add_argument("--seed", type=int, help="base seed")


def _keys_from(args, extra=()) -> dict:
    keys = bench.parse_config_file(args.config) if args.config else {}
    for name in ("out", "threads", "seed", *extra):
        val = getattr(args, name, None)
        if val is not None:
            keys[name] = val
    return keys


def cmd_gen(args) -> int:
    if args.kind == "zipcode":
        inst = gen_zipcode_instance(load_image(args.image), args.p_fail, args.seed or 0)
    else:
        spec = GenSpec(n=args.n, d=args.d, kappa=args.kappa, p_fail=args.p_fail,
                       noise_std=args.noise_std, seed=args.seed or 0)
        gen = {"synthetic_pr": gen_synthetic_phase_retrieval,
               "synthetic_bd": gen_synthetic_blind_deconv,
               "lad": gen_least_abs_dev}[args.kind]
        inst, _ = gen(spec)
    save_instance(inst, args.path)
    print(f"wrote {args.path}: kind={inst.kind.value} n={inst.n} d={inst.dim} "
          f"f_hat={inst.f_hat}")
    return 0


def cmd_run(args) -> int:
    config = bench.experiment_config_from_keys(_keys_from(args))
    path = bench.run_experiment(config)
    rows = bench.load_results(path)
    print(f"{path}: {len(rows)} rows")
    return 0


def cmd_speedup(args) -> int:
    rows = bench.load_results(args.results)
    table = bench.speedup_table(rows)
    out = args.out or os.path.dirname(args.results) or "."
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "speedup.csv")
    bench.write_speedup_csv(table, csv_path)
    fig1 = plots.plot_speedup(table, os.path.join(out, "speedup.png"))
    fig2 = plots.plot_iters_vs_alpha0(rows, os.path.join(out, "iters_vs_alpha0.png"))
    for row in table:
        print(f"{row['algorithm']}:{row['model']} m={row['m']} "
              f"T*={row['t_star']:.1f} speedup={row['speedup']:.2f}")
    print(f"wrote {csv_path}, {fig1}, {fig2}")
    return 0


def _single_run(keys: dict, store: bool, record_every: int, store_at=None):
    """Run one configuration (no grid) and return (instance, config, record)."""
    config = bench.experiment_config_from_keys(keys)
    instance = bench.build_instance(config.dataset)
    algorithm, model = config.algorithms[0]
    m = int(config.m_grid[0])
    alpha0 = float(config.alpha0_grid[0])
    beta = float(config.beta_list[0])
    if algorithm == "minibatch":
        beta = 0.0
    K = config.epochs * epoch_iterations(instance.n, m)
    run_seed = bench.run_seed_for(config.seed, 0)
    solver = SolverConfig(
        algorithm=algorithm, kind=model, K=K, m=m, beta=beta,
        schedule=ExperimentSchedule(alpha0=alpha0), seed=run_seed,
        stop_factor=config.stop_factor,
        record_every=record_every, store_iterates=store, store_at=store_at,
        x0=bench.initial_point_for(instance, config.dataset, run_seed))
    return instance, solver, run_solver(instance, solver)


def cmd_stationarity(args) -> int:
    keys = _keys_from(args)
    stride = args.stride or 1
    record_every = args.record_every or 50
    instance, solver, record = _single_run(keys, store=True,
                                           record_every=record_every)
    oracle = full_objective_oracle(instance)
    rho = args.rho if args.rho is not None else 2.0 * max(oracle.mu, 1.0)
    rows = bench.stationarity_trace(record, instance, rho, stride=stride)
    out = keys.get("out", "results")
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "stationarity.csv")
    bench.write_trace_csv(rows, csv_path)
    fig = plots.plot_stationarity(rows, os.path.join(out, "stationarity.png"))
    print(f"wrote {csv_path}, {fig} ({len(rows)} rows, rho={rho:g})")
    return 0


def cmd_recover(args) -> int:
    keys = _keys_from(args)
    checkpoints = [int(v) for v in str(args.checkpoints).split(",") if v.strip()]
    out = keys.get("out", "results")
    if not checkpoints:
        print("no checkpoints requested; nothing to write")
        return 0
    instance, solver, record = _single_run(keys, store=True, record_every=1,
                                           store_at=tuple(checkpoints))
    paths = bench.recover_dump(record, instance, checkpoints, out)
    side = int(np.sqrt(instance.decision_dim))
    images = [(k, record.iterates[k].reshape(side, side)) for k in checkpoints]
    fig = plots.plot_recover_grid(images, os.path.join(out, "recover.png"))
    print(f"wrote {len(paths)} matrices and {fig}")
    return 0


def cmd_stability(args) -> int:
    keys = _keys_from(args)
    config = bench.experiment_config_from_keys(keys)
    instance = bench.build_instance(config.dataset)
    kinds = [ModelKind(k.strip()) for k in str(args.kinds).split(",") if k.strip()]
    m_list = [int(v) for v in config.m_grid]
    rng_z = np.random.default_rng(config.seed)
    z = rng_z.standard_normal(instance.decision_dim)
    gamma = args.gamma
    if gamma is None:
        lam = max(model_constants(k, instance).lam for k in kinds)
        gamma = 2.0 * lam + 10.0
    rows, summaries = bench.stability_sweep(instance, kinds, m_list, gamma,
                                            args.trials, config.seed, z)
    out = keys.get("out", "results")
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "stability.csv")
    summary_path = os.path.join(out, "stability_summary.txt")
    bench.write_stability_csv(rows, summaries, csv_path, summary_path)
    fig = plots.plot_stability(rows, os.path.join(out, "stability.png"))
    violations = sum(s["violations"] for s in summaries)
    print(f"wrote {csv_path}, {summary_path}, {fig}; total violations: {violations}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxmod", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("path")
    p.add_argument("--kind", default="synthetic_pr",
                   choices=["synthetic_pr", "synthetic_bd", "lad", "zipcode"])
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--kappa", type=float, default=10.0)
    p.add_argument("--p-fail", type=float, default=0.2)
    p.add_argument("--noise-std", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image", help="16x16 text image (zipcode)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="execute an experiment grid")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("speedup", help="speedup table from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_speedup)

    p = sub.add_parser("stationarity", help="smoothed gradient-norm trace of one run")
    _add_common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--record-every", type=int)
    p.set_defaults(func=cmd_stationarity)

    p = sub.add_parser("recover", help="dump reshaped iterates of one run")
    _add_common(p)
    p.add_argument("--checkpoints", required=True,
                   help="comma-separated iterate indices (1 = initial point)")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("stability", help="replace-one perturbation sweep")
    _add_common(p)
    p.add_argument("--kinds", default="linear,prox_linear")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
