"""Experiment harness: stepsize grids, batch-size sweeps, speedup tables,
stationarity traces, image-recovery dumps and stability sweeps.

Results are written as append-only CSV with one self-describing row per run
(every configuration key is a column), keyed by the configuration columns,
which makes grids resumable: rerunning a config skips rows already present.
Grid cells can execute in a worker pool; rows are flushed in canonical grid
order through a single writer so identical configs yield identical files
modulo the wall_time column.

Config files are plain text, one ``key = value`` pair per line, ``#`` for
comments. Values are scalars, comma lists (``1,4,8``) or the grid shorthand
``logspace:<lo>:<hi>:<count>``. Command-line flags override file keys.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .algorithms import (AcceleratedSchedule, ExperimentSchedule, RunRecord,
                         SolverConfig, epoch_iterations, run_solver)
from .models import ModelKind, model_constants
from .problems import (GenSpec, ProblemInstance, ProblemKind,
                       gen_least_abs_dev, gen_synthetic_blind_deconv,
                       gen_synthetic_phase_retrieval, gen_zipcode_instance,
                       load_image, load_instance, save_matrix)
from .rng import rng_for
from .stability import run_stability_trials
from .stationarity import full_objective_oracle, moreau_grad_norm

DATASETS = ("synthetic_pr", "synthetic_bd", "lad", "zipcode")

# the stepsize grids of the reference experiment protocol, per dataset
ALPHA0_RANGES = {
    ("synthetic_pr", False): (1e-1, 1e2),
    ("synthetic_pr", True): (1e-2, 1e0),     # momentum runs
    ("zipcode", False): (1e1, 1e3),
    ("zipcode", True): (1e0, 1e1),
    ("synthetic_bd", False): (1e-1, 1e2),
    ("synthetic_bd", True): (1e-2, 1e1),
    ("lad", False): (1e-1, 1e2),
    ("lad", True): (1e-2, 1e0),
}

KEY_COLUMNS = ["dataset", "n", "d", "kappa", "p_fail", "noise_std", "data_seed",
               "image", "instance_file", "fresh_data", "algorithm", "model",
               "m", "beta", "alpha0", "epochs", "K", "stop_factor", "seed_index",
               "run_seed"]
RESULT_COLUMNS = ["status", "stop_iter", "iters_to_target", "final_objective",
                  "f_hat", "gamma", "error", "wall_time"]
CSV_COLUMNS = KEY_COLUMNS + RESULT_COLUMNS


@dataclass(frozen=True)
class DatasetSpec:
    dataset: str
    n: int = 300
    d: int = 100
    kappa: float = 10.0
    p_fail: float = 0.2
    noise_std: float = 5.0
    data_seed: int = 1
    image: str = ""
    instance_file: str = ""


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    algorithms: list            # (algorithm, ModelKind) pairs
    alpha0_grid: list
    m_grid: list
    beta_list: list
    epochs: int = 200
    seeds: int = 20
    stop_factor: Optional[float] = 1.5
    fresh_data: bool = False
    out: str = "results"
    threads: int = 1
    seed: int = 0
    d_tilde: Optional[float] = None

    def __post_init__(self):
        if not self.algorithms or not self.alpha0_grid or not self.m_grid:
            raise ValueError("algorithm, alpha0 and m grids must be nonempty")
        if self.epochs < 1:
            raise ValueError("epoch cap must be >= 1")


def default_alpha0_grid(dataset: str, momentum: bool, count: int = 10) -> list:
    lo, hi = ALPHA0_RANGES[(dataset, momentum)]
    return list(np.logspace(math.log10(lo), math.log10(hi), count))


_INSTANCE_CACHE: dict = {}


def build_instance(ds: DatasetSpec) -> ProblemInstance:
    key = ds
    if key in _INSTANCE_CACHE:
        return _INSTANCE_CACHE[key]
    if ds.instance_file:
        inst = load_instance(ds.instance_file)
    elif ds.dataset == "zipcode":
        if not ds.image:
            raise ValueError("the zipcode dataset needs an image file")
        inst = gen_zipcode_instance(load_image(ds.image), ds.p_fail, ds.data_seed)
    else:
        spec = GenSpec(n=ds.n, d=ds.d, kappa=ds.kappa, p_fail=ds.p_fail,
                       noise_std=ds.noise_std, seed=ds.data_seed)
        gen = {"synthetic_pr": gen_synthetic_phase_retrieval,
               "synthetic_bd": gen_synthetic_blind_deconv,
               "lad": gen_least_abs_dev}[ds.dataset]
        inst, _ = gen(spec)
    _INSTANCE_CACHE[key] = inst
    return inst


def run_seed_for(base_seed: int, seed_index: int) -> int:
    return base_seed + 1_000_003 * (seed_index + 1)


def initial_point_for(instance: ProblemInstance, ds: DatasetSpec, run_seed: int) -> np.ndarray:
    """Reference protocol: standard normal for synthetic data, truth plus
    standard normal noise for zipcode images."""
    rng = rng_for(run_seed, "init")
    noise = rng.standard_normal(instance.decision_dim)
    if ds.dataset == "zipcode" and instance.truth is not None:
        return instance.truth + noise
    return noise


def expand_cells(config: ExperimentConfig) -> list:
    """Canonical grid order: algorithms x m x beta x alpha0 x seed."""
    cells = []
    for algorithm, model in config.algorithms:
        betas = [0.0] if algorithm in ("minibatch", "accelerated") else config.beta_list
        for m in config.m_grid:
            for beta in betas:
                for alpha0 in config.alpha0_grid:
                    for s in range(config.seeds):
                        cells.append(dict(algorithm=algorithm,
                                          model=ModelKind(model).value,
                                          m=int(m), beta=float(beta),
                                          alpha0=float(alpha0), seed_index=s))
    return cells


def cell_key(row: dict) -> tuple:
    return tuple(str(row[c]) for c in KEY_COLUMNS)


def _cell_row_base(config: ExperimentConfig, cell: dict, n: int, d: int) -> dict:
    ds = config.dataset
    data_seed = ds.data_seed
    if config.fresh_data:
        data_seed = run_seed_for(ds.data_seed, cell["seed_index"])
    K = config.epochs * epoch_iterations(n, cell["m"])
    return {"dataset": ds.dataset, "n": n, "d": d, "kappa": ds.kappa,
            "p_fail": ds.p_fail, "noise_std": ds.noise_std, "data_seed": data_seed,
            "image": ds.image, "instance_file": ds.instance_file,
            "fresh_data": config.fresh_data, "epochs": config.epochs, "K": K,
            "stop_factor": config.stop_factor,
            "run_seed": run_seed_for(config.seed, cell["seed_index"]), **cell}


def run_cell(row: dict, d_tilde: Optional[float] = None) -> dict:
    """Execute one grid cell; never raises (failures become status=error rows)."""
    out = dict(row)
    try:
        ds = DatasetSpec(dataset=row["dataset"], n=int(row["n"]), d=int(row["d"]),
                         kappa=float(row["kappa"]), p_fail=float(row["p_fail"]),
                         noise_std=float(row["noise_std"]),
                         data_seed=int(row["data_seed"]), image=row["image"],
                         instance_file=row["instance_file"])
        instance = build_instance(ds)
        algorithm = row["algorithm"]
        model = ModelKind(row["model"])
        if algorithm == "accelerated":
            base = d_tilde if d_tilde else float(np.linalg.norm(
                initial_point_for(instance, ds, row["run_seed"]))) + 1.0
            schedule = AcceleratedSchedule(d_tilde=float(row["alpha0"]) * base)
        else:
            schedule = ExperimentSchedule(alpha0=float(row["alpha0"]))
        cfg = SolverConfig(
            algorithm=algorithm, kind=model, K=int(row["K"]), m=int(row["m"]),
            beta=float(row["beta"]), schedule=schedule, seed=row["run_seed"],
            stop_factor=row["stop_factor"],
            x0=initial_point_for(instance, ds, row["run_seed"]))
        rec = run_solver(instance, cfg)
        out.update(status=rec.stopped, stop_iter=rec.stop_iter,
                   iters_to_target=rec.stop_iter if rec.stopped == "hit" else rec.K,
                   final_objective=rec.final_objective, f_hat=instance.f_hat,
                   gamma=rec.gamma[-1], error="", wall_time=round(rec.wall_time, 4))
    except Exception as exc:  # noqa: BLE001 - grid cells must never abort the sweep
        out.update(status="error", stop_iter="", iters_to_target="",
                   final_objective="", f_hat="", gamma="", error=repr(exc),
                   wall_time="")
    return out


def _load_existing_keys(path) -> set:
    if not os.path.exists(path):
        return set()
    with open(path, newline="") as fh:
        return {cell_key(row) for row in csv.DictReader(fh)}


def run_experiment(config: ExperimentConfig, results_name: str = "results.csv") -> str:
    """Execute the full grid, appending one CSV row per run. Resumable:
    rows whose key is already present are skipped."""
    os.makedirs(config.out, exist_ok=True)
    path = os.path.join(config.out, results_name)
    existing = _load_existing_keys(path)
    base_instance = build_instance(config.dataset)
    n, d = base_instance.n, base_instance.dim
    pending = []
    for cell in expand_cells(config):
        row = _cell_row_base(config, cell, n, d)
        if cell_key(row) not in existing:
            pending.append(row)

    new_file = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if new_file:
            writer.writeheader()
        if config.threads > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=config.threads) as pool:
                for done in pool.map(run_cell, pending,
                                     [config.d_tilde] * len(pending),
                                     chunksize=1):
                    writer.writerow(done)
                    fh.flush()
        else:
            for row in pending:
                writer.writerow(run_cell(row, config.d_tilde))
                fh.flush()
    return path


def load_results(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def speedup_table(rows: list) -> list:
    """Per (algorithm, model, m): T*_m is the best (over the stepsize grid)
    mean iteration count to target, seeds averaged; speedup_m = T*_1 / T*_m.
    Runs that never hit the threshold count at their iteration cap."""
    groups: dict = {}
    for row in rows:
        if row["status"] == "error":
            continue
        key = (row["algorithm"], row["model"], int(row["m"]), float(row["alpha0"]))
        groups.setdefault(key, []).append(float(row["iters_to_target"]))
    best: dict = {}
    for (alg, model, m, _alpha0), iters in groups.items():
        mean = sum(iters) / len(iters)
        cur = best.get((alg, model, m))
        if cur is None or mean < cur:
            best[(alg, model, m)] = mean
    table = []
    for (alg, model, m), t_star in sorted(best.items()):
        t1 = best.get((alg, model, 1))
        if t1 is None:
            raise ValueError(f"speedup for {alg}:{model} needs the m=1 baseline")
        table.append({"algorithm": alg, "model": model, "m": m,
                      "t_star": t_star, "speedup": t1 / t_star})
    return table


def write_speedup_csv(table: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["algorithm", "model", "m",
                                                "t_star", "speedup"])
        writer.writeheader()
        writer.writerows(table)


def stationarity_trace(record: RunRecord, instance: ProblemInstance, rho: float,
                       stride: int = 1, tol: float = 1e-8) -> list:
    """Smoothed-objective gradient-norm estimates along a recorded run, at
    both the iterates x^k and the extrapolated points z^k."""
    if not record.iterates:
        raise ValueError("stationarity traces need a run recorded with store_iterates")
    oracle = full_objective_oracle(instance)
    if rho <= oracle.mu:
        raise ValueError(f"need rho > {oracle.mu:g}")
    rows = []
    ks = sorted(record.iterates)
    for j, k in enumerate(ks):
        if j % stride and k != ks[-1]:
            continue
        gx = moreau_grad_norm(oracle, record.iterates[k], rho, tol)
        zk = record.z_iterates.get(k)
        gz = moreau_grad_norm(oracle, zk, rho, tol) if zk is not None else float("nan")
        rows.append({"k": k, "grad_norm_x": gx, "grad_norm_z": gz})
    return rows


def write_trace_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["k", "grad_norm_x", "grad_norm_z"])
        writer.writeheader()
        writer.writerows(rows)


def recover_dump(record: RunRecord, instance: ProblemInstance, checkpoints: list,
                 out_dir, prefix: str = "recover") -> list:
    """Write the reshaped iterate at each checkpoint as a text matrix for
    external inspection. The decision dimension must be a perfect square."""
    side = math.isqrt(instance.decision_dim)
    if side * side != instance.decision_dim:
        raise ValueError(f"dimension {instance.decision_dim} is not reshapable "
                         "to a square image")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for k in checkpoints:
        if k not in record.iterates:
            raise ValueError(f"iterate {k} was not stored during the run")
        path = os.path.join(out_dir, f"{prefix}_k{int(k):06d}.txt")
        save_matrix(path, record.iterates[k].reshape(side, side))
        paths.append(path)
    return paths


def stability_sweep(instance: ProblemInstance, kinds: list, m_list: list,
                    gamma: float, n_trials: int, seed: int, z: np.ndarray,
                    tol: float = 1e-8):
    """Replace-one trials over a (kind, m) grid; returns (rows, summaries)."""
    rows, summaries = [], []
    for kind in kinds:
        for m in m_list:
            trials, report = run_stability_trials(
                instance, kind, z, z, gamma, int(m), n_trials,
                seed + 7919 * int(m), tol)
            for t_idx, trial in enumerate(trials):
                rows.append({"kind": kind.value, "m": m, "gamma": gamma,
                             "trial": t_idx, "distance": trial.distance,
                             "lipschitz": trial.lipschitz, "bound": trial.bound,
                             "ratio": trial.ratio, "valid": trial.valid})
            summaries.append({"kind": kind.value, "m": m, "trials": report.trials,
                              "invalid": report.invalid,
                              "max_ratio": report.max_ratio,
                              "mean_ratio": report.mean_ratio,
                              "violations": report.violations})
    return rows, summaries


def write_stability_csv(rows: list, summaries: list, csv_path, summary_path) -> None:
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["kind", "m", "gamma", "trial",
                                                "distance", "lipschitz", "bound",
                                                "ratio", "valid"])
        writer.writeheader()
        writer.writerows(rows)
    with open(summary_path, "w") as fh:
        fh.write("stability summary (distance vs 2L/(m(gamma-lam)))\n")
        for s in summaries:
            fh.write(f"kind={s['kind']} m={s['m']} trials={s['trials']} "
                     f"invalid={s['invalid']} max_ratio={s['max_ratio']:.6f} "
                     f"mean_ratio={s['mean_ratio']:.6f} violations={s['violations']}\n")


# --- config file parsing ------------------------------------------------------

def parse_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text.startswith("logspace:"):
        _, lo, hi, count = text.split(":")
        return list(np.logspace(math.log10(float(lo)), math.log10(float(hi)),
                                int(count)))
    if "," in text:
        return [parse_value(v) for v in text.split(",") if v.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config_file(path) -> dict:
    keys = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            keys[key.strip()] = parse_value(value)
    return keys


def _as_list(value) -> list:
    if value is None:
        return []
    return value if isinstance(value, list) else [value]


def experiment_config_from_keys(keys: dict) -> ExperimentConfig:
    keys = {k: parse_value(v) if isinstance(v, str) else v for k, v in keys.items()}
    dataset = keys.get("dataset", "synthetic_pr")
    instance_file = ""
    if dataset not in DATASETS:
        instance_file, dataset = str(dataset), "file"
    ds = DatasetSpec(dataset=dataset if not instance_file else "file",
                     n=int(keys.get("n", 300)), d=int(keys.get("d", 100)),
                     kappa=float(keys.get("kappa", 10.0)),
                     p_fail=float(keys.get("p_fail", 0.2)),
                     noise_std=float(keys.get("noise_std", 5.0)),
                     data_seed=int(keys.get("data_seed", 1)),
                     image=str(keys.get("image", "")),
                     instance_file=instance_file)
    algorithms = []
    for item in _as_list(keys.get("algorithms", "minibatch:prox_linear")):
        name, _, model = str(item).partition(":")
        algorithms.append((name.strip(), ModelKind(model.strip() or "prox_linear")))
    momentum = any(a in ("momentum", "momentum_mb") for a, _ in algorithms)
    if "alpha0_grid" in keys:
        alpha0 = [float(v) for v in _as_list(keys["alpha0_grid"])]
    elif ds.dataset in [d for d, _m in ALPHA0_RANGES]:
        alpha0 = default_alpha0_grid(ds.dataset, momentum)
    else:
        alpha0 = default_alpha0_grid("synthetic_pr", momentum)
    epochs_default = 400 if momentum else 200
    stop_factor = keys.get("stop_factor", 1.5)
    return ExperimentConfig(
        dataset=ds, algorithms=algorithms, alpha0_grid=alpha0,
        m_grid=[int(v) for v in _as_list(keys.get("m_grid", [1, 4, 8, 16, 32, 64]))],
        beta_list=[float(v) for v in _as_list(keys.get("beta", [0.0]))],
        epochs=int(keys.get("epochs", epochs_default)),
        seeds=int(keys.get("seeds", 20)),
        stop_factor=None if stop_factor in ("none", "") else float(stop_factor),
        fresh_data=bool(keys.get("fresh_data", False)),
        out=str(keys.get("out", "results")),
        threads=int(keys.get("threads", 1)),
        seed=int(keys.get("seed", 0)),
        d_tilde=float(keys["d_tilde"]) if "d_tilde" in keys else None)
