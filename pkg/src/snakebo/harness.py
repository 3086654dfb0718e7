"""Experiment harness: seeded runs, persistence, plots, escape experiments.

A run grid is methods x seeds on one benchmark; every run writes one CSV and
the grid writes a single summary JSON.  Hyperparameter bounds are calibrated
once per (function, seed) pair and shared by all methods so no method gets a
different initialization.  The escape experiment estimates the probability
that a Thompson sample stays inside a fixed interval after training the GP
on points drawn inside it.
"""
from __future__ import annotations

import json
import math
import multiprocessing
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Optional, Sequence

import numpy as np

from . import benchmarks as bench_mod
from .baselines import STRATEGIES, AcquisitionConfig, run_baseline
from .costs import CostModel, snar_cost_model
from .records import REGRET_FLOOR, RunRecord
from .snake import SnakeConfig, run_snake
from .surrogate import Dataset, calibrate_bounds, fit_posterior
from .thompson import create_batch

ENV_THREADS = "SNAKE_THREADS"

CSV_FLOAT_FMT = "%.17g"

_METHOD_ALIASES = {s.lower(): s for s in STRATEGIES}
_METHOD_ALIASES.update({"random": "RandomTSP", "ts": "asyncTS", "snake": "snake"})


def bimodal_objective(x) -> float:
    """In-repo 1-D test function: non-global bump at 0.15, global at 0.7."""
    v = float(np.atleast_1d(np.asarray(x, dtype=float))[0])
    return (0.8 * math.exp(-0.5 * ((v - 0.15) / 0.05) ** 2)
            + 1.0 * math.exp(-0.5 * ((v - 0.7) / 0.05) ** 2))


BIMODAL_F_MAX = 1.0  # the far bump's tail contribution is below machine epsilon


@dataclass(frozen=True)
class EscapeConfig:
    """Region and sampling sizes for the non-escape probability estimate."""

    center: float = 0.15
    radius: float = 0.05
    n_train: int = 15
    n_samples: int = 5000
    repetitions: int = 10

    def __post_init__(self) -> None:
        if not (0.0 <= self.center - self.radius and self.center + self.radius <= 1.0):
            raise ValueError("region must lie inside the domain")
        if self.n_samples < 1:
            raise ValueError("need at least one Thompson sample")


def estimate_nonescape_probability(post, region: EscapeConfig,
                                   rng: np.random.Generator) -> float:
    """Fraction of independent Thompson maximizers landing in the region
    (the Bernoulli maximum-likelihood estimate)."""
    batch = create_batch(post, region.n_samples, 1024, rng)
    dist = np.abs(batch.points[:, 0] - region.center)
    return float(np.mean(dist <= region.radius))


def predicted_escape_iteration(p_hat: float, T: int) -> int:
    """Expected number of iterations spent exploiting the region: round(p*T)."""
    if not (0.0 <= p_hat <= 1.0):
        raise ValueError("p_hat must be a probability")
    return int(round(p_hat * T))


def full_escape_probability(p: float, T: int, t: int) -> float:
    """(1 - p)^(T - t): chance that no sample of the remaining budget lands
    in the region."""
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must be a probability")
    if t > T:
        raise ValueError("t must not exceed T")
    return float((1.0 - p) ** (T - t))


def escape_window(queries: np.ndarray, center: float = 0.15, radius: float = 0.05):
    """First query inside the ball and first query outside after entering
    (both 1-based iteration indices, None when absent)."""
    inside = np.abs(np.atleast_2d(queries)[:, 0] - center) <= radius
    if not inside.any():
        return None, None
    first_in = int(np.argmax(inside)) + 1
    for t in range(first_in + 1, len(inside) + 1):
        if not inside[t - 1]:
            return first_in, t
    return first_in, None


def bimodal_escape_run(seed: int, epsilon: float, budget: int = 100):
    """One bimodal-objective run from x0 = 0; returns the escape window of
    the non-global bump's ball (used by the point-deletion escape check)."""
    cost = CostModel()
    params, bounds = calibrate_bounds(bimodal_objective, budget, 1, pilot_rng("bimodal", 0))
    cfg = SnakeConfig(budget=budget, dim=1, delay=0, epsilon=epsilon,
                      params=params, bounds=bounds, x0=np.array([0.0]),
                      f_star=BIMODAL_F_MAX, seed=seed)
    record = run_snake(bimodal_objective, cost, cfg,
                       run_rng("bimodal", f"snake-{epsilon}", seed))
    return escape_window(record.queries)


def _bimodal_escape_task(args):
    seed, epsilon = args
    return seed, epsilon, bimodal_escape_run(seed, epsilon)


def run_escape_experiment(mode: str, n_points: int = 15, n_samples: int = 5000,
                          repetitions: int = 5, seed: int = 0,
                          budget_for_pilot: int = 100) -> dict:
    """Estimate the non-escape probability of the bimodal objective.

    mode "stationary" uses the interval [0.1, 0.2] around the non-global
    bump; mode "no-stationary" uses [0.0, 0.1], which contains no stationary
    point.  The GP keeps the pilot-calibrated hyperparameters and is fitted
    on ``n_points`` uniform draws inside the interval per repetition.
    """
    if mode == "stationary":
        region = EscapeConfig(center=0.15, radius=0.05,
                              n_train=n_points, n_samples=n_samples, repetitions=repetitions)
    elif mode == "no-stationary":
        region = EscapeConfig(center=0.05, radius=0.05,
                              n_train=n_points, n_samples=n_samples, repetitions=repetitions)
    else:
        raise ValueError("mode must be 'stationary' or 'no-stationary'")
    root = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(mode.encode())]))
    params, _ = calibrate_bounds(bimodal_objective, budget_for_pilot, 1, root.spawn(1)[0])
    estimates = []
    for rep_rng in root.spawn(repetitions):
        lo = region.center - region.radius
        x = lo + 2.0 * region.radius * rep_rng.random(region.n_train)
        y = np.array([bimodal_objective(v) for v in x])
        data = Dataset(x[:, None], y, np.zeros(len(x), int), np.ones(len(x), int))
        post = fit_posterior(data, params)
        estimates.append(estimate_nonescape_probability(post, region, rep_rng))
    return {
        "mode": mode,
        "n_train": n_points,
        "n_samples": n_samples,
        "repetitions": repetitions,
        "estimates": estimates,
        "mean": float(np.mean(estimates)),
        "std": float(np.std(estimates)),
    }


# --- persistence ---------------------------------------------------------------


def csv_header(dim: int) -> str:
    xs = ",".join(f"x{i + 1}" for i in range(dim))
    return f"iter,{xs},y,arrived_at,best_y,simple_regret,step_cost,cum_cost"


def write_csv(record: RunRecord, path) -> None:
    d = record.dim
    lines = [csv_header(d)]
    for i in range(len(record)):
        xs = ",".join(CSV_FLOAT_FMT % v for v in record.queries[i])
        lines.append(",".join([
            str(i + 1), xs,
            CSV_FLOAT_FMT % record.y_obs[i],
            str(int(record.arrival_iter[i])),
            CSV_FLOAT_FMT % record.best_y[i],
            CSV_FLOAT_FMT % record.simple_regret[i],
            CSV_FLOAT_FMT % record.step_cost[i],
            CSV_FLOAT_FMT % record.cum_cost[i],
        ]))
    FilePath(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> RunRecord:
    """Rebuild a RunRecord from an emitted CSV (noiseless y assumed)."""
    text = FilePath(path).read_text().strip().splitlines()
    header = text[0].split(",")
    d = sum(1 for h in header if h.startswith("x"))
    rows = [line.split(",") for line in text[1:]]
    q = np.array([[float(v) for v in r[1:1 + d]] for r in rows])
    y = np.array([float(r[1 + d]) for r in rows])
    arrived = np.array([int(r[2 + d]) for r in rows], dtype=int)
    best = np.array([float(r[3 + d]) for r in rows])
    regret = np.array([float(r[4 + d]) for r in rows])
    step = np.array([float(r[5 + d]) for r in rows])
    cum = np.array([float(r[6 + d]) for r in rows])
    submit = np.array([int(r[0]) for r in rows], dtype=int)
    return RunRecord(queries=q, queries_native=q.copy(), y_true=y.copy(), y_obs=y,
                     submit_iter=submit, arrival_iter=arrived, best_y=best,
                     simple_regret=regret, step_cost=step, cum_cost=cum)


def summarize(records: Sequence[RunRecord], method: str, function: str,
              budget: int, delay: int) -> dict:
    logs = [r.final_log_regret for r in records]
    costs = [r.final_cost for r in records]
    return {
        "method": method,
        "function": function,
        "budget": budget,
        "delay": delay,
        "n_seeds": len(records),
        "mean_final_log_regret": float(np.mean(logs)),
        "std_final_log_regret": float(np.std(logs)),
        "mean_final_cost": float(np.mean(costs)),
        "std_final_cost": float(np.std(costs)),
    }


# --- run configuration ----------------------------------------------------------


_DEFAULT_CONFIG = {
    "function": "branin2d",
    "method": "snake",
    "budget": 100,
    "delay": 0,
    "epsilon": "0.1",
    "cost": "euclidean",
    # response-cost constants: comma lists aligned with response_dims
    "response_dims": "",
    "response_alpha": "",
    "response_beta": "",
    "response_gamma": "",
    "seed": 0,
    "seeds": 1,
    "noise_std": 0.0,
    "n_local": 25,
    "n_global": 100,
    "fourier": 1024,
    "retrain_every": 25,
    "acq_multistarts": 7500,
    "acq_epochs": 150,
    "acq_lr": 1e-4,
    "gamma": 1.0,
    "out": "runs",
}


def parse_config_file(path) -> dict:
    """Flat key-value grammar: one ``key = value`` per line, '#' comments."""
    cfg = {}
    for raw in FilePath(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key = value): {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _DEFAULT_CONFIG:
            raise ValueError(f"unknown config key {key!r}")
        cfg[key] = value
    return cfg


def _coerce(cfg: dict) -> dict:
    out = dict(_DEFAULT_CONFIG)
    out.update(cfg)
    for key in ("budget", "delay", "seed", "seeds", "n_local", "n_global",
                "fourier", "retrain_every", "acq_multistarts", "acq_epochs"):
        out[key] = int(out[key])
    for key in ("noise_std", "acq_lr", "gamma"):
        out[key] = float(out[key])
    out["method"] = str(out["method"])
    return out


def pilot_rng(function: str, seed: int) -> np.random.Generator:
    """Calibration stream keyed by (function, seed) only, so every method
    sees identical hyperparameter bounds."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(function.encode())]))


def run_rng(function: str, method: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [seed, zlib.crc32(function.encode()), zlib.crc32(method.encode())]))


def method_label(method: str, epsilon: str) -> str:
    if method == "snake":
        return f"snake-{epsilon}"
    return method


def response_params_from_config(cfg: dict):
    """ResponseParams built from the flat config's comma lists, or None."""
    from .costs import ResponseParams

    dims = str(cfg.get("response_dims", "")).strip()
    if not dims:
        return None
    parse = lambda key: tuple(float(v) for v in str(cfg[key]).split(",") if v.strip())
    return ResponseParams(control_dims=tuple(int(v) for v in dims.split(",") if v.strip()),
                          alpha=parse("response_alpha"),
                          beta=parse("response_beta"),
                          gamma=parse("response_gamma"))


def make_cost_model(kind: str, bench, cfg: Optional[dict] = None) -> CostModel:
    if kind == "euclidean":
        return CostModel()
    if kind == "response":
        custom = response_params_from_config(cfg or {})
        if custom is not None:
            return CostModel(variant="response", response=custom,
                             lower=tuple(bench.lower), upper=tuple(bench.upper))
        if bench.dim == 4:
            return snar_cost_model(lower=bench.lower, upper=bench.upper)
        # first-order response on every dimension, unit constants
        from .costs import ResponseParams

        params = ResponseParams(control_dims=tuple(range(bench.dim)),
                                alpha=(5.0,) * bench.dim, beta=(1.0,) * bench.dim,
                                gamma=(1.0,) * bench.dim)
        return CostModel(variant="response", response=params,
                         lower=tuple(bench.lower), upper=tuple(bench.upper))
    raise ValueError(f"unknown cost kind {kind!r}")


def run_single(cfg: dict, seed: int) -> RunRecord:
    """One (function, method, seed) run with shared pilot calibration."""
    cfg = _coerce(cfg)
    function = cfg["function"]
    method = cfg["method"]
    bench = bench_mod.make_benchmark(function)
    objective = lambda x: bench_mod.eval(bench, x)
    if cfg["cost"] == "response" and method.lower() == "trei":
        raise ValueError("TrEI is not suited to general cost functions; "
                         "use a euclidean cost for it")
    cost = make_cost_model(cfg["cost"], bench, cfg)
    params, bounds = calibrate_bounds(objective, cfg["budget"], bench.dim,
                                      pilot_rng(function, seed))
    epsilon_raw = str(cfg["epsilon"])
    adaptive = epsilon_raw == "adaptive"
    run_config = SnakeConfig(
        budget=cfg["budget"], dim=bench.dim, delay=cfg["delay"],
        epsilon=0.0 if adaptive else float(epsilon_raw),
        adaptive_epsilon=adaptive,
        n_local=cfg["n_local"], n_global=cfg["n_global"], n_fourier=cfg["fourier"],
        retrain_every=cfg["retrain_every"], noise_std=cfg["noise_std"], seed=seed,
        f_star=bench.f_max, params=params, bounds=bounds,
        meta={"function": function, "method": method, "seed": seed,
              "budget": cfg["budget"], "delay": cfg["delay"]},
    )
    rng = run_rng(function, method, seed)
    if method == "snake":
        record = run_snake(objective, cost, run_config, rng)
    else:
        tag = _METHOD_ALIASES.get(method.lower())
        if tag is None or tag == "snake":
            raise ValueError(f"unknown method {method!r}")
        acq = AcquisitionConfig(multistarts=cfg["acq_multistarts"],
                                epochs=cfg["acq_epochs"], lr=cfg["acq_lr"],
                                gamma=cfg["gamma"])
        record = run_baseline(tag, objective, cost, run_config, acq, rng)
    record.queries_native = bench.to_native(record.queries)
    return record


def _grid_task(args) -> dict:
    cfg, method, seed = args
    cfg = dict(cfg)
    cfg["method"] = method
    record = run_single(cfg, seed)
    label = method_label(method, str(cfg["epsilon"]))
    out = FilePath(cfg["out"])
    path = out / f"{cfg['function']}_{label}_seed{seed}.csv"
    write_csv(record, path)
    return {"method": label, "function": cfg["function"], "seed": seed,
            "budget": cfg["budget"], "delay": cfg["delay"],
            "final_log_regret": record.final_log_regret,
            "final_cost": record.final_cost, "csv": str(path)}


def max_workers(n_tasks: int) -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, min(int(env), n_tasks))
    return max(1, min(os.cpu_count() or 1, n_tasks))


def _parallel_map(fn, tasks, workers: int) -> list:
    """Map over spawned single-BLAS-thread workers.

    Spawn avoids the fork-after-threads deadlock; capping the linear-algebra
    threads stops the workers from oversubscribing the cores.
    """
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


def run_experiment(config, overrides: Optional[dict] = None) -> dict:
    """Run the method x seed grid described by a config mapping or file path.

    Writes one CSV per run and a single summary JSON; returns the summary.
    Identical config and seed always produce byte-identical CSVs.
    """
    if isinstance(config, (str, os.PathLike)):
        cfg = parse_config_file(config)
    else:
        cfg = dict(config)
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg = _coerce(cfg)
    out = FilePath(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    methods = [m.strip() for m in str(cfg["method"]).split(",") if m.strip()]
    seeds = list(range(cfg["seed"], cfg["seed"] + cfg["seeds"]))
    tasks = [(cfg, m, s) for m in methods for s in seeds]
    workers = max_workers(len(tasks))
    if workers > 1 and len(tasks) > 1:
        rows = list(_parallel_map(_grid_task, tasks, workers))
    else:
        rows = [_grid_task(t) for t in tasks]
    summary = []
    for method in methods:
        label = method_label(method, str(cfg["epsilon"]))
        sub = [r for r in rows if r["method"] == label]
        summary.append({
            "method": label,
            "function": cfg["function"],
            "budget": cfg["budget"],
            "delay": cfg["delay"],
            "n_seeds": len(sub),
            "mean_final_log_regret": float(np.mean([r["final_log_regret"] for r in sub])),
            "std_final_log_regret": float(np.std([r["final_log_regret"] for r in sub])),
            "mean_final_cost": float(np.mean([r["final_cost"] for r in sub])),
            "std_final_cost": float(np.std([r["final_cost"] for r in sub])),
        })
    payload = {"runs": rows, "summary": summary}
    (out / "summary.json").write_text(json.dumps(payload, indent=2) + "\n")
    return payload


# --- plots ----------------------------------------------------------------------


def _log_regret_curve(record: RunRecord) -> np.ndarray:
    return np.log(np.maximum(record.simple_regret, REGRET_FLOOR))


def _regret_at_costs(record: RunRecord, grid: np.ndarray) -> np.ndarray:
    """Step-interpolate log regret onto a common cost axis."""
    curve = _log_regret_curve(record)
    idx = np.searchsorted(record.cum_cost, grid, side="right") - 1
    out = np.where(idx >= 0, curve[np.clip(idx, 0, len(curve) - 1)], curve[0])
    return out


def cost_axis_clip(by_method: dict) -> float:
    """X-axis limit for regret-vs-cost: max cost reached by the path-based or
    random orderings, falling back to the global max when absent."""
    preferred = [m for m in by_method if m.startswith("snake") or m.lower().startswith("random")]
    pool = preferred if preferred else list(by_method)
    return max(rec.final_cost for m in pool for rec in by_method[m])


def emit_plots(records_by_method: dict, out_dir, function: str = "benchmark") -> list:
    """Three SVGs: log-regret vs cost, log-regret vs iteration, cost vs
    iteration; bands are the mean plus/minus half the standard deviation
    across seeds."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records_by_method:
        raise ValueError("need at least one record")
    out = FilePath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clip = cost_axis_clip(records_by_method)
    fallback = not any(m.startswith("snake") or m.lower().startswith("random")
                       for m in records_by_method)
    paths = []

    def band(ax, x, ys, label):
        ys = np.asarray(ys)
        mean = ys.mean(axis=0)
        half = ys.std(axis=0) / 2.0
        ax.plot(x, mean, label=label)
        ax.fill_between(x, mean - half, mean + half, alpha=0.25)

    # regret vs cost
    fig, ax = plt.subplots(figsize=(5, 4))
    grid = np.linspace(0.0, clip, 200)
    for method, recs in records_by_method.items():
        band(ax, grid, [_regret_at_costs(r, grid) for r in recs], method)
    ax.set_xlabel("cumulative input cost")
    ax.set_ylabel("log simple regret")
    title = f"{function}: regret vs cost"
    if fallback:
        title += " (clipped at global max cost)"
    ax.set_title(title)
    ax.legend(fontsize=7)
    p = out / f"{function}_regret_vs_cost.svg"
    fig.savefig(p, format="svg")
    plt.close(fig)
    paths.append(p)

    # regret vs iteration and cost vs iteration
    for suffix, extract, ylabel in (
        ("regret_vs_iter", _log_regret_curve, "log simple regret"),
        ("cost_vs_iter", lambda r: r.cum_cost, "cumulative input cost"),
    ):
        fig, ax = plt.subplots(figsize=(5, 4))
        for method, recs in records_by_method.items():
            T = min(len(r) for r in recs)
            band(ax, np.arange(1, T + 1), [extract(r)[:T] for r in recs], method)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{function}: {suffix.replace('_', ' ')}")
        ax.legend(fontsize=7)
        p = out / f"{function}_{suffix}.svg"
        fig.savefig(p, format="svg")
        plt.close(fig)
        paths.append(p)
    return paths


def plot_run_directory(in_dir, out_dir) -> list:
    """Group emitted CSVs by function/method and plot each function."""
    groups: dict = {}
    for path in sorted(FilePath(in_dir).glob("*_seed*.csv")):
        stem = path.stem
        name, _, seedpart = stem.rpartition("_seed")
        function, _, method = name.partition("_")
        groups.setdefault(function, {}).setdefault(method, []).append(read_csv(path))
    all_paths = []
    for function, by_method in groups.items():
        all_paths.extend(emit_plots(by_method, out_dir, function))
    return all_paths
