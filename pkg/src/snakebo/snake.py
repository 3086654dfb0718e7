"""Path-based Bayesian optimization with point deletion.

The optimizer keeps a whole-budget schedule alive at all times: a fresh
Thompson batch of size T is drawn whenever observations arrive, thinned by
epsilon point deletion against everything already queried, coarsified on the
adaptive grid and re-ordered by the path solver from the current input.  The
executed prefix of the schedule is never touched by replanning.

Observations submitted at iteration t become visible at t + delay + 1, so a
delay of zero reproduces classical sequential decision making and a delay
at or above the budget freezes the initial schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .costs import CostModel
from .planner import AdaptiveGrid, Path, build_adaptive_grid, dequeue_query, solve_tsp
from .records import RunRecord, RunRecorder
from .surrogate import (Dataset, HyperparamBounds, KernelParams, calibrate_bounds,
                        fit_posterior)
from .surrogate import train_hyperparams as _train_hyperparams
from .thompson import Batch, create_batch


@dataclass
class QueryLog:
    """Executed queries in order, with their submit iterations."""

    points: list = field(default_factory=list)
    submit_iters: list = field(default_factory=list)

    def add(self, x: np.ndarray, submit: int) -> None:
        self.points.append(np.asarray(x, dtype=float).copy())
        self.submit_iters.append(submit)

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self, dim: int) -> np.ndarray:
        if not self.points:
            return np.zeros((0, dim))
        return np.stack(self.points)

    def pending(self, iteration: int, delay: int) -> list:
        """Queries submitted but not yet observed at ``iteration``."""
        return [p for p, s in zip(self.points, self.submit_iters)
                if s + delay + 1 > iteration]


@dataclass
class SnakeConfig:
    """Run configuration; budget and dimension are the only required fields."""

    budget: int
    dim: int
    delay: int = 0
    epsilon: float = 0.1
    adaptive_epsilon: bool = False
    n_local: int = 25
    n_global: int = 100
    n_fourier: int = 1024
    retrain_every: int = 25
    noise_std: float = 0.0
    seed: int = 0
    x0: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    params: Optional[KernelParams] = None
    bounds: Optional[HyperparamBounds] = None
    ratios: Optional[Sequence[int]] = None
    initial_design: str = "uniform"
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.initial_design not in ("uniform", "sobol"):
            raise ValueError("initial_design must be 'uniform' or 'sobol'")


def point_deletion(batch: Batch, queried: QueryLog, epsilon: float,
                   rng: np.random.Generator) -> Batch:
    """Remove one batch point per already-queried point.

    Chronological pass over the queried points: delete the nearest remaining
    batch point when it lies strictly within epsilon (ties to the lowest
    index), otherwise delete a uniformly random remaining point.  The
    deterministic removals never consume randomness.
    """
    n_queried = len(queried)
    if len(batch) < n_queried:
        raise ValueError(f"batch of {len(batch)} cannot absorb {n_queried} deletions")
    points = batch.points
    provenance = batch.provenance
    alive = np.ones(len(batch), dtype=bool)
    for q in queried.points:
        idx_alive = np.flatnonzero(alive)
        dists = np.linalg.norm(points[idx_alive] - np.asarray(q, dtype=float), axis=1)
        j = int(np.argmin(dists))
        if dists[j] < epsilon:
            alive[idx_alive[j]] = False
        else:
            alive[idx_alive[int(rng.integers(idx_alive.size))]] = False
    return Batch(points[alive], provenance[alive])


def adaptive_epsilon(params: KernelParams) -> float:
    """Parameter-free deletion constant: the smallest current lengthscale."""
    return float(np.min(params.lengthscales))


def multi_objective_batch(posteriors: Sequence, ratios: Sequence[int], size: int,
                          F: int, rng: np.random.Generator) -> Batch:
    """Round-robin Thompson batch across objectives, proportional to ratios.

    Remainder points go to the earliest objectives; each point carries the
    index of the objective whose sample produced it.  A single objective
    reduces exactly to create_batch.
    """
    if len(posteriors) == 0:
        raise ValueError("need at least one posterior")
    if len(ratios) != len(posteriors):
        raise ValueError("one ratio per posterior required")
    if len(posteriors) == 1:
        return create_batch(posteriors[0], size, F, rng, objective_index=0)
    ratios = np.asarray(ratios, dtype=float)
    shares = size * ratios / ratios.sum()
    counts = np.floor(shares).astype(int)
    for i in range(len(counts)):
        if counts.sum() == size:
            break
        counts[i] += 1
    parts = []
    for i, (post, count) in enumerate(zip(posteriors, counts)):
        sub = rng.spawn(1)[0]
        parts.append(create_batch(post, int(count), F, sub, objective_index=i))
    pts = np.vstack([p.points for p in parts])
    prov = np.concatenate([p.provenance for p in parts])
    return Batch(pts, prov)


def initial_schedule(config: SnakeConfig, cost: CostModel,
                     rng: np.random.Generator) -> Tuple[np.ndarray, Batch, Path, list]:
    """Starting point, whole-budget design and its path, plus the remaining
    RNG streams consumed by the main loop (kept here so tests can reproduce
    the prologue exactly)."""
    start_stream, design_stream, noise_stream, plan_stream = rng.spawn(4)
    d = config.dim
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float)
    else:
        x0 = start_stream.random(d)
    if config.initial_design == "uniform":
        pts = design_stream.random((config.budget, d))
    else:
        import warnings

        from scipy.stats import qmc

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # Sobol balance warning off powers of 2
            pts = qmc.Sobol(d=d, scramble=True, seed=design_stream).random(config.budget)
    batch = Batch.of(pts)
    path = solve_tsp(batch.points, x0, cost, plan_stream.spawn(1)[0])
    return x0, batch, path, [noise_stream, plan_stream]


def _as_objective_list(objective) -> list:
    if callable(objective):
        return [objective]
    return list(objective)


def run_snake(objective: Union[Callable[[np.ndarray], float], Sequence[Callable]],
              cost: CostModel, config: SnakeConfig,
              rng: Optional[np.random.Generator] = None,
              on_iteration: Optional[Callable] = None) -> RunRecord:
    """Execute the full path-based optimization run and return its trace.

    ``objective`` maps a normalized point to a scalar; a sequence of
    callables runs the multi-objective variant (batches mixed per
    ``config.ratios``, regret tracked per objective, primary columns follow
    objective 0).  ``on_iteration(t, query, log)`` is called after each
    query execution.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    objectives = _as_objective_list(objective)
    n_obj = len(objectives)
    if n_obj > 1 and config.ratios is None:
        config = replace(config, ratios=[1] * n_obj)

    T, d = config.budget, config.dim
    if config.params is not None:
        params = [config.params] * n_obj
        bounds = [config.bounds] * n_obj
    else:
        calib = rng.spawn(1)[0]
        pb = [calibrate_bounds(obj, T, d, calib.spawn(1)[0]) for obj in objectives]
        params = [p for p, _ in pb]
        bounds = [b for _, b in pb]

    x0, batch0, path, (noise_stream, plan_stream) = initial_schedule(config, cost, rng)

    datasets = [Dataset.empty(d) for _ in range(n_obj)]
    log = QueryLog()
    recorder = RunRecorder(config.f_star, meta=dict(config.meta))
    recorder.meta.setdefault("pilot_evals_free", True)
    grid: Optional[AdaptiveGrid] = None
    x_prev = x0
    n_arrived = 0
    last_train_count = 0
    pending: list[tuple[np.ndarray, int, list[float], list[float]]] = []
    best_per_obj = [-np.inf] * n_obj
    regret_per_obj = np.full((T, n_obj), np.nan)

    def replan(t: int) -> Tuple[Optional[AdaptiveGrid], Path]:
        event = plan_stream.spawn(1)[0]
        batch_rng, del_rng, tsp_rng = event.spawn(3)
        posteriors = [fit_posterior(datasets[i].arrived_by(t), params[i]) for i in range(n_obj)]
        assert all(np.all(p.data.submit_iter <= t - config.delay - 1) for p in posteriors), \
            "causality violation: posterior saw an observation that has not arrived"
        eps = adaptive_epsilon(params[0]) if config.adaptive_epsilon else config.epsilon
        if n_obj == 1:
            fresh = create_batch(posteriors[0], T, config.n_fourier, batch_rng)
        else:
            fresh = multi_objective_batch(posteriors, config.ratios, T, config.n_fourier, batch_rng)
        thinned = point_deletion(fresh, log, eps, del_rng)
        new_grid = build_adaptive_grid(thinned, x_prev, config.n_local, config.n_global)
        new_path = solve_tsp(new_grid, x_prev, cost, tsp_rng)
        return new_grid, new_path

    for t in range(1, T + 1):
        arrived_now = [p for p in pending if p[1] + config.delay + 1 <= t]
        if arrived_now:
            pending = [p for p in pending if p[1] + config.delay + 1 > t]
            for x_q, submit, y_true_list, y_obs_list in arrived_now:
                for i in range(n_obj):
                    datasets[i] = datasets[i].append(x_q, y_obs_list[i], submit, submit + config.delay + 1)
                n_arrived += 1
            if n_arrived - last_train_count >= config.retrain_every:
                for i in range(n_obj):
                    if bounds[i] is not None:
                        params[i] = _train_hyperparams(datasets[i].arrived_by(t), params[i], bounds[i])
                last_train_count = n_arrived
            grid, path = replan(t)
        if path.exhausted:
            # coarse nodes can merge several batch points, so a long delay can
            # drain the schedule before new data arrives; replan from the
            # same posterior in that case
            grid, path = replan(t)
        x_t = dequeue_query(path, grid)
        step = cost(x_prev, x_t)
        try:
            y_true_list = [float(obj(x_t)) for obj in objectives]
        except Exception as exc:
            raise RuntimeError(f"objective evaluation failed at iteration {t} "
                               f"for query {x_t}") from exc
        if config.noise_std > 0:
            y_obs_list = [y + config.noise_std * noise_stream.normal() for y in y_true_list]
        else:
            y_obs_list = list(y_true_list)
        pending.append((x_t, t, y_true_list, y_obs_list))
        log.add(x_t, t)
        recorder.add(x_t, y_true_list[0], y_obs_list[0], t, t + config.delay + 1, step)
        for i in range(n_obj):
            best_per_obj[i] = max(best_per_obj[i], y_true_list[i])
            regret_per_obj[t - 1, i] = best_per_obj[i]
        if on_iteration is not None:
            on_iteration(t, x_t, log)
        x_prev = x_t

    assert len(log) == T, "budget exactness violated"
    extra = {}
    if n_obj > 1:
        extra["best_per_objective"] = regret_per_obj
    record = recorder.build(extra)
    record.meta.setdefault("initial_batch", batch0.points)
    record.meta.setdefault("x0", x0)
    record.validate()
    return record
