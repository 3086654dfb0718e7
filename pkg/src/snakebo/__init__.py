"""Cost-aware Bayesian optimization with TSP-ordered Thompson batches.

The optimizer plans a whole-budget path of Thompson-sampled queries, thins
every fresh batch against the points already queried (epsilon point
deletion) and re-orders the remainder from the current input via simulated
annealing, keeping input-change costs low in synchronous and asynchronous
(delayed-observation) regimes.  Classical BO baselines, the benchmark suite
and an experiment harness ship alongside.
"""

from .baselines import AcquisitionConfig, run_baseline
from .benchmarks import Benchmark, make_benchmark
from .costs import CostModel, ResponseParams, snar_cost_model
from .planner import AdaptiveGrid, Path, build_adaptive_grid, dequeue_query, solve_tsp
from .records import RunRecord
from .snake import (QueryLog, SnakeConfig, adaptive_epsilon, multi_objective_batch,
                    point_deletion, run_snake)
from .surrogate import (Dataset, HyperparamBounds, KernelParams, Posterior,
                        calibrate_bounds, fit_posterior, kernel_eval,
                        log_marginal_likelihood, predict, train_hyperparams)
from .thompson import (Batch, FourierSample, PathwiseSample, create_batch,
                       draw_prior_sample, optimize_sample, pathwise_update)

__all__ = [
    "AcquisitionConfig", "AdaptiveGrid", "Batch", "Benchmark", "CostModel",
    "Dataset", "FourierSample", "HyperparamBounds", "KernelParams", "Path",
    "PathwiseSample", "Posterior", "QueryLog", "ResponseParams", "RunRecord",
    "SnakeConfig", "adaptive_epsilon", "build_adaptive_grid", "calibrate_bounds",
    "create_batch", "dequeue_query", "draw_prior_sample", "fit_posterior",
    "kernel_eval", "log_marginal_likelihood", "make_benchmark",
    "multi_objective_batch", "optimize_sample", "pathwise_update",
    "point_deletion", "predict", "run_baseline", "run_snake", "snar_cost_model",
    "solve_tsp", "train_hyperparams",
]

__version__ = "0.1.0"
