"""End-to-end acceptance gate.

One test per criterion; each prints a PASS/FAIL line with the measured
numbers (run with ``pytest -v -s tests/test_acceptance.py`` to watch them).
The benchmark-scale criteria run 10-seed grids through the harness and take
several minutes each on a laptop CPU; set SNAKE_THREADS to bound the worker
pool.
"""
import itertools
import math
import time

import numpy as np
import pytest

import snakebo.benchmarks as B
from snakebo import harness
from snakebo.baselines import eipu, expected_improvement
from snakebo.costs import CostModel, response_cost_dim
from snakebo.planner import path_cost, solve_tsp
from snakebo.snake import QueryLog, SnakeConfig, initial_schedule, point_deletion, run_snake
from snakebo.surrogate import (Dataset, KernelParams, calibrate_bounds, fit_posterior,
                               log_marginal_likelihood, mll_and_grad)
from snakebo.thompson import Batch, create_batch, draw_prior_sample, pathwise_update
from snakebo.surrogate import kernel_eval

N_SEEDS = 10
BUDGET = 100


def report(criterion: str, passed: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


def run_grid(function: str, method: str, seeds: int = N_SEEDS) -> dict:
    cfg = {"function": function, "method": method, "budget": BUDGET, "delay": 0,
           "epsilon": "0.1", "seed": 0, "seeds": seeds, "out": f"/tmp/snakebo_accept/{function}_{method}"}
    payload = harness.run_experiment(cfg)
    return payload["summary"][0]


@pytest.fixture(scope="module")
def branin_runs():
    return {"snake": run_grid("branin2d", "snake"), "EI": run_grid("branin2d", "EI")}


@pytest.fixture(scope="module")
def hartmann_runs():
    return {"snake": run_grid("hartmann3d", "snake"), "EI": run_grid("hartmann3d", "EI")}


def test_criterion_1_tsp_oracle_equivalence():
    rng = np.random.default_rng(2024)
    cost = CostModel()
    t0 = time.perf_counter()
    exact = 0
    worst = 1.0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        pts = rng.random((n, 2))
        src = rng.random(2)
        got = path_cost(solve_tsp(pts, src, cost, rng), cost)
        W = cost.pairwise(np.vstack([src[None, :], pts]))
        best = min(
            W[0, p[0]] + sum(W[a, b] for a, b in zip(p[:-1], p[1:]))
            for p in itertools.permutations(range(1, n + 1))
        )
        ratio = got / best
        worst = max(worst, ratio)
        exact += ratio <= 1.0 + 1e-9
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.05 and exact >= 90 and elapsed < 30.0
    report("1 (TSP oracle)", ok,
           f"exact {exact}/100, worst ratio {worst:.4f}, {elapsed:.1f}s")
    assert worst <= 1.05
    assert exact >= 90
    assert elapsed < 30.0


def test_criterion_2_branin_cost_advantage(branin_runs):
    snake_cost = branin_runs["snake"]["mean_final_cost"]
    ei_cost = branin_runs["EI"]["mean_final_cost"]
    ok = snake_cost <= 0.5 * ei_cost
    report("2 (Branin cost)", ok,
           f"snake {snake_cost:.2f} vs EI {ei_cost:.2f}, ratio {snake_cost / ei_cost:.2f}")
    assert ok


def test_criterion_3_branin_regret_parity(branin_runs):
    snake_lr = branin_runs["snake"]["mean_final_log_regret"]
    ei_lr = branin_runs["EI"]["mean_final_log_regret"]
    ok = snake_lr <= -8.0 and snake_lr <= ei_lr + 3.0
    report("3 (Branin regret)", ok,
           f"snake {snake_lr:.2f} (need <= -8), EI {ei_lr:.2f} (gap {snake_lr - ei_lr:+.2f}, need <= +3)")
    assert snake_lr <= -8.0
    assert snake_lr <= ei_lr + 3.0


def test_criterion_4_hartmann3d(hartmann_runs):
    snake_cost = hartmann_runs["snake"]["mean_final_cost"]
    ei_cost = hartmann_runs["EI"]["mean_final_cost"]
    snake_lr = hartmann_runs["snake"]["mean_final_log_regret"]
    ok = snake_cost <= 0.4 * ei_cost and snake_lr <= -6.0
    report("4 (Hartmann3D)", ok,
           f"cost {snake_cost:.2f} vs EI {ei_cost:.2f} (ratio {snake_cost / ei_cost:.2f}, "
           f"need <= 0.4); regret {snake_lr:.2f} (need <= -6)")
    assert snake_cost <= 0.4 * ei_cost
    assert snake_lr <= -6.0


def test_criterion_5_escape_probability_experiment():
    t0 = time.perf_counter()
    stationary = harness.run_escape_experiment("stationary", n_points=15,
                                               n_samples=5000, repetitions=5, seed=0)
    empty = harness.run_escape_experiment("no-stationary", n_points=15,
                                          n_samples=5000, repetitions=5, seed=0)
    elapsed = time.perf_counter() - t0
    hi = sum(p > 0.4 for p in stationary["estimates"])
    lo = sum(p < 0.05 for p in empty["estimates"])
    ok = hi >= 3 and lo >= 3 and elapsed < 300.0
    report("5 (escape probability)", ok,
           f"stationary p {np.round(stationary['estimates'], 3).tolist()} ({hi}/5 > 0.4); "
           f"no-stationary p {np.round(empty['estimates'], 3).tolist()} ({lo}/5 < 0.05); {elapsed:.0f}s")
    assert hi >= 3
    assert lo >= 3
    assert elapsed < 300.0


def test_criterion_6_point_deletion_escape():
    tasks = [(seed, eps) for seed in range(N_SEEDS) for eps in (0.1, 0.0)]
    workers = harness.max_workers(len(tasks))
    if workers > 1:
        results = harness._parallel_map(harness._bimodal_escape_task, tasks, workers)
    else:
        results = [harness._bimodal_escape_task(t) for t in tasks]
    escaped_early = 0
    stuck_through_90 = 0
    for _, eps, (first_in, first_out) in results:
        if eps == 0.1:
            if first_in is not None and first_out is not None and first_out < 90:
                escaped_early += 1
        else:
            if first_in is not None and (first_out is None or first_out > 90):
                stuck_through_90 += 1
    ok = escaped_early >= 8 and stuck_through_90 >= 8
    report("6 (point-deletion escape)", ok,
           f"eps=0.1 escaped before 90 in {escaped_early}/10; "
           f"eps=0 stayed inside through 90 in {stuck_through_90}/10")
    assert escaped_early >= 8
    assert stuck_through_90 >= 8


class TestCriterion7Properties:
    def test_mll_gradient_finite_differences(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(20):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(2, 9))
            p = KernelParams(rng.uniform(0.15, 1.2, d), rng.uniform(0.3, 2.0),
                             rng.uniform(1e-4, 0.1), rng.normal())
            data = Dataset(rng.random((n, d)), rng.normal(size=n),
                           np.zeros(n, int), np.ones(n, int))
            _, grad = mll_and_grad(data, p)
            v = p.as_vector()
            h = 1e-5
            for j in range(v.shape[0]):
                vp, vm = v.copy(), v.copy()
                vp[j] += h
                vm[j] -= h
                fd = (log_marginal_likelihood(data, KernelParams.from_vector(vp))
                      - log_marginal_likelihood(data, KernelParams.from_vector(vm))) / (2 * h)
                rel = abs(grad[j] - fd) / max(abs(fd), 1.0)
                worst = max(worst, rel)
        report("7a (MLL gradient)", worst < 1e-4, f"worst relative error {worst:.2e}")
        assert worst < 1e-4

    def test_rff_prior_covariance(self):
        p = KernelParams(np.array([0.4, 0.7]), 1.0, 1e-5, 0.0)
        x1 = np.array([0.2, 0.3])
        x2 = np.array([0.6, 0.8])
        rng = np.random.default_rng(11)
        v = np.empty((5000, 2))
        for i, st in enumerate(rng.spawn(5000)):
            v[i] = draw_prior_sample(p, 1024, st).evaluate(np.vstack([x1, x2]))
        cov = float(np.mean(v[:, 0] * v[:, 1]))
        err = abs(cov - kernel_eval(x1, x2, p))
        var_err = abs(float(np.mean(v[:, 0] ** 2)) - 1.0)
        report("7b (RFF covariance)", err < 0.05 and var_err < 0.05,
               f"cov err {err:.4f}, var err {var_err:.4f} (5000 draws, 1024 bases)")
        assert err < 0.05
        assert var_err < 0.05

    def test_pathwise_mean_matches_posterior(self):
        p = KernelParams(np.array([0.3]), 1.0, 1e-5, 0.0)
        X = np.linspace(0.1, 0.9, 7)[:, None]
        y = np.sin(6 * X[:, 0])
        post = fit_posterior(Dataset(X, y, np.zeros(7, int), np.ones(7, int)), p)
        xs = np.array([0.45])
        vals = np.empty(2000)
        for i, st in enumerate(np.random.default_rng(12).spawn(2000)):
            vals[i] = pathwise_update(draw_prior_sample(p, 1024, st), post, st).evaluate(xs[None])[0]
        mu, _ = post.predict(xs)
        se = vals.std() / math.sqrt(len(vals))
        gap = abs(vals.mean() - mu)
        report("7c (pathwise mean)", gap < 3 * se,
               f"|sample mean - posterior mean| = {gap:.2e}, 3 SE = {3 * se:.2e}")
        assert gap < 3 * se

    def test_point_deletion_contracts_500_cases(self):
        rng = np.random.default_rng(13)
        for _ in range(500):
            T = int(rng.integers(1, 40))
            t = int(rng.integers(0, T + 1))
            batch = Batch.of(rng.random((T, 2)))
            log = QueryLog()
            for i, q in enumerate(rng.random((t, 2))):
                log.add(q, i + 1)
            eps = float(rng.uniform(0, 0.5))
            out1 = point_deletion(batch, log, eps, np.random.default_rng(1))
            assert len(out1) == T - t
            if eps == 0.0:
                continue
            # removals triggered deterministically do not depend on the rng
            all_near = all(np.linalg.norm(batch.points - q, axis=1).min() < eps
                           for q in log.points)
            if all_near and t > 0:
                out2 = point_deletion(batch, log, eps, np.random.default_rng(99))
                assert np.array_equal(out1.points, out2.points)
        report("7d (deletion contracts)", True, "500 random cases")

    def test_cost_scale_invariance_full_run(self):
        cfg = SnakeConfig(budget=30, dim=2, delay=3, epsilon=0.1,
                          params=KernelParams(np.array([0.25, 0.25]), 1.0, 1e-5, 0.0),
                          bounds=None, f_star=0.0, seed=21)
        obj = lambda x: -float(np.sum((np.asarray(x) - 0.4) ** 2))
        base = CostModel()
        r1 = run_snake(obj, base, cfg, np.random.default_rng(21))
        r2 = run_snake(obj, base.scaled(7.3), cfg, np.random.default_rng(21))
        identical = np.array_equal(r1.queries, r2.queries)
        report("7e (cost-scale invariance)", identical,
               "query sequences bit-identical under cost x 7.3")
        assert identical
        assert np.allclose(r2.step_cost, 7.3 * r1.step_cost)

    def test_causality_under_async_delay(self):
        cfg = SnakeConfig(budget=40, dim=1, delay=25, epsilon=0.1,
                          params=KernelParams(np.array([0.2]), 0.5, 1e-5, 0.0),
                          bounds=None, f_star=1.0, seed=22)
        rec = run_snake(harness.bimodal_objective, CostModel(), cfg,
                        np.random.default_rng(22))
        ok = len(rec) == 40 and np.all(rec.arrival_iter == rec.submit_iter + 26)
        report("7f (async causality)", ok, "delay-25 run, in-loop causality asserts hold")
        assert ok

    def test_delay_past_budget_freezes_schedule(self):
        cost = CostModel()
        cfg = SnakeConfig(budget=20, dim=2, delay=25, epsilon=0.1,
                          params=KernelParams(np.array([0.3, 0.3]), 1.0, 1e-5, 0.0),
                          bounds=None, f_star=0.0, seed=23)
        obj = lambda x: -float(np.sum((np.asarray(x) - 0.6) ** 2))
        rec = run_snake(obj, cost, cfg, np.random.default_rng(23))
        _, _, path, _ = initial_schedule(cfg, cost, np.random.default_rng(23))
        ok = np.allclose(rec.queries, path.nodes)
        report("7g (delay >= budget)", ok, "executed sequence equals initial ordering")
        assert ok


def test_criterion_8_eipu_limit_recovers_ei_argmax():
    rng = np.random.default_rng(31)
    agree = 0
    for trial in range(20):
        X = rng.random((5, 2))
        y = rng.normal(size=5)
        p = KernelParams(rng.uniform(0.2, 0.5, 2), 1.0, 1e-4, 0.0)
        post = fit_posterior(Dataset(X, y, np.zeros(5, int), np.ones(5, int)), p)
        grid = rng.random((100, 2))
        x_prev = rng.random(2)
        y_best = float(y.max())
        ei_vals = [expected_improvement(post, g, y_best) for g in grid]
        eipu_vals = [eipu(post, g, x_prev, CostModel(), gamma=1e9) for g in grid]
        agree += int(np.argmax(ei_vals)) == int(np.argmax(eipu_vals))
    report("8 (EIpu limit)", agree == 20, f"argmax agreement {agree}/20")
    assert agree == 20


def test_criterion_9_response_cost_worked_examples():
    v0 = response_cost_dim(0.0, 5.0, 1.0, 1.0)
    v1 = response_cost_dim(0.25, 3.0, 0.25, 2.0)
    v2 = response_cost_dim(math.e, 5.0, 1.0, 1.0)
    ok = (abs(v0 - 0.0) <= 1e-12
          and abs(v1 - 2.0 * 0.25) <= 1e-12
          and abs(v2 - 6.0) <= 1e-12)
    report("9 (response cost)", ok, f"values {v0}, {v1}, {v2}")
    assert ok
