import math

import numpy as np
import pytest
from scipy.stats import norm

from snakebo.baselines import (AcquisitionConfig, STRATEGIES, eipu, estimate_lipschitz,
                               expected_improvement, local_penalize,
                               probability_of_improvement, run_baseline, truncate_step,
                               truncated_ei_step, ucb)
from snakebo.costs import CostModel
from snakebo.snake import SnakeConfig
from snakebo.surrogate import Dataset, HyperparamBounds, KernelParams, fit_posterior

FAST_ACQ = AcquisitionConfig(multistarts=300, epochs=40, lr=1e-3)


def dataset(X, y):
    n = len(y)
    return Dataset(X, y, np.zeros(n, dtype=int), np.ones(n, dtype=int))


def prior_post(mean=0.0, outputscale=1.0, d=1):
    p = KernelParams(np.full(d, 0.3), outputscale, 1e-5, mean)
    return fit_posterior(Dataset.empty(d), p)


def small_posterior(seed=0, n=5, d=1):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    y = np.sin(5 * X[:, 0])
    p = KernelParams(np.full(d, 0.25), 1.0, 1e-4, 0.0)
    return fit_posterior(dataset(X, y), p)


def quick_config(**kw):
    d = kw.pop("dim", 1)
    base = dict(
        budget=5, dim=d, delay=0,
        params=KernelParams(np.full(d, 0.25), 1.0, 1e-4, 0.0),
        bounds=HyperparamBounds(np.full(d, 0.1), np.full(d, 0.5), 0.5, 2.0,
                                1e-5, np.inf, -1.0, 1.0),
        f_star=1.0, seed=0)
    base.update(kw)
    return SnakeConfig(**base)


class TestExpectedImprovement:
    def test_no_variance_no_improvement(self):
        post = small_posterior()
        # far extrapolation keeps variance positive, so craft the degenerate
        # case through the closed form instead: mu below y_best, sigma -> 0
        p = KernelParams(np.array([0.25]), 1.0, 0.0, 0.0)
        post0 = fit_posterior(dataset(np.array([[0.5]]), np.array([0.3])), p)
        assert expected_improvement(post0, np.array([0.5]), y_best=0.9) == 0.0

    def test_at_incumbent_with_unit_sigma(self):
        post = prior_post(mean=0.2, outputscale=1.0)
        v = expected_improvement(post, np.array([0.4]), y_best=0.2)
        assert v == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)

    def test_monte_carlo_oracle(self):
        post = small_posterior(seed=3)
        x = np.array([0.37])
        mu, var = post.predict(x)
        draws = np.random.default_rng(0).normal(mu, math.sqrt(var), 1_000_000)
        y_best = 0.4
        mc = np.maximum(draws - y_best, 0.0).mean()
        assert expected_improvement(post, x, y_best) == pytest.approx(mc, abs=1e-3)

    def test_nonnegative_everywhere(self):
        post = small_posterior(seed=4)
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert expected_improvement(post, rng.random(1), 0.5) >= 0.0


class TestEipu:
    def test_self_move_divides_by_gamma(self):
        post = small_posterior()
        x = np.array([0.3])
        ei = expected_improvement(post, x, post.data.outputs.max())
        assert eipu(post, x, x, CostModel(), gamma=2.0) == pytest.approx(ei / 2.0)

    def test_zero_ei_gives_zero(self):
        p = KernelParams(np.array([0.25]), 1.0, 0.0, 0.0)
        post0 = fit_posterior(dataset(np.array([[0.5]]), np.array([-1.0])), p)
        assert eipu(post0, np.array([0.5]), np.array([0.1]), CostModel(), 1.0) == 0.0

    def test_huge_gamma_recovers_ei_argmax_on_grid(self):
        rng = np.random.default_rng(5)
        post = small_posterior(seed=5)
        grid = rng.random((100, 1))
        x_prev = rng.random(1)
        y_best = float(post.data.outputs.max())
        ei_vals = [expected_improvement(post, g, y_best) for g in grid]
        eipu_vals = [eipu(post, g, x_prev, CostModel(), gamma=1e9) for g in grid]
        assert int(np.argmax(ei_vals)) == int(np.argmax(eipu_vals))

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            eipu(small_posterior(), np.array([0.1]), np.array([0.2]), CostModel(), 0.0)


class TestUcb:
    def test_hand_value_at_t1(self):
        post = prior_post(mean=0.0, outputscale=1.0)
        assert ucb(post, np.array([0.5]), t=1, d=1) == pytest.approx(0.2 * math.log(2.0))

    def test_zero_sigma_returns_mean(self):
        p = KernelParams(np.array([0.25]), 1.0, 0.0, 0.0)
        post0 = fit_posterior(dataset(np.array([[0.5]]), np.array([0.7])), p)
        assert ucb(post0, np.array([0.5]), t=3, d=2) == pytest.approx(0.7, abs=1e-7)

    def test_nondecreasing_in_t(self):
        post = prior_post()
        vals = [ucb(post, np.array([0.5]), t=t, d=2) for t in range(1, 10)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_t_must_be_positive(self):
        with pytest.raises(ValueError):
            ucb(prior_post(), np.array([0.5]), t=0, d=1)


class TestProbabilityOfImprovement:
    def test_half_at_incumbent(self):
        post = prior_post(mean=0.3)
        assert probability_of_improvement(post, np.array([0.2]), 0.3) == pytest.approx(0.5)

    def test_1p96_sigma(self):
        post = prior_post(mean=0.0, outputscale=1.0)
        v = probability_of_improvement(post, np.array([0.2]), -1.96)
        assert v == pytest.approx(norm.cdf(1.96), abs=1e-9)

    def test_bounded_in_unit_interval(self):
        post = small_posterior(seed=6)
        rng = np.random.default_rng(2)
        for _ in range(100):
            v = probability_of_improvement(post, rng.random(1), float(rng.normal()))
            assert 0.0 <= v <= 1.0

    def test_argmax_invariant_to_output_scaling(self):
        # with a zero prior mean, scaling y scales the posterior mean linearly
        rng = np.random.default_rng(7)
        X = rng.random((6, 1))
        y = np.sin(4 * X[:, 0])
        p = KernelParams(np.array([0.25]), 1.0, 1e-4, 0.0)
        grid = rng.random((60, 1))
        c = 3.7
        post1 = fit_posterior(dataset(X, y), p)
        post2 = fit_posterior(dataset(X, c * y), p)
        yb = float(y.max())
        v1 = [probability_of_improvement(post1, g, yb) for g in grid]
        v2 = [probability_of_improvement(post2, g, c * yb) for g in grid]
        assert int(np.argmax(v1)) == int(np.argmax(v2))


class TestTruncation:
    def test_no_truncation_when_close(self):
        out = truncate_step(np.array([0.2, 0.2]), np.array([0.3, 0.2]), 0.5)
        assert np.allclose(out, [0.3, 0.2])

    def test_hand_truncation(self):
        out = truncate_step(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 0.3)
        assert np.allclose(out, [0.3, 0.0])

    def test_zero_step_stays_put(self):
        x = np.array([0.4, 0.6])
        assert np.allclose(truncate_step(x, x, 0.3), x)

    def test_step_never_exceeds_lengthscale(self):
        post = small_posterior(seed=8)
        rng = np.random.default_rng(3)
        for _ in range(3):
            x_t = rng.random(1)
            out = truncated_ei_step(post, x_t, 0.15, FAST_ACQ, np.random.default_rng(0))
            assert np.linalg.norm(out - x_t) <= 0.15 + 1e-9

    def test_requires_positive_lengthscale(self):
        with pytest.raises(ValueError):
            truncated_ei_step(small_posterior(), np.array([0.5]), 0.0, FAST_ACQ,
                              np.random.default_rng(0))


class TestLipschitz:
    def test_prior_mean_is_flat(self):
        assert estimate_lipschitz(prior_post(d=2), 2) == 0.0

    def test_single_point_posterior_analytic_maximum(self):
        # max gradient of the 1-point posterior mean is |alpha| theta0 e^{-1/2} / l
        ell, theta = 0.3, 1.0
        p = KernelParams(np.array([ell]), theta, 0.1, 0.0)
        y0 = 0.8
        post = fit_posterior(dataset(np.array([[0.5]]), np.array([y0])), p)
        alpha = y0 / (theta + 0.1)
        want = abs(alpha) * theta * math.exp(-0.5) / ell
        got = estimate_lipschitz(post, 1)
        assert got == pytest.approx(want, rel=0.10)

    def test_nonnegative(self):
        assert estimate_lipschitz(small_posterior(seed=9), 1) >= 0.0


class TestLocalPenalize:
    def test_empty_busy_passes_through(self):
        assert local_penalize(3.3, np.array([0.5]), [], prior_post(), 1.0, 0.0) == 3.3

    def test_at_busy_point_with_low_mean_reduces_value(self):
        post = small_posterior(seed=10)
        busy = [np.array([0.45])]
        mu_b, _ = post.predict(busy[0])
        M = mu_b + 5.0  # busy point mean far below the incumbent
        raw = 1.2
        softplus = math.log1p(math.exp(raw))
        penalized = local_penalize(raw, busy[0], busy, post, L=1.0, M=M)
        assert penalized < 0.5 * softplus

    def test_penalizer_bounded_by_softplus(self):
        post = small_posterior(seed=11)
        rng = np.random.default_rng(4)
        for _ in range(50):
            raw = float(rng.normal())
            x = rng.random(1)
            busy = [rng.random(1)]
            softplus = math.log1p(math.exp(-abs(raw))) + max(raw, 0.0)
            v = local_penalize(raw, x, busy, post, L=2.0, M=0.5)
            assert 0.0 < v <= softplus + 1e-12


class TestRunBaseline:
    def test_unknown_strategy_rejected(self):
        with pytest.raises(ValueError):
            run_baseline("nope", lambda x: 0.0, CostModel(), quick_config())

    def test_all_strategies_record_exact_budget(self):
        obj = lambda x: -(float(np.atleast_1d(x)[0]) - 0.6) ** 2
        for strategy in STRATEGIES:
            rec = run_baseline(strategy, obj, CostModel(), quick_config(),
                               FAST_ACQ, np.random.default_rng(1))
            assert len(rec) == 5, strategy
            assert np.all(np.diff(rec.cum_cost) >= -1e-12), strategy

    def test_random_tsp_ignores_delay(self):
        obj = lambda x: float(np.atleast_1d(x)[0])
        r0 = run_baseline("RandomTSP", obj, CostModel(), quick_config(delay=0),
                          FAST_ACQ, np.random.default_rng(2))
        r7 = run_baseline("RandomTSP", obj, CostModel(), quick_config(delay=7),
                          FAST_ACQ, np.random.default_rng(2))
        assert np.array_equal(r0.queries, r7.queries)

    def test_ei_single_query_budget(self):
        obj = lambda x: float(np.atleast_1d(x)[0])
        rec = run_baseline("EI", obj, CostModel(), quick_config(budget=1),
                           FAST_ACQ, np.random.default_rng(3))
        assert len(rec) == 1
        assert 0.0 <= rec.queries[0, 0] <= 1.0

    def test_async_local_penalization_avoids_pending_duplicates(self):
        obj = lambda x: -(float(np.atleast_1d(x)[0]) - 0.5) ** 2
        rec = run_baseline("UCBwLP", obj, CostModel(), quick_config(budget=6, delay=5),
                           FAST_ACQ, np.random.default_rng(4))
        # no observation ever arrives, so only penalization separates queries
        gaps = np.abs(np.diff(rec.queries[:, 0]))
        assert np.all(gaps > 1e-3)
