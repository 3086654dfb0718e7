import math

import numpy as np
import pytest

from snakebo.costs import (CostModel, ResponseParams, euclidean_cost,
                           response_cost, response_cost_dim, snar_cost_model)


def test_euclidean_zero_for_identical_points():
    x = np.array([0.3, 0.7])
    assert euclidean_cost(x, x) == 0.0


def test_euclidean_three_four_five():
    assert euclidean_cost(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_euclidean_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.random(3), rng.random(3)
        assert euclidean_cost(a, b) == pytest.approx(euclidean_cost(b, a))


def test_euclidean_scale_factors():
    c = euclidean_cost(np.array([0.0, 0.0]), np.array([1.0, 1.0]), scale=np.array([3.0, 4.0]))
    assert c == pytest.approx(5.0)


def test_euclidean_dimension_mismatch():
    with pytest.raises(ValueError):
        euclidean_cost(np.zeros(2), np.zeros(3))


def test_response_dim_zero_move():
    assert response_cost_dim(0.0, 5.0, 1.0, 1.0) == 0.0


def test_response_dim_quasi_steady_boundary():
    # at exactly |delta| = beta the log term vanishes
    assert response_cost_dim(0.25, 3.0, 0.25, 2.0) == pytest.approx(2.0 * 0.25, abs=1e-15)


def test_response_dim_worked_example():
    # gamma*min(beta,|d|) + alpha*log(|d|/beta) with delta = e
    assert response_cost_dim(math.e, 5.0, 1.0, 1.0) == pytest.approx(6.0, abs=1e-12)


def test_response_dim_monotone_in_magnitude():
    deltas = np.linspace(0.0, 4.0, 200)
    costs = [response_cost_dim(d, 2.0, 0.4, 1.5) for d in deltas]
    assert all(b >= a - 1e-12 for a, b in zip(costs, costs[1:]))
    # sign of the move does not matter
    assert response_cost_dim(-1.3, 2.0, 0.4, 1.5) == pytest.approx(response_cost_dim(1.3, 2.0, 0.4, 1.5))


def test_response_cost_ignores_free_dimensions():
    params = ResponseParams(control_dims=(0,), alpha=(5.0,), beta=(1.0,), gamma=(1.0,))
    x1 = np.array([0.5, 0.1])
    x2 = np.array([0.5, 0.9])
    assert response_cost(x1, x2, params) == 0.0


def test_response_cost_max_rule():
    params = ResponseParams(control_dims=(0, 1), alpha=(1.0, 1.0), beta=(1.0, 1.0),
                            gamma=(2.0, 6.0))
    # per-dim costs 2.0 and 6.0 for unit steps inside the linear regime
    x1 = np.zeros(2)
    x2 = np.ones(2)
    assert response_cost(x1, x2, params) == pytest.approx(6.0)


def test_snar_unit_temperature_step():
    # unit step in native temperature units: gamma*min(beta, 1) = 1, log term zero
    model = snar_cost_model()
    x1 = np.zeros(4)
    x2 = np.array([1.0 / 80.0, 0.0, 0.0, 0.0])  # 1 K on the 40..120 K range
    assert model(x1, x2) == pytest.approx(1.0, abs=1e-12)
    # pyrrolidine equivalents are free
    assert model(np.zeros(4), np.array([0.0, 0.0, 0.0, 1.0])) == 0.0


def test_cost_is_zero_on_diagonal_for_both_variants():
    rng = np.random.default_rng(1)
    euc = CostModel()
    snar = snar_cost_model()
    for _ in range(1000):
        x = rng.random(4)
        assert euc(x, x) == 0.0
        assert snar(x, x) == 0.0


def test_euclidean_triangle_inequality():
    rng = np.random.default_rng(2)
    model = CostModel()
    for _ in range(200):
        a, b, c = rng.random((3, 3))
        assert model(a, c) <= model(a, b) + model(b, c) + 1e-12


def test_pairwise_matches_scalar_calls():
    rng = np.random.default_rng(3)
    pts = rng.random((6, 4))
    for model in (CostModel(), snar_cost_model()):
        W = model.pairwise(pts)
        assert np.allclose(np.diag(W), 0.0)
        for i in range(6):
            for j in range(6):
                assert W[i, j] == pytest.approx(model(pts[i], pts[j]), abs=1e-12)


def test_scaled_model_multiplies_costs():
    model = CostModel().scaled(7.3)
    assert model(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(5.0 * 7.3)


def test_response_params_validation():
    with pytest.raises(ValueError):
        ResponseParams(control_dims=(0,), alpha=(0.0,), beta=(1.0,), gamma=(1.0,))
    with pytest.raises(ValueError):
        ResponseParams(control_dims=(0, 1), alpha=(1.0,), beta=(1.0,), gamma=(1.0,))
