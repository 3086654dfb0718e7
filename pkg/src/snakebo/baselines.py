"""Classical and asynchronous Bayesian optimization baselines.

Sequential strategies (EI, EIpu, UCB, PI, TrEI) maximize their acquisition
by multistart adaptive-moment ascent; RandomTSP orders a fixed Sobol design
once and never replans; the asynchronous strategies either penalize around
in-flight queries (UCBwLP, EIpuLP) or draw one pathwise Thompson maximizer
per iteration (asyncTS).  All strategies produce the same RunRecord schema
as the path-based optimizer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr

from ._optim import adam_ascent, polish_batch
from .costs import CostModel, _response_cost_dim_vec
from .planner import dequeue_query, solve_tsp
from .records import RunRecord, RunRecorder
from .snake import QueryLog, SnakeConfig
from .surrogate import Dataset, Posterior, calibrate_bounds, fit_posterior
from .surrogate import train_hyperparams as _train_hyperparams
from .thompson import create_batch

STRATEGIES = ("EI", "EIpu", "UCB", "PI", "TrEI", "RandomTSP", "asyncTS", "UCBwLP", "EIpuLP")

_SQRT2PI = math.sqrt(2.0 * math.pi)
_SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class AcquisitionConfig:
    """Multistart ascent settings for acquisition maximization."""

    multistarts: int = 7500
    epochs: int = 150
    lr: float = 1e-4
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.multistarts < 1 or self.epochs < 1 or self.lr <= 0 or self.gamma <= 0:
            raise ValueError("acquisition settings must be positive")


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _ei_parts(mu: np.ndarray, var: np.ndarray, y_best: float):
    sigma = np.sqrt(var)
    degenerate = sigma <= _SIGMA_FLOOR
    safe = np.where(degenerate, 1.0, sigma)
    z = (mu - y_best) / safe
    ei = np.where(degenerate, np.maximum(mu - y_best, 0.0),
                  safe * (z * ndtr(z) + _phi(z)))
    return ei, sigma, z, degenerate


def expected_improvement(post: Posterior, x: np.ndarray, y_best: float) -> float:
    """Closed-form EI; collapses to max(mu - y_best, 0) when sigma vanishes."""
    mu, var = post.predict(np.asarray(x, dtype=float))
    ei, _, _, _ = _ei_parts(np.array([mu]), np.array([var]), y_best)
    return float(ei[0])


def eipu(post: Posterior, x: np.ndarray, x_prev: np.ndarray, cost: CostModel,
         gamma: float) -> float:
    """Expected improvement per unit input-change cost."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    y_best = _default_y_best(post)
    return expected_improvement(post, x, y_best) / (gamma + cost(x_prev, x))


def ucb(post: Posterior, x: np.ndarray, t: int, d: int) -> float:
    """mu + 0.2 d log(2t) sigma."""
    if t < 1:
        raise ValueError("iteration index starts at 1")
    mu, var = post.predict(np.asarray(x, dtype=float))
    return float(mu + 0.2 * d * math.log(2.0 * t) * math.sqrt(var))


def probability_of_improvement(post: Posterior, x: np.ndarray, y_best: float) -> float:
    mu, var = post.predict(np.asarray(x, dtype=float))
    sigma = math.sqrt(var)
    if sigma <= _SIGMA_FLOOR:
        return 1.0 if mu >= y_best else 0.0
    return float(ndtr((mu - y_best) / sigma))


def estimate_lipschitz(post: Posterior, d: int) -> float:
    """Largest posterior-mean gradient norm over a Sobol grid of 50d points."""
    from .planner import sobol_grid

    X = sobol_grid(50 * d, d)
    _, _, dmu, _ = post.predict_with_grad(X)
    return float(np.linalg.norm(dmu, axis=1).max())


def local_penalize(acq_value: float, x: np.ndarray, busy: Sequence[np.ndarray],
                   post: Posterior, L: float, M: float) -> float:
    """Suppress the acquisition near in-flight queries.

    With no busy points the value passes through unchanged; otherwise the
    soft-plus of the acquisition is multiplied by one Gaussian-CDF factor per
    busy point, each in (0, 1].
    """
    if len(busy) == 0:
        return float(acq_value)
    value = math.log1p(math.exp(-abs(acq_value))) + max(acq_value, 0.0)  # softplus
    x = np.asarray(x, dtype=float)
    for xj in busy:
        xj = np.asarray(xj, dtype=float)
        mu_j, var_j = post.predict(xj)
        denom = math.sqrt(2.0 * max(var_j, _SIGMA_FLOOR ** 2))
        z = (L * float(np.linalg.norm(x - xj)) - M + mu_j) / denom
        value *= float(ndtr(z))
    return value


def _default_y_best(post: Posterior) -> float:
    if post.n_train == 0:
        return post.params.mean
    return float(post.data.outputs.max())


# --- batched acquisition engines ----------------------------------------------


class _FastPosterior:
    """Batched (mean, var, gradients) tuned for acquisition ascent.

    Same math as Posterior.predict_with_grad but with GEMM-shaped distance
    computations, in-place buffers and a cached solve of the noisy kernel
    matrix.  Stays in double precision: the whitened solves amplify rounding
    by the kernel condition number (outputscale over the noise floor), which
    single precision cannot absorb.
    """

    def __init__(self, post: Posterior) -> None:
        p = post.params
        self.mean = float(p.mean)
        self.outputscale = float(p.outputscale)
        self.inv_l2 = 1.0 / p.lengthscales ** 2
        self.prior_only = post.chol is None
        self.d = p.dim
        if not self.prior_only:
            sl = 1.0 / p.lengthscales
            self.Xt = post.data.inputs
            self.Ts = self.Xt * sl
            self.ts_sq = np.sum(self.Ts * self.Ts, axis=1)
            self.sl = sl
            self.alpha = post.alpha
            self.kinv = post._kinv()

    def predict_with_grad(self, X: np.ndarray):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n = X.shape[0]
        if self.prior_only:
            return (np.full(n, self.mean),
                    np.full(n, self.outputscale),
                    np.zeros_like(X), np.zeros_like(X))
        Xs = X * self.sl
        d2 = Xs @ self.Ts.T
        d2 *= -2.0
        d2 += np.sum(Xs * Xs, axis=1)[:, None]
        d2 += self.ts_sq
        np.maximum(d2, 0.0, out=d2)
        d2 *= -0.5
        k = np.exp(d2, out=d2)
        k *= self.outputscale
        mu = k @ self.alpha
        mu += self.mean
        C = k @ self.kinv
        var = self.outputscale - np.einsum("ij,ij->i", C, k)
        np.maximum(var, 0.0, out=var)
        ka = k * self.alpha
        dmu = (ka @ self.Xt - X * ka.sum(axis=1)[:, None]) * self.inv_l2
        C *= k
        dvar = -2.0 * (C @ self.Xt - X * C.sum(axis=1)[:, None]) * self.inv_l2
        return mu, var, dmu, dvar


def _cost_value_grad(cost: CostModel, x_prev: np.ndarray, X: np.ndarray):
    """Move cost from x_prev to each row of X, with gradient in x."""
    n, d = X.shape
    if cost.variant == "euclidean":
        scale = np.ones(d) if cost.scale is None else np.asarray(cost.scale, dtype=float)
        diff = (X - x_prev) * scale
        c = np.linalg.norm(diff, axis=1)
        g = np.zeros_like(X)
        nz = c > 0
        g[nz] = diff[nz] * scale / c[nz, None]
        return cost.multiplier * c, cost.multiplier * g
    rp = cost.response
    lo = np.zeros(d) if cost.lower is None else np.asarray(cost.lower, dtype=float)
    hi = np.ones(d) if cost.upper is None else np.asarray(cost.upper, dtype=float)
    width = hi - lo
    per_dim = np.zeros((n, len(rp.control_dims)))
    per_grad = np.zeros((n, len(rp.control_dims)))
    for k, dim in enumerate(rp.control_dims):
        delta = (X[:, dim] - x_prev[dim]) * width[dim]
        per_dim[:, k] = _response_cost_dim_vec(delta, rp.alpha[k], rp.beta[k], rp.gamma[k])
        mag = np.abs(delta)
        slope = np.where(mag < rp.beta[k], rp.gamma[k],
                         np.where(mag > 0, rp.alpha[k] / np.where(mag > 0, mag, 1.0), 0.0))
        per_grad[:, k] = np.sign(delta) * slope * width[dim]
    winner = np.argmax(per_dim, axis=1)
    c = per_dim[np.arange(n), winner]
    g = np.zeros_like(X)
    for k, dim in enumerate(rp.control_dims):
        sel = winner == k
        g[sel, dim] = per_grad[sel, k]
    return cost.multiplier * c, cost.multiplier * g


def _make_acquisition_vg(strategy: str, post: Posterior, y_best: float, t: int, d: int,
                         x_prev: np.ndarray, cost: CostModel, gamma: float,
                         busy: Sequence[np.ndarray], lipschitz: float):
    """Batched value-and-gradient callback for the requested acquisition."""
    fast = _FastPosterior(post)
    if busy:
        busy_arr = np.stack([np.asarray(b, dtype=float) for b in busy])
        mu_b, var_b = post.predict_batch(busy_arr)
        denom_b = np.sqrt(2.0 * np.maximum(var_b, _SIGMA_FLOOR ** 2))

    def base(X: np.ndarray):
        mu, var, dmu, dvar = fast.predict_with_grad(X)
        sigma = np.sqrt(var)
        safe = np.where(sigma <= _SIGMA_FLOOR, 1.0, sigma)
        dsigma = dvar / (2.0 * safe[:, None])
        if strategy in ("EI", "EIpu", "EIpuLP", "TrEI"):
            z = (mu - y_best) / safe
            val = safe * (z * ndtr(z) + _phi(z))
            grad = ndtr(z)[:, None] * dmu + _phi(z)[:, None] * dsigma
            flat = sigma <= _SIGMA_FLOOR
            if np.any(flat):
                val = np.where(flat, np.maximum(mu - y_best, 0.0), val)
                grad[flat] = np.where((mu[flat] > y_best)[:, None], dmu[flat], 0.0)
        elif strategy in ("UCB", "UCBwLP"):
            beta = 0.2 * d * math.log(2.0 * t)
            val = mu + beta * sigma
            grad = dmu + beta * dsigma
        elif strategy == "PI":
            z = (mu - y_best) / safe
            val = ndtr(z)
            grad = _phi(z)[:, None] * (dmu - z[:, None] * dsigma) / safe[:, None]
        else:
            raise ValueError(f"no base acquisition for strategy {strategy!r}")
        return val, grad

    def with_cost(X: np.ndarray):
        val, grad = base(X)
        c, dc = _cost_value_grad(cost, x_prev, X)
        denom = gamma + c
        return val / denom, grad / denom[:, None] - (val / denom ** 2)[:, None] * dc

    def penalized(X: np.ndarray):
        if strategy == "EIpuLP":
            val, grad = with_cost(X)
        else:
            val, grad = base(X)
        # log-space product: log softplus(acq) + sum log Phi(z_j)
        sp = np.logaddexp(0.0, val)
        logv = np.log(np.maximum(sp, 1e-300))
        dlogv = (1.0 / (1.0 + np.exp(-val)))[:, None] * grad / sp[:, None]
        for j in range(busy_arr.shape[0]):
            diff = X - busy_arr[j]
            dist = np.linalg.norm(diff, axis=1)
            z = (lipschitz * dist - y_best + mu_b[j]) / denom_b[j]
            logv += log_ndtr(z)
            ratio = _phi(z) / np.maximum(ndtr(z), 1e-300)
            nz = dist > 0
            dz = np.zeros_like(X)
            dz[nz] = lipschitz * diff[nz] / dist[nz, None] / denom_b[j]
            dlogv += ratio[:, None] * dz
        return logv, dlogv

    if strategy in ("UCBwLP", "EIpuLP") and busy:
        return penalized
    if strategy in ("EIpu", "EIpuLP"):
        return with_cost
    return base


def maximize_acquisition(vg, d: int, acq_cfg: AcquisitionConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """Best of multistart ascent runs, then a deterministic polish."""
    starts = rng.random((acq_cfg.multistarts, d))
    best_x, best_f = adam_ascent(vg, starts, epochs=acq_cfg.epochs, lr=acq_cfg.lr)
    top = int(np.argmax(best_f))
    x, _ = polish_batch(vg, best_x[top][None, :])
    return np.clip(x[0], 0.0, 1.0)


def truncate_step(x_t: np.ndarray, p_t: np.ndarray, lengthscale: float) -> np.ndarray:
    """Move from x_t toward p_t, covering at most one lengthscale."""
    x_t = np.asarray(x_t, dtype=float)
    step = np.asarray(p_t, dtype=float) - x_t
    dist = float(np.linalg.norm(step))
    if dist == 0.0:
        return x_t
    return x_t + step / dist * min(lengthscale, dist)


def truncated_ei_step(post: Posterior, x_t: np.ndarray, lengthscale: float,
                      acq_cfg: AcquisitionConfig, rng: np.random.Generator,
                      project: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """Walk from x_t toward the EI maximizer, at most one lengthscale."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    x_t = np.asarray(x_t, dtype=float)
    y_best = _default_y_best(post)
    vg = _make_acquisition_vg("EI", post, y_best, 1, x_t.shape[0], x_t, None, 1.0, (), 0.0)
    p_t = maximize_acquisition(vg, x_t.shape[0], acq_cfg, rng)
    x_new = truncate_step(x_t, p_t, lengthscale)
    if project is not None:
        x_new = project(x_new)
    return np.clip(x_new, 0.0, 1.0)


def run_baseline(strategy: str, objective: Callable[[np.ndarray], float], cost: CostModel,
                 config: SnakeConfig, acq_cfg: Optional[AcquisitionConfig] = None,
                 rng: Optional[np.random.Generator] = None,
                 project: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> RunRecord:
    """Run one baseline strategy under the same budget/delay regime as the
    path-based optimizer and return the identical RunRecord schema."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if acq_cfg is None:
        acq_cfg = AcquisitionConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)

    T, d = config.budget, config.dim
    if config.params is not None:
        params, bounds = config.params, config.bounds
    else:
        calib = rng.spawn(1)[0]
        params, bounds = calibrate_bounds(objective, T, d, calib.spawn(1)[0])

    start_stream, design_stream, noise_stream, loop_stream = rng.spawn(4)
    x0 = np.asarray(config.x0, dtype=float) if config.x0 is not None else start_stream.random(d)

    fixed_path = None
    if strategy == "RandomTSP":
        import warnings

        from scipy.stats import qmc

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # Sobol balance warning off powers of 2
            design = qmc.Sobol(d=d, scramble=True, seed=design_stream).random(T)
        fixed_path = solve_tsp(design, x0, cost, loop_stream.spawn(1)[0])

    data = Dataset.empty(d)
    log = QueryLog()
    recorder = RunRecorder(config.f_star, meta=dict(config.meta))
    pending: list[tuple[np.ndarray, int, float, float]] = []
    x_prev = x0
    n_arrived = 0
    last_train = 0
    post = fit_posterior(data, params)

    for t in range(1, T + 1):
        arrived_now = [p for p in pending if p[1] + config.delay + 1 <= t]
        if arrived_now:
            pending = [p for p in pending if p[1] + config.delay + 1 > t]
            for x_q, submit, _, y_obs in arrived_now:
                data = data.append(x_q, y_obs, submit, submit + config.delay + 1)
                n_arrived += 1
            if n_arrived - last_train >= config.retrain_every and bounds is not None:
                params = _train_hyperparams(data, params, bounds)
                last_train = n_arrived
            post = fit_posterior(data, params)

        step_rng = loop_stream.spawn(1)[0]
        if strategy == "RandomTSP":
            x_t = dequeue_query(fixed_path)
        elif strategy == "asyncTS":
            x_t = create_batch(post, 1, config.n_fourier, step_rng).points[0]
        elif strategy == "TrEI":
            ell = float(np.min(params.lengthscales))
            x_t = truncated_ei_step(post, x_prev, ell, acq_cfg, step_rng, project)
        else:
            y_best = _default_y_best(post)
            busy = log.pending(t, config.delay) if strategy in ("UCBwLP", "EIpuLP") else ()
            lip = estimate_lipschitz(post, d) if busy else 0.0
            vg = _make_acquisition_vg(strategy, post, y_best, t, d, x_prev, cost,
                                      acq_cfg.gamma, busy, lip)
            x_t = maximize_acquisition(vg, d, acq_cfg, step_rng)

        step_cost = cost(x_prev, x_t)
        y_true = float(objective(x_t))
        y_obs = y_true + config.noise_std * noise_stream.normal() if config.noise_std > 0 else y_true
        pending.append((x_t, t, y_true, y_obs))
        log.add(x_t, t)
        recorder.add(x_t, y_true, y_obs, t, t + config.delay + 1, step_cost)
        x_prev = x_t

    record = recorder.build()
    record.meta.setdefault("strategy", strategy)
    record.meta.setdefault("x0", x0)
    record.validate()
    return record
