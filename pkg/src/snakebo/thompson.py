"""Decoupled pathwise Thompson sampling.

A posterior function sample is a random Fourier feature draw from the GP
prior plus a kernel-basis correction fitted to the (noisy) training data:

    f(x) = mean + amp * sum_j w_j cos(omega_j . x + b_j) + k(x, X) v

with v = (K + noise I)^{-1} (y - prior(X) - eta), eta ~ N(0, noise I).
Each batch point is the box-constrained maximizer of one independent sample,
found by multistart adaptive-moment ascent plus a short deterministic polish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve

from ._optim import adam_ascent, polish_batch
from .surrogate import KernelParams, Posterior, kernel_matrix

# Multistart refinement runs in float32: the polish stage restores full
# precision and the trig-heavy inner loop is twice as fast.
_FAST_DTYPE = np.float32


@dataclass(frozen=True)
class FourierSample:
    """A draw from the GP prior in random Fourier feature form."""

    frequencies: np.ndarray  # (F, d), rows ~ N(0, diag(1/l_i^2))
    phases: np.ndarray       # (F,), uniform on [0, 2*pi)
    weights: np.ndarray      # (F,), standard normal
    amplitude: float         # sqrt(2 * outputscale / F)
    mean: float

    @property
    def n_bases(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        proj = X @ self.frequencies.T + self.phases
        return self.mean + self.amplitude * (np.cos(proj) @ self.weights)

    def gradient(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        proj = X @ self.frequencies.T + self.phases
        return -self.amplitude * ((np.sin(proj) * self.weights) @ self.frequencies)


@dataclass(frozen=True)
class PathwiseSample:
    """Prior feature sample plus data-driven pathwise correction."""

    prior: FourierSample
    posterior: Posterior
    v: Optional[np.ndarray]  # (n_train,) update coefficients, None if no data

    @property
    def dim(self) -> int:
        return self.prior.dim

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        out = self.prior.evaluate(X)
        if self.v is not None:
            k = kernel_matrix(np.atleast_2d(X), self.posterior.data.inputs, self.posterior.params)
            out = out + k @ self.v
        return out

    def gradient(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g = self.prior.gradient(X)
        if self.v is not None:
            p = self.posterior.params
            Xt = self.posterior.data.inputs
            k = kernel_matrix(X, Xt, p)
            kv = k * self.v
            g = g + (kv @ Xt - X * kv.sum(axis=1)[:, None]) / (p.lengthscales ** 2)
        return g


@dataclass(frozen=True)
class Batch:
    """Unordered candidate query set; provenance tags the source objective."""

    points: np.ndarray      # (m, d) inside the unit box
    provenance: np.ndarray  # (m,) objective index per point

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        prov = np.asarray(self.provenance, dtype=int)
        object.__setattr__(self, "provenance", prov)
        if prov.shape[0] != pts.shape[0]:
            raise ValueError("provenance must tag every point")
        if pts.size and (pts.min() < -1e-12 or pts.max() > 1 + 1e-12):
            raise ValueError("batch points must lie inside the unit box")

    @staticmethod
    def of(points: np.ndarray, objective_index: int = 0) -> "Batch":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return Batch(pts, np.full(pts.shape[0], objective_index, dtype=int))

    def __len__(self) -> int:
        return self.points.shape[0]


def draw_prior_sample(params: KernelParams, F: int, rng: np.random.Generator) -> FourierSample:
    """Sample RFF frequencies/phases/weights for one prior function draw."""
    if F < 1:
        raise ValueError("need at least one Fourier basis")
    freqs = rng.standard_normal((F, params.dim)) / params.lengthscales
    phases = rng.uniform(0.0, 2.0 * math.pi, F)
    weights = rng.standard_normal(F)
    amp = math.sqrt(2.0 * params.outputscale / F)
    return FourierSample(frequencies=freqs, phases=phases, weights=weights,
                         amplitude=amp, mean=params.mean)


def pathwise_update(prior: FourierSample, post: Posterior,
                    rng: np.random.Generator) -> PathwiseSample:
    """Attach the kernel-basis correction that interpolates the data."""
    if post.chol is None:
        return PathwiseSample(prior=prior, posterior=post, v=None)
    data = post.data
    eta = rng.normal(0.0, math.sqrt(post.params.noise_var), len(data))
    resid = data.outputs - prior.evaluate(data.inputs) - eta
    v = cho_solve((post.chol, True), resid)
    return PathwiseSample(prior=prior, posterior=post, v=v)


def _sample_vg(sample) -> "callable":
    def vg(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return sample.evaluate(X), sample.gradient(X)
    return vg


def optimize_sample(sample, d: int, rng: np.random.Generator,
                    n_starts: Optional[int] = None,
                    epochs: Optional[int] = None, lr: float = 0.01) -> np.ndarray:
    """Maximize one function sample over the unit box.

    10d uniform multistarts, 10d adaptive-moment epochs at lr 0.01, every
    iterate clamped into the box; the best point is then polished with a
    short deterministic line-searched ascent.
    """
    n_starts = 10 * d if n_starts is None else n_starts
    epochs = 10 * d if epochs is None else epochs
    starts = rng.random((n_starts, d))
    vg = _sample_vg(sample)
    best_x, best_f = adam_ascent(vg, starts, epochs=epochs, lr=lr)
    top = int(np.argmax(best_f))
    x, _ = polish_batch(vg, best_x[top][None, :])
    return np.clip(x[0], 0.0, 1.0)


class _StackedSamples:
    """Vectorized evaluation of many pathwise samples at many points each.

    Layout: S samples with P points per sample, flattened row-major into
    (S*P, d) arrays so the generic ascent helpers treat rows independently.
    All heavy contractions are batched matmuls; the amplitude is folded into
    the feature weights once up front.
    """

    def __init__(self, samples: Sequence[PathwiseSample], dtype=np.float64) -> None:
        s0 = samples[0]
        self.S = len(samples)
        self.d = s0.dim
        self.freqs = np.stack([s.prior.frequencies for s in samples]).astype(dtype)
        self.freqs_t = np.ascontiguousarray(self.freqs.transpose(0, 2, 1))
        self.phases = np.stack([s.prior.phases for s in samples]).astype(dtype)[:, None, :]
        amp = np.array([s.prior.amplitude for s in samples], dtype=dtype)
        self.aweights = (np.stack([s.prior.weights for s in samples]).astype(dtype)
                         * amp[:, None])[:, :, None]
        self.mean = np.array([s.prior.mean for s in samples], dtype=dtype)[:, None]
        post = s0.posterior
        self.has_data = post.chol is not None
        if self.has_data:
            p = post.params
            self.inv_l2 = (1.0 / p.lengthscales ** 2).astype(dtype)
            sl = np.sqrt(self.inv_l2)
            self.Xt = post.data.inputs.astype(dtype)
            self.Ts_t = np.ascontiguousarray((self.Xt * sl).T)
            self.ts_sq = np.sum((self.Xt * sl) ** 2, axis=1)
            self.outputscale = np.asarray(p.outputscale, dtype=dtype)
            self.V = np.stack([s.v for s in samples]).astype(dtype)[:, None, :]
        self.dtype = dtype

    def value_and_grad(self, X_flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        S, d = self.S, self.d
        P = X_flat.shape[0] // S
        X = np.ascontiguousarray(X_flat.reshape(S, P, d), dtype=self.dtype)
        proj = X @ self.freqs_t
        proj += self.phases
        cosp = np.cos(proj)
        np.sin(proj, out=proj)
        f = (cosp @ self.aweights)[:, :, 0]
        f += self.mean
        proj *= self.aweights.transpose(0, 2, 1)
        g = proj @ self.freqs
        np.negative(g, out=g)
        if self.has_data:
            Xs = X * np.sqrt(self.inv_l2)
            d2 = Xs.reshape(S * P, d) @ self.Ts_t
            d2 *= -2.0
            d2 += self.ts_sq
            d2 += np.sum(Xs * Xs, axis=2).reshape(S * P, 1)
            np.maximum(d2, 0.0, out=d2)
            d2 *= -0.5
            k = np.exp(d2, out=d2).reshape(S, P, -1)
            k *= self.outputscale
            k *= self.V
            f += k.sum(axis=2)
            g += (k @ self.Xt - X * k.sum(axis=2)[:, :, None]) * self.inv_l2
        return f.reshape(S * P), g.reshape(S * P, d)


def _maximize_samples(samples: Sequence[PathwiseSample], d: int,
                      starts: np.ndarray) -> np.ndarray:
    """Maximize each sample from its own multistart block; returns (S, d)."""
    S, P, _ = starts.shape
    fast = _StackedSamples(samples, dtype=_FAST_DTYPE)
    x0 = starts.reshape(S * P, d).astype(_FAST_DTYPE)
    best_x, best_f = adam_ascent(fast.value_and_grad, x0, epochs=10 * d, lr=0.01)
    best_x = best_x.reshape(S, P, d)
    best_f = best_f.reshape(S, P)
    winners = np.argmax(best_f, axis=1)
    top = best_x[np.arange(S), winners].astype(np.float64)
    exact = _StackedSamples(samples, dtype=np.float64)
    polished, _ = polish_batch(exact.value_and_grad, top)
    return np.clip(polished, 0.0, 1.0)


def create_batch(post: Posterior, size: int, F: int, rng: np.random.Generator,
                 streams: Optional[Sequence[np.random.Generator]] = None,
                 objective_index: int = 0, chunk: int = 256) -> Batch:
    """Draw ``size`` i.i.d. Thompson maximizers from the posterior.

    Every batch point gets its own RNG substream (prior features, pathwise
    noise, multistart initializers), so points are exchangeable and the
    result is bit-reproducible for a fixed seed.  ``streams`` overrides the
    spawned substreams, mainly to exercise substream assignment in tests.
    """
    d = post.params.dim
    if size == 0:
        return Batch(np.zeros((0, d)), np.zeros(0, dtype=int))
    if streams is None:
        streams = rng.spawn(size)
    elif len(streams) != size:
        raise ValueError("need one RNG stream per batch point")
    n_train = post.n_train
    noise_std = math.sqrt(post.params.noise_var)
    points = np.empty((size, d))
    for lo in range(0, size, chunk):
        hi = min(lo + chunk, size)
        priors = []
        etas = []
        starts = []
        for st in streams[lo:hi]:
            priors.append(draw_prior_sample(post.params, F, st))
            if n_train:
                etas.append(st.normal(0.0, noise_std, n_train))
            starts.append(st.random((10 * d, d)))
        if n_train:
            # one stacked pass for every prior at the training inputs, then a
            # single multi-RHS triangular solve for all update coefficients
            Xt = post.data.inputs.astype(_FAST_DTYPE)
            proj = Xt @ np.stack([p.frequencies for p in priors]).transpose(0, 2, 1).astype(_FAST_DTYPE)
            proj += np.stack([p.phases for p in priors]).astype(_FAST_DTYPE)[:, None, :]
            amps = np.array([p.amplitude for p in priors])
            vals = (np.cos(proj) @ np.stack([p.weights for p in priors]).astype(_FAST_DTYPE)[:, :, None])[:, :, 0]
            vals = post.params.mean + amps[:, None] * vals.astype(np.float64)
            resid = post.data.outputs - vals - np.stack(etas)
            V = cho_solve((post.chol, True), resid.T).T
            block = [PathwiseSample(pr, post, v) for pr, v in zip(priors, V)]
        else:
            block = [PathwiseSample(pr, post, None) for pr in priors]
        points[lo:hi] = _maximize_samples(block, d, np.stack(starts))
    return Batch(points, np.full(size, objective_index, dtype=int))
