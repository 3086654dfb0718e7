"""Input-change cost models.

Two variants: plain Euclidean distance (optionally with per-dimension scale
factors) and a first-order dynamic-response cost where each controlled
dimension pays a settling time for moving between set-points and the total
cost of a move is the slowest dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# |delta| below this is treated as "no move" to keep log(|delta|/beta) finite.
_DELTA_EPS = 1e-15


@dataclass(frozen=True)
class ResponseParams:
    """Per-dimension first-order response constants.

    ``control_dims[k]`` is the input dimension governed by ``alpha[k]``
    (time constant), ``beta[k]`` (quasi-steady residual, in native input
    units) and ``gamma[k]`` (linear rate for sub-residual moves).
    Dimensions not listed in ``control_dims`` are free to change at no cost.
    """

    control_dims: tuple[int, ...]
    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.control_dims)
        if not (len(self.alpha) == len(self.beta) == len(self.gamma) == n):
            raise ValueError("alpha, beta, gamma must match control_dims in length")
        if any(a <= 0 for a in self.alpha) or any(b <= 0 for b in self.beta):
            raise ValueError("alpha and beta must be positive")
        if any(g < 0 for g in self.gamma):
            raise ValueError("gamma must be nonnegative")


def euclidean_cost(x1: np.ndarray, x2: np.ndarray, scale: Optional[np.ndarray] = None) -> float:
    """2-norm of (x1 - x2) after applying per-dimension scale factors."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    diff = x1 - x2
    if scale is not None:
        diff = diff * np.asarray(scale, dtype=float)
    return float(np.sqrt(np.sum(diff * diff)))


def response_cost_dim(delta: float, alpha: float, beta: float, gamma: float) -> float:
    """Settling cost of a single-dimension move of size ``delta``.

    gamma * min(beta, |delta|) covers the quasi-steady (linear) regime; for
    moves larger than the residual beta an extra alpha * log(|delta|/beta)
    settling term applies.  A zero move costs exactly zero.
    """
    mag = abs(delta)
    if mag < _DELTA_EPS:
        return 0.0
    cost = gamma * min(beta, mag)
    if mag > beta:
        cost += alpha * np.log(mag / beta)
    return float(cost)


def response_cost(x1: np.ndarray, x2: np.ndarray, params: ResponseParams) -> float:
    """Max over controlled dimensions of the per-dimension settling cost.

    Inputs are in native units; dimensions outside the control set
    contribute nothing (they can be changed freely).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    worst = 0.0
    for k, dim in enumerate(params.control_dims):
        c = response_cost_dim(x2[dim] - x1[dim], params.alpha[k], params.beta[k], params.gamma[k])
        if c > worst:
            worst = c
    return worst


def _response_cost_dim_vec(delta: np.ndarray, alpha: float, beta: float, gamma: float) -> np.ndarray:
    mag = np.abs(delta)
    cost = gamma * np.minimum(beta, mag)
    big = mag > beta
    if np.any(big):
        cost = np.where(big, cost + alpha * np.log(np.where(big, mag, 1.0) / beta), cost)
    return np.where(mag < _DELTA_EPS, 0.0, cost)


@dataclass(frozen=True)
class CostModel:
    """Pairwise input-change cost over the normalized [0,1]^d domain.

    variant "euclidean": scaled 2-norm in normalized coordinates.
    variant "response": first-order response cost evaluated in native units;
    ``lower``/``upper`` give the affine map from normalized to native
    coordinates so that planner and runs can stay normalized throughout.
    ``multiplier`` uniformly rescales all costs (the query sequence of the
    path-based optimizer must not depend on it).
    """

    variant: str = "euclidean"
    response: Optional[ResponseParams] = None
    scale: Optional[tuple[float, ...]] = None
    lower: Optional[tuple[float, ...]] = None
    upper: Optional[tuple[float, ...]] = None
    multiplier: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in ("euclidean", "response"):
            raise ValueError(f"unknown cost variant {self.variant!r}")
        if self.variant == "response":
            if self.response is None:
                raise ValueError("response variant requires ResponseParams")
            if (self.lower is None) != (self.upper is None):
                raise ValueError("lower and upper must be given together")
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")

    def _to_native(self, x: np.ndarray) -> np.ndarray:
        if self.lower is None:
            return x
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return lo + x * (hi - lo)

    def __call__(self, x1: np.ndarray, x2: np.ndarray) -> float:
        if self.variant == "euclidean":
            base = euclidean_cost(x1, x2, None if self.scale is None else np.asarray(self.scale))
        else:
            base = response_cost(self._to_native(np.asarray(x1, dtype=float)),
                                 self._to_native(np.asarray(x2, dtype=float)),
                                 self.response)
        return self.multiplier * base

    def pairwise(self, points: np.ndarray) -> np.ndarray:
        """Full symmetric cost matrix over a set of points, shape (n, n)."""
        pts = np.asarray(points, dtype=float)
        n = pts.shape[0]
        if self.variant == "euclidean":
            q = pts if self.scale is None else pts * np.asarray(self.scale, dtype=float)
            sq = np.sum(q * q, axis=1)
            d2 = sq[:, None] + sq[None, :] - 2.0 * (q @ q.T)
            np.maximum(d2, 0.0, out=d2)
            w = np.sqrt(d2)
        else:
            nat = self._to_native(pts)
            w = np.zeros((n, n))
            for k, dim in enumerate(self.response.control_dims):
                delta = nat[:, dim][None, :] - nat[:, dim][:, None]
                np.maximum(w, _response_cost_dim_vec(
                    delta, self.response.alpha[k], self.response.beta[k], self.response.gamma[k]), out=w)
        np.fill_diagonal(w, 0.0)
        return self.multiplier * w

    def scaled(self, c: float) -> "CostModel":
        """Same cost model with all costs multiplied by c > 0."""
        return CostModel(variant=self.variant, response=self.response, scale=self.scale,
                         lower=self.lower, upper=self.upper, multiplier=self.multiplier * c)


def snar_cost_model(lower: Sequence[float] = (40.0, 0.1, 0.5, 1.0),
                    upper: Sequence[float] = (120.0, 0.5, 2.0, 5.0)) -> CostModel:
    """Reactor response cost: temperature, concentration and residence time
    are controlled; the fourth variable (reagent equivalents) is free."""
    params = ResponseParams(control_dims=(0, 1, 2),
                            alpha=(5.0, 2.0, 3.0),
                            beta=(1.0, 0.01, 0.05),
                            gamma=(1.0, 1.0, 1.0))
    return CostModel(variant="response", response=params,
                     lower=tuple(lower), upper=tuple(upper))
