"""Synthetic objective suite with native domains and known maxima.

All evaluators use the maximization convention and are vectorized over row
batches.  Runs operate on the normalized unit box; the benchmark carries the
affine map to its native domain.  The Shekel objectives can be restricted to
a polygonal mask modelling a lake outline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Callable, Optional

import numpy as np

# Hartmann mixture weights, shared across dimensions.
_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])

_HARTMANN3_A = np.array([
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
])
_HARTMANN3_P = 1e-4 * np.array([
    [3689.0, 1170.0, 2673.0],
    [4699.0, 4387.0, 7470.0],
    [1091.0, 8732.0, 5547.0],
    [381.0, 5743.0, 8828.0],
])

_HARTMANN6_A = np.array([
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
])
_HARTMANN6_P = 1e-4 * np.array([
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
])

# Shekel bump centers (in 10x units) and dampings per objective.  The printed
# parameter tables index centers by coordinate-times-bump, so square tables
# read column-wise and the three-bump table row-wise.
_SHEKEL = {
    "shekel-o1": (np.array([[2.0, 9.0], [6.7, 2.0]]), np.array([9.0, 9.0])),
    "shekel-o2": (np.array([[7.0, 6.0], [3.8, 9.9], [9.0, 0.1]]), np.array([10.0, 8.0, 8.0])),
    "shekel-o3": (np.array([[4.0, 8.5], [3.0, 4.0]]), np.array([7.0, 9.0])),
}


def point_in_polygon(point: np.ndarray, vertices: np.ndarray) -> bool:
    """Even-odd rule crossing test; the polygon closes implicitly."""
    x, y = float(point[0]), float(point[1])
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def load_polygon(path) -> np.ndarray:
    """Polygon vertices from a text file, one "x y" pair per line."""
    rows = []
    for line in FilePath(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x, y = line.split()
        rows.append((float(x), float(y)))
    if len(rows) < 3:
        raise ValueError("polygon needs at least three vertices")
    return np.array(rows)


def default_lake_polygon() -> np.ndarray:
    return load_polygon(FilePath(__file__).parent / "data" / "lake_outline.txt")


@dataclass(frozen=True)
class Benchmark:
    """Named objective with native box domain and known maximum."""

    name: str
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray]
    f_max: float
    argmax_native: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None  # polygon in normalized coordinates

    def to_native(self, x_norm: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(x_norm, dtype=float) * (self.upper - self.lower)

    def to_normalized(self, x_native: np.ndarray) -> np.ndarray:
        return (np.asarray(x_native, dtype=float) - self.lower) / (self.upper - self.lower)

    def in_mask(self, x_norm: np.ndarray) -> bool:
        if self.mask is None:
            return True
        return point_in_polygon(np.asarray(x_norm, dtype=float), self.mask)

    def evaluate_native(self, X: np.ndarray) -> np.ndarray:
        return self.evaluator(np.atleast_2d(np.asarray(X, dtype=float)))

    def eval_batch(self, X_norm: np.ndarray) -> np.ndarray:
        X_norm = np.atleast_2d(np.asarray(X_norm, dtype=float))
        return self.evaluator(self.lower + X_norm * (self.upper - self.lower))

    def __call__(self, x_norm: np.ndarray) -> float:
        return eval(self, x_norm)

    def with_mask(self, polygon: np.ndarray) -> "Benchmark":
        return Benchmark(self.name, self.dim, self.lower, self.upper, self.evaluator,
                         self.f_max, self.argmax_native, np.asarray(polygon, dtype=float))

    def mask_grid(self, resolution: int = 101) -> np.ndarray:
        """In-mask points of a regular grid over the unit square."""
        if self.mask is None:
            raise ValueError("benchmark has no mask")
        axis = np.linspace(0.0, 1.0, resolution)
        gx, gy = np.meshgrid(axis, axis)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        keep = np.array([point_in_polygon(p, self.mask) for p in pts])
        return pts[keep]

    def project_to_mask(self, x_norm: np.ndarray, resolution: int = 101) -> np.ndarray:
        """Nearest in-mask grid point (used to keep truncated steps feasible)."""
        if self.in_mask(x_norm):
            return np.asarray(x_norm, dtype=float)
        grid = self.mask_grid(resolution)
        d = np.linalg.norm(grid - np.asarray(x_norm, dtype=float), axis=1)
        return grid[int(np.argmin(d))]


def eval(bench: Benchmark, x_normalized: np.ndarray) -> float:
    """Evaluate at a normalized point; masked domains reject outside points."""
    x = np.asarray(x_normalized, dtype=float)
    if x.shape != (bench.dim,):
        raise ValueError(f"expected a {bench.dim}-vector")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("normalized point outside the unit box")
    if not bench.in_mask(x):
        raise ValueError("point outside the domain mask")
    return float(bench.eval_batch(x[None, :])[0])


def _branin(X: np.ndarray) -> np.ndarray:
    a, b, c = -1.0, 5.1 / (4.0 * math.pi ** 2), 5.0 / math.pi
    r, s, t = 6.0, -10.0, 1.0 / (8.0 * math.pi)
    x1, x2 = X[:, 0], X[:, 1]
    return a * (x2 - b * x1 ** 2 + c * x1 - r) ** 2 + s * (1.0 - t) * np.cos(x1) + s


def _ackley4(X: np.ndarray) -> np.ndarray:
    a, b, c = 20.0, 0.2, 2.0 * math.pi
    term1 = a * np.exp(-b * np.sqrt(np.mean(X ** 2, axis=1)))
    term2 = np.exp(np.mean(np.cos(c * X), axis=1))
    return term1 + term2 - a - math.e


def _michalewicz2(X: np.ndarray) -> np.ndarray:
    m = 10
    i = np.arange(1, 3)
    return np.sum(np.sin(X) * np.sin(i * X ** 2 / math.pi) ** (2 * m), axis=1)


def _hartmann(A: np.ndarray, P: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def f(X: np.ndarray) -> np.ndarray:
        inner = np.einsum("kj,nkj->nk", A, (X[:, None, :] - P[None, :, :]) ** 2)
        return np.exp(-inner) @ _HARTMANN_ALPHA
    return f


def _hartmann4(X: np.ndarray) -> np.ndarray:
    # leading 4x4 sub-blocks of the 6-D matrices, standard 4-D rescaling
    inner = np.einsum("kj,nkj->nk", _HARTMANN6_A[:, :4], (X[:, None, :] - _HARTMANN6_P[None, :, :4]) ** 2)
    s = np.exp(-inner) @ _HARTMANN_ALPHA
    return (s - 1.1) / 0.839


def _perm10(X: np.ndarray) -> np.ndarray:
    j = np.arange(1, 11)
    total = np.zeros(X.shape[0])
    for i in range(1, 11):
        term = ((j ** i + 10.0) * ((X / j) ** i - 1.0)).sum(axis=1)
        total += term ** 2
    return -1e-21 * total


def _shekel(C: np.ndarray, beta: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def f(X: np.ndarray) -> np.ndarray:
        d2 = ((10.0 * X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        return (1.0 / (d2 + beta)).sum(axis=1)
    return f


# Known maxima: analytic where available, otherwise frozen from a 1000-start
# polished multistart ascent sweep over the native domain.
_REGISTRY: dict = {}


def _register(name: str, dim: int, lower, upper, evaluator, f_max: float,
              argmax_native=None) -> None:
    _REGISTRY[name] = dict(name=name, dim=dim,
                           lower=np.asarray(lower, dtype=float),
                           upper=np.asarray(upper, dtype=float),
                           evaluator=evaluator, f_max=f_max,
                           argmax_native=None if argmax_native is None
                           else np.asarray(argmax_native, dtype=float))


_register("branin2d", 2, [-5.0, 0.0], [10.0, 15.0], _branin,
          -0.39788735772973816, [math.pi, 2.275])
_register("ackley4d", 4, [-1.8] * 4, [2.2] * 4, _ackley4, 0.0, [0.0] * 4)
_register("michalewicz2d", 2, [0.0, 0.0], [math.pi, math.pi], _michalewicz2,
          1.8013034100985528, [2.20290552, 1.57079632])
_register("hartmann3d", 3, [0.0] * 3, [1.0] * 3, _hartmann(_HARTMANN3_A, _HARTMANN3_P),
          3.862779787332663, [0.11458887, 0.5556489, 0.85254698])
_register("hartmann4d", 4, [0.0] * 4, [1.0] * 4, _hartmann4,
          3.1344941412223988, [0.18739527, 0.19415153, 0.55791778, 0.26477962])
_register("hartmann6d", 6, [0.0] * 6, [1.0] * 6, _hartmann(_HARTMANN6_A, _HARTMANN6_P),
          3.322368011415512, [0.2016895, 0.15001068, 0.47687397, 0.27533243, 0.31165162, 0.65730053])
_register("perm10d", 10, [-10.0] * 10, [10.0] * 10, _perm10, 0.0,
          list(range(1, 11)))
_SHEKEL_MAX = {
    "shekel-o1": (0.1237419453853844, [0.66384581, 0.20916582]),
    "shekel-o2": (0.16241735275857036, [0.40129768, 0.96264521]),
    "shekel-o3": (0.17731496534260183, [0.39388029, 0.82246132]),
}
for _name, (_C, _beta) in _SHEKEL.items():
    _fmax, _arg = _SHEKEL_MAX[_name]
    _register(_name, 2, [0.0, 0.0], [1.0, 1.0], _shekel(_C, _beta), _fmax, _arg)


def benchmark_names() -> list[str]:
    return sorted(_REGISTRY)


def make_benchmark(name: str, mask_file=None) -> Benchmark:
    """Construct a benchmark by name; unknown names raise."""
    if name not in _REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}; choose from {benchmark_names()}")
    spec = dict(_REGISTRY[name])
    mask = None
    if mask_file is not None:
        mask = load_polygon(mask_file)
    return Benchmark(mask=mask, **spec)
