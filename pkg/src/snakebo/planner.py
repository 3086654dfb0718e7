"""Adaptive grid construction and low-cost open-path planning.

The grid keeps the batch points nearest the current input exact and snaps
the rest to a coarse Sobol grid, so the path solver only ever sees a bounded
number of nodes.  Paths are open Hamiltonian paths with the source pinned at
position zero, built greedily and improved by simulated annealing whose edge
weights are mean-normalized, making the accepted ordering invariant to
positive rescaling of the cost model.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

from .costs import CostModel

DEFAULT_N_LOCAL = 25
DEFAULT_N_GLOBAL = 100

# Annealing schedule: geometric cooling on mean-normalized weights.
SA_T0 = 1.0
SA_FACTOR = 0.995
SA_T_MIN = 1e-3
SA_STALE_LEVELS = 50
SA_MOVES_PER_NODE = 100


def sobol_grid(n: int, d: int) -> np.ndarray:
    """First n points of the unscrambled d-dimensional Sobol sequence.

    The origin is kept as the first point; benchmark optima are shifted away
    from grid points so this costs nothing.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance warning for non-power-of-2 n
        return qmc.Sobol(d=d, scramble=False).random(n)


@dataclass(frozen=True)
class AdaptiveGrid:
    """Local exact points plus occupied coarse nodes covering a batch."""

    local_points: np.ndarray            # (l, d) exact batch coordinates
    global_nodes: np.ndarray            # (N_g, d) full Sobol grid
    occupied: tuple[int, ...]           # indices of occupied global nodes, ascending
    assignments: tuple[np.ndarray, ...] # batch points assigned to each occupied node

    @property
    def nodes(self) -> np.ndarray:
        """Path nodes: local points first, then occupied global nodes."""
        occ = self.global_nodes[list(self.occupied)] if self.occupied else np.zeros((0, self.global_nodes.shape[1]))
        return np.vstack([self.local_points, occ]) if len(self.local_points) else occ

    @property
    def n_nodes(self) -> int:
        return len(self.local_points) + len(self.occupied)

    def is_local(self, node_index: int) -> bool:
        return node_index < len(self.local_points)

    def node_query(self, node_index: int) -> np.ndarray:
        """Executable query for a node: itself if local, else the assigned
        batch point nearest the node (ties to the lowest index)."""
        if self.is_local(node_index):
            return self.local_points[node_index]
        k = node_index - len(self.local_points)
        node = self.global_nodes[self.occupied[k]]
        pts = self.assignments[k]
        dists = np.linalg.norm(pts - node, axis=1)
        return pts[int(np.argmin(dists))]


def build_adaptive_grid(batch, current: np.ndarray,
                        n_local: int = DEFAULT_N_LOCAL,
                        n_global: int = DEFAULT_N_GLOBAL) -> AdaptiveGrid:
    """Keep the n_local batch points nearest ``current`` exact and assign the
    rest to their nearest node of an n_global Sobol grid."""
    points = np.atleast_2d(np.asarray(batch.points if hasattr(batch, "points") else batch, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("cannot build a grid over an empty batch")
    current = np.asarray(current, dtype=float)
    d = points.shape[1]
    dists = np.linalg.norm(points - current, axis=1)
    order = np.argsort(dists, kind="stable")
    n_loc = min(n_local, points.shape[0])
    local = points[np.sort(order[:n_loc])]
    rest = points[np.sort(order[n_loc:])]
    grid = sobol_grid(n_global, d)
    if rest.shape[0] == 0:
        return AdaptiveGrid(local, grid, (), ())
    # nearest global node per remaining point; argmin ties to lowest index
    d2 = ((rest[:, None, :] - grid[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    occupied = tuple(sorted(set(int(i) for i in nearest)))
    assignments = tuple(rest[nearest == i] for i in occupied)
    return AdaptiveGrid(local, grid, occupied, assignments)


@dataclass
class Path:
    """Open query schedule: fixed source, ordered nodes, execution cursor."""

    source: np.ndarray
    nodes: np.ndarray                 # (m, d) in visit order
    order: tuple[int, ...]            # visit order as indices into the grid's node set
    cursor: int = 0

    def __len__(self) -> int:
        return self.nodes.shape[0]

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self)


def path_cost(path: Path, cost: CostModel) -> float:
    """Total cost along source -> nodes[0] -> ... -> nodes[-1]."""
    total = 0.0
    prev = path.source
    for node in path.nodes:
        total += cost(prev, node)
        prev = node
    return total


def reversal_delta(order: Sequence[int], i: int, j: int, W: np.ndarray) -> float:
    """Cost change from reversing order[i..j] on an open path.

    ``W`` indexes the source at 0 and node k at order[k]; only the two
    boundary edges change (one if the segment ends the path).
    """
    prev = order[i - 1] if i > 0 else 0
    a, b = order[i], order[j]
    if j < len(order) - 1:
        nxt = order[j + 1]
        return W[prev, b] + W[a, nxt] - W[prev, a] - W[b, nxt]
    return W[prev, b] - W[prev, a]


def _greedy_order(W: np.ndarray) -> list[int]:
    """Nearest-neighbor construction from the source (index 0)."""
    m = W.shape[0] - 1
    remaining = list(range(1, m + 1))
    order: list[int] = []
    cur = 0
    while remaining:
        row = W[cur]
        best = min(remaining, key=lambda idx: row[idx])
        order.append(best)
        remaining.remove(best)
        cur = best
    return order


def _anneal(order: list[int], W: np.ndarray, rng: np.random.Generator,
            t0: float = SA_T0, factor: float = SA_FACTOR, t_min: float = SA_T_MIN,
            stale_levels: int = SA_STALE_LEVELS,
            moves_per_node: int = SA_MOVES_PER_NODE) -> list[int]:
    """Segment-reversal / node-relocation annealing; position 0 never moves.

    Runs on mean-normalized weights so acceptance decisions cannot depend on
    a positive rescaling of the cost.  Returns the best order ever visited.
    """
    m = len(order)
    if m < 2:
        return list(order)
    Wl = W.tolist()
    cur = list(order)
    cost_cur = Wl[0][cur[0]]
    for a, b in zip(cur[:-1], cur[1:]):
        cost_cur += Wl[a][b]
    best = list(cur)
    cost_best = cost_cur

    temp = t0
    stale = 0
    n_moves = moves_per_node * m
    exp = math.exp
    while temp >= t_min and stale < stale_levels:
        kinds = (rng.random(n_moves) < 0.5).tolist()
        ia = rng.integers(0, m, size=n_moves).tolist()
        ib = rng.integers(0, m, size=n_moves).tolist()
        us = rng.random(n_moves).tolist()
        improved = False
        for kind, i, j, u in zip(kinds, ia, ib, us):
            if kind:
                # reverse segment [i..j]
                if i > j:
                    i, j = j, i
                if i == j:
                    continue
                prev = cur[i - 1] if i > 0 else 0
                a = cur[i]
                b = cur[j]
                if j < m - 1:
                    nxt = cur[j + 1]
                    delta = Wl[prev][b] + Wl[a][nxt] - Wl[prev][a] - Wl[b][nxt]
                else:
                    delta = Wl[prev][b] - Wl[prev][a]
                if delta <= 0.0 or (delta < 40.0 * temp and u < exp(-delta / temp)):
                    cur[i:j + 1] = cur[i:j + 1][::-1]
                    cost_cur += delta
                    if cost_cur < cost_best - 1e-12:
                        cost_best = cost_cur
                        best = list(cur)
                        improved = True
            else:
                # relocate node at position i to slot j of the shortened path
                if m < 3 or j == i:
                    continue
                x = cur[i]
                prev = cur[i - 1] if i > 0 else 0
                if i < m - 1:
                    gain = Wl[prev][x] + Wl[x][cur[i + 1]] - Wl[prev][cur[i + 1]]
                else:
                    gain = Wl[prev][x]
                # neighbors of insertion slot j in the list with x removed
                pred_idx = j - 1
                if pred_idx >= i:
                    pred_idx += 1
                pred = cur[pred_idx] if pred_idx >= 0 else 0
                if j <= m - 2:
                    succ_idx = j if j < i else j + 1
                    succ = cur[succ_idx]
                    add = Wl[pred][x] + Wl[x][succ] - Wl[pred][succ]
                else:
                    add = Wl[pred][x]
                delta = add - gain
                if delta <= 0.0 or (delta < 40.0 * temp and u < exp(-delta / temp)):
                    del cur[i]
                    cur.insert(j, x)
                    cost_cur += delta
                    if cost_cur < cost_best - 1e-12:
                        cost_best = cost_cur
                        best = list(cur)
                        improved = True
        stale = 0 if improved else stale + 1
        temp *= factor
    return best


def solve_tsp(grid_or_points: Union[AdaptiveGrid, np.ndarray], source: np.ndarray,
              cost: CostModel, rng: np.random.Generator) -> Path:
    """Open Hamiltonian path over all nodes starting at ``source``.

    Greedy nearest-neighbor construction followed by simulated annealing on
    mean-normalized weights; the returned order is asserted to be a
    permutation with the source fixed in front.
    """
    if isinstance(grid_or_points, AdaptiveGrid):
        nodes = grid_or_points.nodes
    else:
        nodes = np.atleast_2d(np.asarray(grid_or_points, dtype=float))
    m = nodes.shape[0]
    if m == 0:
        raise ValueError("cannot plan a path over an empty node set")
    source = np.asarray(source, dtype=float)
    W = cost.pairwise(np.vstack([source[None, :], nodes]))
    greedy = _greedy_order(W)
    if m > 2:
        off = W[~np.eye(m + 1, dtype=bool)]
        scale = float(off.mean())
        Wn = W / scale if scale > 0 else W
        best = _anneal(greedy, Wn, rng)
    else:
        best = greedy
    assert sorted(best) == list(range(1, m + 1)), "annealing broke the permutation"
    order = tuple(idx - 1 for idx in best)
    return Path(source=source, nodes=nodes[list(order)], order=order, cursor=0)


def dequeue_query(path: Path, grid: Optional[AdaptiveGrid] = None) -> np.ndarray:
    """Next executable query on the path; advances the cursor.

    Local nodes execute at their own coordinates; an occupied coarse node
    executes at its nearest assigned batch point.
    """
    if path.exhausted:
        raise IndexError("query path is exhausted")
    node_index = path.order[path.cursor]
    if grid is None:
        query = path.nodes[path.cursor]
    else:
        query = grid.node_query(node_index)
    path.cursor += 1
    return np.asarray(query, dtype=float)
