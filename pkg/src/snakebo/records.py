"""Per-iteration run traces shared by every optimization strategy."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

REGRET_FLOOR = 1e-10


@dataclass
class RunRecord:
    """Trace of one optimization run, one row per executed query.

    ``y_obs`` is the (possibly noisy) value returned to the optimizer once it
    arrives; best-so-far and simple regret are tracked on the noiseless
    objective values of the executed queries, matching the regret metric.
    """

    queries: np.ndarray        # (T, d) normalized coordinates
    queries_native: np.ndarray # (T, d) native coordinates (same if no map)
    y_true: np.ndarray
    y_obs: np.ndarray
    submit_iter: np.ndarray
    arrival_iter: np.ndarray
    best_y: np.ndarray
    simple_regret: np.ndarray
    step_cost: np.ndarray
    cum_cost: np.ndarray
    meta: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]

    @property
    def final_cost(self) -> float:
        return float(self.cum_cost[-1])

    @property
    def final_regret(self) -> float:
        return float(self.simple_regret[-1])

    @property
    def final_log_regret(self) -> float:
        return float(np.log(max(self.final_regret, REGRET_FLOOR)))

    def validate(self) -> None:
        T = len(self)
        arrays = [self.y_true, self.y_obs, self.submit_iter, self.arrival_iter,
                  self.best_y, self.simple_regret, self.step_cost, self.cum_cost]
        if any(a.shape[0] != T for a in arrays):
            raise ValueError("ragged run record")
        if np.any(np.diff(self.cum_cost) < -1e-12):
            raise ValueError("cumulative cost must be nondecreasing")
        if np.any(np.diff(self.simple_regret) > 1e-12):
            raise ValueError("simple regret must be nonincreasing")


class RunRecorder:
    """Incremental builder for RunRecord."""

    def __init__(self, f_star: Optional[float], to_native=None, meta: Optional[dict] = None) -> None:
        self.f_star = f_star
        self.to_native = to_native or (lambda x: x)
        self.rows: list[tuple] = []
        self.best = -np.inf
        self.cum = 0.0
        self.meta = dict(meta or {})

    def add(self, x: np.ndarray, y_true: float, y_obs: float,
            submit: int, arrival: int, step_cost: float) -> None:
        self.best = max(self.best, y_true)
        self.cum += step_cost
        self.rows.append((np.asarray(x, dtype=float).copy(), y_true, y_obs,
                          submit, arrival, self.best, step_cost, self.cum))

    def build(self, extra: Optional[dict] = None) -> RunRecord:
        if not self.rows:
            raise ValueError("no queries recorded")
        q = np.stack([r[0] for r in self.rows])
        best = np.array([r[5] for r in self.rows])
        if self.f_star is None:
            regret = np.full(len(self.rows), np.nan)
        else:
            regret = self.f_star - best
        rec = RunRecord(
            queries=q,
            queries_native=np.stack([self.to_native(r[0]) for r in self.rows]),
            y_true=np.array([r[1] for r in self.rows]),
            y_obs=np.array([r[2] for r in self.rows]),
            submit_iter=np.array([r[3] for r in self.rows], dtype=int),
            arrival_iter=np.array([r[4] for r in self.rows], dtype=int),
            best_y=best,
            simple_regret=regret,
            step_cost=np.array([r[6] for r in self.rows]),
            cum_cost=np.array([r[7] for r in self.rows]),
            meta=self.meta,
            extra=dict(extra or {}),
        )
        return rec
