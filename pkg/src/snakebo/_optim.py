"""Shared gradient-ascent helpers for box-constrained maximization.

All routines maximize row-wise over the unit box: candidate matrices have one
optimization run per row and the objective callback returns per-row values
and gradients.  ``adam_ascent`` follows the adaptive-moment update with bias
correction and tracks the best iterate per row; ``polish_batch`` runs a short
projected gradient ascent with backtracking to sharpen the returned points.
"""
from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

ValueAndGrad = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def adam_ascent(value_and_grad: ValueAndGrad, x0: np.ndarray, epochs: int,
                lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> Tuple[np.ndarray, np.ndarray]:
    """Run ``epochs`` adaptive-moment ascent steps from each row of ``x0``.

    Iterates are clamped into [0,1]^d after every step.  Returns the best
    iterate and value seen per row (the trajectory is non-monotone).
    """
    x = np.array(x0, copy=True)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = value_and_grad(x)
    best_x = x.copy()
    best_f = f.copy()
    for t in range(1, epochs + 1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mh = m / (1.0 - beta1 ** t)
        vh = v / (1.0 - beta2 ** t)
        x = np.clip(x + lr * mh / (np.sqrt(vh) + eps), 0.0, 1.0)
        f, g = value_and_grad(x)
        improved = f > best_f
        if np.any(improved):
            best_f = np.where(improved, f, best_f)
            best_x[improved] = x[improved]
    return best_x, best_f


def polish_batch(value_and_grad: ValueAndGrad, x0: np.ndarray,
                 max_iters: int = 25, step0: float = 0.05,
                 min_step: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """Projected gradient ascent with per-row backtracking line search.

    Cheap deterministic refinement of already-good points; converges to a
    box-constrained stationary point much tighter than fixed-step ascent.
    """
    x = np.array(x0, copy=True)
    f, g = value_and_grad(x)
    step = np.full(x.shape[0], step0)
    for _ in range(max_iters):
        active = step >= min_step
        if not np.any(active):
            break
        gnorm = np.linalg.norm(g, axis=1)
        gnorm = np.where(gnorm > 0, gnorm, 1.0)
        cand = np.clip(x + (step / gnorm)[:, None] * g, 0.0, 1.0)
        fc, gc = value_and_grad(cand)
        improved = (fc > f) & active
        x[improved] = cand[improved]
        f = np.where(improved, fc, f)
        g[improved] = gc[improved]
        # grow the step a little on success, halve on failure
        step = np.where(improved, step * 1.3, step * 0.5)
        step = np.where(active, step, 0.0)
    return x, f
