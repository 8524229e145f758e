"""Log-space gradient ascent with backtracking line search.

All hyperparameter optimization in the package funnels through `ascend`,
so convergence behaviour is uniform: stop when the objective improves by
less than `tol` or after `max_iters` accepted steps.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import OptimizationDiverged

# One line search may halve the step at most this many times before the
# optimizer declares divergence.
MAX_BACKTRACKS = 50

GRAD_NORM_EPS = 1e-9


def ascend(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    max_iters: int = 200,
    tol: float = 1e-6,
    lower_bounds=None,
) -> tuple[np.ndarray, float, int]:
    """Maximize fun, returning (x, value, accepted steps).

    fun maps a parameter vector to (value, gradient). lower_bounds, when
    given, is a per-coordinate floor applied after every step (noise-floor
    projection). Raises OptimizationDiverged if a sizable gradient yields
    no improvement within MAX_BACKTRACKS halvings.
    """
    x = np.array(x0, dtype=float)
    if lower_bounds is not None:
        x = np.maximum(x, lower_bounds)
    f, g = fun(x)
    step = 1.0 / max(1.0, float(np.max(np.abs(g))))
    iters = 0
    for _ in range(max_iters):
        if np.max(np.abs(g)) < GRAD_NORM_EPS:
            break
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + step * g
            if lower_bounds is not None:
                x_new = np.maximum(x_new, lower_bounds)
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new > f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if f_new == f or abs(f - f_new) <= 1e-15 * max(1.0, abs(f)):
                break  # flat to machine precision: converged, not diverged
            raise OptimizationDiverged(
                f"no ascent after {MAX_BACKTRACKS} halvings (obj {f:.6g})"
            )
        improvement = f_new - f
        x, f, g = x_new, f_new, g_new
        iters += 1
        step *= 2.0
        if improvement < tol:
            break
    return x, f, iters
