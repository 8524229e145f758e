"""Per-individual penalized cubic smoothing splines on BMI.

Cubic B-spline basis with knots at the unique observation ages; the
roughness penalty is the integrated squared second derivative, and the
smoothing parameter comes from generalized cross-validation over a fixed
log-spaced grid. Outside the knot span the curve continues linearly from
the boundary value and slope, which is exactly the extrapolation behaviour
long-horizon forecasting punishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve

from .cohort import GrowthSeries
from .errors import InsufficientPoints

# GCV grid: 41 points, lambda in 10^-6 .. 10^4.
GCV_GRID = np.logspace(-6.0, 4.0, 41)

MIN_POINTS = 4


@dataclass
class SplineFit:
    """Fitted smoothing spline: knot ages, basis coefficients, lambda."""

    knots: np.ndarray
    coefficients: np.ndarray
    smoothing: float
    knot_vector: np.ndarray
    gcv_score: float

    def bspline(self) -> BSpline:
        return BSpline(self.knot_vector, self.coefficients, 3, extrapolate=False)


def _knot_vector(x: np.ndarray) -> np.ndarray:
    return np.concatenate([[x[0]] * 4, x[1:-1], [x[-1]] * 4])


def _basis_matrix(tvec: np.ndarray, x: np.ndarray, n_basis: int) -> np.ndarray:
    return BSpline.design_matrix(x, tvec, 3).toarray()[:, :n_basis]


def _penalty_matrix(tvec: np.ndarray, n_basis: int) -> np.ndarray:
    """Integral of products of basis second derivatives.

    The second derivative of a cubic B-spline is piecewise linear, so a
    2-point Gauss rule per knot interval integrates the products exactly.
    """
    second = BSpline(tvec, np.eye(n_basis), 3).derivative(2)
    breaks = np.unique(tvec)
    gauss = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    omega = np.zeros((n_basis, n_basis))
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for gp in gauss:
            values = second(mid + half * gp)  # (n_basis,) per evaluation point
            omega += half * np.outer(values, values)
    return omega


def fit_smoothing_spline(series: GrowthSeries, smoothing: float | None = None) -> SplineFit:
    """Fit one individual's BMI curve.

    smoothing=None selects lambda by GCV; passing a value pins it (0 gives
    the minimum-norm interpolating fit). Raises InsufficientPoints below 4
    distinct ages - the classic failure mode under heavy missingness.
    """
    x = series.ages
    y = series.bmi_values
    x, keep = np.unique(x, return_index=True)
    y = y[keep]
    if len(x) < MIN_POINTS:
        raise InsufficientPoints(f"{len(x)} distinct ages < {MIN_POINTS} for id {series.id!r}")
    tvec = _knot_vector(x)
    n_basis = len(tvec) - 4
    B = _basis_matrix(tvec, x, n_basis)
    omega = _penalty_matrix(tvec, n_basis)
    bt_b = B.T @ B
    bt_y = B.T @ y
    n = len(x)

    def solve_for(lam: float) -> tuple[np.ndarray, float, float]:
        A = bt_b + lam * omega
        try:
            cf = cho_factor(A)
            coef = cho_solve(cf, bt_y)
            edf = float(np.trace(cho_solve(cf, bt_b)))
        except np.linalg.LinAlgError:
            coef = np.linalg.lstsq(A, bt_y, rcond=None)[0]
            edf = float(np.trace(np.linalg.pinv(A) @ bt_b))
        fitted = B @ coef
        rss = float(np.sum((y - fitted) ** 2))
        denom = max(n - edf, 1e-12)
        gcv = n * rss / denom**2
        return coef, gcv, rss

    if smoothing is not None:
        if smoothing == 0.0:
            coef = np.linalg.lstsq(B, y, rcond=None)[0]
            fitted = B @ coef
            gcv = float(np.sum((y - fitted) ** 2))
            return SplineFit(knots=x, coefficients=coef, smoothing=0.0, knot_vector=tvec, gcv_score=gcv)
        coef, gcv, _ = solve_for(smoothing)
        return SplineFit(knots=x, coefficients=coef, smoothing=float(smoothing), knot_vector=tvec, gcv_score=gcv)

    best = None
    for lam in GCV_GRID:
        coef, gcv, _ = solve_for(lam)
        if best is None or gcv < best[1]:
            best = (coef, gcv, lam)
    coef, gcv, lam = best
    return SplineFit(knots=x, coefficients=coef, smoothing=float(lam), knot_vector=tvec, gcv_score=float(gcv))


def eval_spline(fit: SplineFit, times) -> np.ndarray:
    """Evaluate inside the knot span; linear extrapolation outside it."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = fit.knots[0], fit.knots[-1]
    spline = fit.bspline()
    deriv = spline.derivative(1)
    out = np.empty_like(t)
    inside = (t >= lo) & (t <= hi)
    out[inside] = spline(t[inside])
    below = t < lo
    if below.any():
        out[below] = float(spline(lo)) + float(deriv(lo)) * (t[below] - lo)
    above = t > hi
    if above.any():
        out[above] = float(spline(hi)) + float(deriv(hi)) * (t[above] - hi)
    return out
