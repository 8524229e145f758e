"""Modified Jenss-Bayley growth curves for weight and height.

Curve form: f(t) = a + b*t + c*t^2 - exp(d - e*t), with e kept positive by
optimizing its log. The quadratic term extends the classic infancy model
through late childhood. Fitting is a two-stage empirical-Bayes scheme:
a pooled nonlinear least-squares fit of the population parameters, then a
ridge-shrunk per-individual refit of the (a, b) offsets, which stays
well-posed with as few as two observations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .cohort import Cohort, GrowthSeries
from .errors import InsufficientPoints, OptimizationDiverged, UnknownIndividual

logger = logging.getLogger(__name__)

# Fixed multi-start perturbations applied to the heuristic initial guess,
# in the (a, b, c, d, log e) parameterization.
MULTI_START_OFFSETS = (
    (0.0, 0.0, 0.0, 0.0, 0.0),
    (0.5, 0.02, 0.0, 0.3, 0.4),
    (-0.5, -0.02, 0.0, -0.3, -0.4),
    (1.0, 0.0, 1e-4, 0.5, 0.8),
    (-1.0, 0.0, -1e-4, -0.5, -0.8),
)

# Months scale for the per-individual slope offset so the ridge penalty
# treats level and slope comparably.
SLOPE_SCALE = 60.0


@dataclass(frozen=True)
class JenssBayleyParams:
    a: float
    b: float
    c: float
    d: float
    e: float

    def __post_init__(self):
        if not self.e > 0:
            raise ValueError(f"decay rate e must be positive, got {self.e}")

    def curve(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return self.a + self.b * t + self.c * t**2 - np.exp(self.d - self.e * t)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e])


def _curve_x(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    a, b, c, d, loge = x
    return a + b * t + c * t**2 - np.exp(d - np.exp(loge) * t)


def _jacobian_x(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    _, _, _, d, loge = x
    e = np.exp(loge)
    expo = np.exp(d - e * t)
    return np.column_stack([np.ones_like(t), t, t**2, -expo, expo * t * e])


@dataclass
class JenssBayleyModel:
    """Population curve plus shrunken per-individual (a, b) offsets."""

    measure: str
    population: JenssBayleyParams
    offsets: dict[str, tuple[float, float]] = field(default_factory=dict)
    ridge: float = 1.0
    skipped: list[str] = field(default_factory=list)

    def predict(self, series_id: str, times) -> np.ndarray:
        if series_id not in self.offsets:
            raise UnknownIndividual(f"{series_id!r} not fitted for {self.measure}")
        return predict_measure(self.population, self.offsets[series_id], times)


def predict_measure(population: JenssBayleyParams, offsets: tuple[float, float], times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    da, db = offsets
    return population.curve(t) + da + db * (t / SLOPE_SCALE)


def individual_offsets(
    times: np.ndarray, values: np.ndarray, population: JenssBayleyParams, ridge: float
) -> tuple[float, float]:
    """Ridge-penalized (a, b) offsets around the population curve.

    Needs at least two points; the ridge keeps the solve finite there and
    sends the offsets to zero as ridge grows.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 2:
        raise InsufficientPoints(f"{len(t)} points < 2 for an individual refit")
    X = np.column_stack([np.ones_like(t), t / SLOPE_SCALE])
    resid = y - population.curve(t)
    A = X.T @ X + ridge * np.eye(2)
    da, db = np.linalg.solve(A, X.T @ resid)
    return float(da), float(db)


def _series_measure(series: GrowthSeries, measure: str) -> tuple[np.ndarray, np.ndarray]:
    pairs = [
        (o.age, getattr(o, measure))
        for o in series.observations
        if getattr(o, measure) is not None
    ]
    if not pairs:
        return np.empty(0), np.empty(0)
    t, y = zip(*pairs)
    return np.asarray(t, dtype=float), np.asarray(y, dtype=float)


def _heuristic_init(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    quad = np.polyfit(t, y, 2) if len(np.unique(t)) >= 3 else np.array([0.0, 0.0, np.mean(y)])
    c0, b0, a0 = float(quad[0]), float(quad[1]), float(quad[2])
    early = y[np.argsort(t)[: max(3, len(t) // 10)]]
    gap = a0 - float(np.mean(early))
    d0 = float(np.log(max(abs(gap), 0.5)))
    e0 = 1.0 / 18.0
    return np.array([a0, b0, c0, d0, np.log(e0)])


def fit_jenss_bayley(cohort: Cohort, measure: str, ridge: float = 1.0) -> JenssBayleyModel:
    """Two-stage fit of one measure ('weight' or 'height') over a cohort.

    Individuals with fewer than two recorded values of the measure are
    skipped and reported on the model; they raise UnknownIndividual at
    prediction time.
    """
    if measure not in ("weight", "height"):
        raise ValueError(f"measure must be 'weight' or 'height', got {measure!r}")
    if not ridge > 0:
        raise ValueError("ridge must be positive")
    per_series = {}
    skipped = []
    for series in cohort:
        t, y = _series_measure(series, measure)
        if len(t) < 2:
            skipped.append(series.id)
            continue
        per_series[series.id] = (t, y)
    if not per_series:
        raise InsufficientPoints(f"no individual has >= 2 {measure} values")

    t_all = np.concatenate([t for t, _ in per_series.values()])
    y_all = np.concatenate([y for _, y in per_series.values()])
    x0 = _heuristic_init(t_all, y_all)

    best = None
    for offset in MULTI_START_OFFSETS:
        start = x0 + np.asarray(offset)
        try:
            result = least_squares(
                lambda x: _curve_x(x, t_all) - y_all,
                start,
                jac=lambda x: _jacobian_x(x, t_all),
                method="lm",
                max_nfev=2000,
            )
        except Exception:  # singular trial start: try the next one
            continue
        if not result.success:
            continue
        if best is None or result.cost < best.cost:
            best = result
    if best is None:
        raise OptimizationDiverged(f"population fit failed for {measure} from all starts")
    a, b, c, d, loge = best.x
    population = JenssBayleyParams(a=float(a), b=float(b), c=float(c), d=float(d), e=float(np.exp(loge)))

    offsets = {
        sid: individual_offsets(t, y, population, ridge) for sid, (t, y) in per_series.items()
    }
    if skipped:
        logger.info("jenss-bayley %s: skipped %d individuals with < 2 points", measure, len(skipped))
    return JenssBayleyModel(measure=measure, population=population, offsets=offsets, ridge=ridge, skipped=skipped)


def jb_predict_bmi(
    weight_model: JenssBayleyModel, height_model: JenssBayleyModel, series_id: str, times
) -> np.ndarray:
    """BMI from the fitted weight and height curves: w(t) / (h(t)/100)^2.

    A non-positive fitted weight or height makes the ratio meaningless;
    that case is logged per individual rather than raised.
    """
    t = np.asarray(times, dtype=float)
    weight = weight_model.predict(series_id, t)
    height = height_model.predict(series_id, t)
    if np.any(weight <= 0) or np.any(height <= 0):
        logger.warning("non-positive fitted curve for %r; BMI values unreliable", series_id)
    return weight / (height / 100.0) ** 2
