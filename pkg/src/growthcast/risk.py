"""Overweight probability at a target age, from posterior samples or in
closed form, plus classification scoring against observed status.

The sex-specific thresholds at 10 years are 22.0 kg/m^2 for girls and
22.8 kg/m^2 for boys; a predicted probability at or above the decision
cutoff (default 5%) flags a child as at risk. Exceedance is strict (>)
at the target age only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .cohort import Cohort, stable_seed, truncate_after
from .errors import MissingStatus, TargetAgeMissing
from .metrics import _none_if_nan
from .mixture import MixturePrediction, TrainedModel, predict, sample_trajectories

DEFAULT_THRESHOLDS = {"F": 22.0, "M": 22.8}

RISK_CSV_HEADER = ["id", "sex", "horizon_months", "probability", "predicted_positive", "observed_positive"]


@dataclass(frozen=True)
class OverweightSpec:
    target_age: float = 120.0
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    n_samples: int = 100_000
    decision_cutoff: float = 0.05

    def __post_init__(self):
        if any(v <= 0 for v in self.thresholds.values()):
            raise ValueError("thresholds must be positive")
        if not 0 < self.decision_cutoff < 1:
            raise ValueError("decision_cutoff must be in (0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass
class RiskResult:
    id: str | None
    probability: float
    method: str
    n_samples: int
    seed: int | None

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1]")


def _target_index(prediction: MixturePrediction, target_age: float) -> int:
    hits = np.flatnonzero(np.abs(prediction.target_times - target_age) <= 1e-9)
    if hits.size == 0:
        raise TargetAgeMissing(
            f"target age {target_age} not among prediction times {prediction.target_times}"
        )
    return int(hits[0])


def closed_form_probability(prediction: MixturePrediction, threshold: float, target_age: float) -> float:
    """Mixture tail mass above the threshold at the target age."""
    idx = _target_index(prediction, target_age)
    total = 0.0
    for weight, post in zip(prediction.weights, prediction.per_cluster):
        sd = post.sd[idx]
        if sd > 0:
            tail = 1.0 - norm.cdf((threshold - post.mean[idx]) / sd)
        else:
            tail = 1.0 if post.mean[idx] > threshold else 0.0
        total += float(weight) * float(tail)
    return min(max(total, 0.0), 1.0)


def overweight_probability(
    prediction: MixturePrediction,
    spec: OverweightSpec,
    sex: str,
    seed: int,
    method: str = "monte_carlo",
    series_id: str | None = None,
    threshold: float | None = None,
) -> RiskResult:
    """Probability that the trajectory exceeds the sex threshold at target age.

    monte_carlo counts exceedances among sampled trajectories (the
    high-fidelity default); closed_form evaluates the mixture tail directly.
    """
    if method not in ("monte_carlo", "closed_form"):
        raise ValueError(f"unknown method {method!r}")
    if threshold is None:
        if sex not in spec.thresholds:
            raise ValueError(f"no threshold for sex {sex!r}")
        threshold = spec.thresholds[sex]
    idx = _target_index(prediction, spec.target_age)
    if method == "closed_form":
        prob = closed_form_probability(prediction, threshold, spec.target_age)
        return RiskResult(id=series_id, probability=prob, method=method, n_samples=0, seed=None)
    samples = sample_trajectories(prediction, spec.n_samples, seed)
    prob = float(np.mean(samples[:, idx] > threshold))
    return RiskResult(id=series_id, probability=prob, method=method, n_samples=spec.n_samples, seed=seed)


@dataclass
class ClassificationScore:
    sensitivity: float | None
    specificity: float | None
    accuracy: float
    true_positive: int
    false_positive: int
    true_negative: int
    false_negative: int

    @property
    def total(self) -> int:
        return self.true_positive + self.false_positive + self.true_negative + self.false_negative


def classify_and_score(
    risks: list[RiskResult], observed_status: dict[str, bool], cutoff: float
) -> ClassificationScore:
    """Binary classification at probability >= cutoff against observed status."""
    tp = fp = tn = fn = 0
    for risk in risks:
        if risk.id not in observed_status:
            raise MissingStatus(f"no observed status for {risk.id!r}")
        predicted = risk.probability >= cutoff
        actual = observed_status[risk.id]
        if predicted and actual:
            tp += 1
        elif predicted and not actual:
            fp += 1
        elif not predicted and actual:
            fn += 1
        else:
            tn += 1
    sensitivity = tp / (tp + fn) if (tp + fn) else None
    specificity = tn / (tn + fp) if (tn + fp) else None
    accuracy = (tp + tn) / max(tp + tn + fp + fn, 1)
    return ClassificationScore(
        sensitivity=sensitivity,
        specificity=specificity,
        accuracy=accuracy,
        true_positive=tp,
        false_positive=fp,
        true_negative=tn,
        false_negative=fn,
    )


@dataclass
class HorizonRiskReport:
    horizon: float
    score: ClassificationScore
    risks: list[RiskResult]
    observed_status: dict[str, bool]


@dataclass
class OverweightExperimentReport:
    spec: OverweightSpec
    horizons: list[HorizonRiskReport]
    n_excluded: int
    sexes: dict[str, str] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(RISK_CSV_HEADER)
            for horizon in self.horizons:
                for risk in horizon.risks:
                    writer.writerow(
                        [
                            risk.id,
                            self.sexes.get(risk.id, ""),
                            repr(float(horizon.horizon)),
                            repr(risk.probability),
                            int(risk.probability >= self.spec.decision_cutoff),
                            int(horizon.observed_status[risk.id]),
                        ]
                    )

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "target_age_months": self.spec.target_age,
                "decision_cutoff": self.spec.decision_cutoff,
                "n_excluded": self.n_excluded,
                "horizons": [
                    {
                        "horizon_months": h.horizon,
                        "sensitivity": _none_if_nan(h.score.sensitivity) if h.score.sensitivity is not None else None,
                        "specificity": _none_if_nan(h.score.specificity) if h.score.specificity is not None else None,
                        "accuracy": h.score.accuracy,
                        "confusion": {
                            "tp": h.score.true_positive,
                            "fp": h.score.false_positive,
                            "tn": h.score.true_negative,
                            "fn": h.score.false_negative,
                        },
                        "risks": [
                            {
                                "id": r.id,
                                "sex": self.sexes.get(r.id, ""),
                                "probability": r.probability,
                                "observed_positive": bool(h.observed_status[r.id]),
                            }
                            for r in h.risks
                        ],
                    }
                    for h in self.horizons
                ],
            },
            indent=2,
        )


DEFAULT_HORIZONS = (24.0, 48.0, 72.0, 96.0)


def run_overweight_experiment(
    model: TrainedModel,
    test_cohort: Cohort,
    horizons=DEFAULT_HORIZONS,
    spec: OverweightSpec | None = None,
    seed: int = 0,
    method: str = "monte_carlo",
) -> OverweightExperimentReport:
    """Score predicted overweight status per forecasting horizon.

    Only individuals with an observation at the target age are evaluable;
    the rest are excluded and counted.
    """
    spec = spec or OverweightSpec()
    evaluable = []
    statuses: dict[str, bool] = {}
    sexes: dict[str, str] = {}
    for series in test_cohort:
        ages = series.ages
        hit = np.flatnonzero(np.abs(ages - spec.target_age) <= 1e-9)
        if hit.size == 0:
            continue
        observed_bmi = series.bmi_values[int(hit[0])]
        evaluable.append(series)
        statuses[series.id] = bool(observed_bmi > spec.thresholds[series.sex])
        sexes[series.id] = series.sex
    n_excluded = len(test_cohort) - len(evaluable)

    reports = []
    for horizon in horizons:
        risks = []
        for series in evaluable:
            observed, _ = truncate_after(series, horizon)
            prediction = predict(model, observed, [spec.target_age])
            risk = overweight_probability(
                prediction,
                spec,
                series.sex,
                seed=stable_seed(seed, "overweight", horizon, series.id),
                method=method,
                series_id=series.id,
            )
            risks.append(risk)
        score = classify_and_score(risks, statuses, spec.decision_cutoff)
        reports.append(
            HorizonRiskReport(horizon=float(horizon), score=score, risks=risks, observed_status=statuses)
        )
    return OverweightExperimentReport(spec=spec, horizons=reports, n_excluded=n_excluded, sexes=sexes)
