"""Prediction-error and coverage metrics plus machine-readable reports.

MSE is the per-individual mean of squared errors over that individual's
testing points; cohort aggregates are the mean and (sample) sd of those
per-individual values, matching the "mean (sd)" reporting convention.
Coverage (WCIC95) weights per-cluster 95%-interval hit rates by the
membership probabilities; the indicator is applied per testing point and
averaged within an individual before averaging across individuals - that
interpretation is recorded in every report header.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NoTestingPoints

REPORT_HEADER = ["method", "condition", "mse_mean", "mse_sd", "wcic_mean", "wcic_sd", "failed_fraction"]

REPORT_NOTES = (
    "mse: mean over individuals of per-individual mean squared error; "
    "coverage indicator applied per testing point and averaged within individual"
)


@dataclass
class PredictionRecord:
    """One individual's predictions at its testing points under one condition."""

    id: str
    condition: str
    ages: np.ndarray
    observed: np.ndarray
    predicted_mean: np.ndarray
    cluster_lower: np.ndarray | None = None   # (K, T) per-cluster 95% bounds
    cluster_upper: np.ndarray | None = None
    weights: np.ndarray | None = None         # (K,) membership weights

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=float)
        self.observed = np.asarray(self.observed, dtype=float)
        self.predicted_mean = np.asarray(self.predicted_mean, dtype=float)
        if not len(self.ages) == len(self.observed) == len(self.predicted_mean):
            raise ValueError("record sequences must be aligned")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if abs(self.weights.sum() - 1.0) > 1e-9:
                raise ValueError(f"weights sum to {self.weights.sum()}")

    @property
    def has_intervals(self) -> bool:
        return self.cluster_lower is not None and self.cluster_upper is not None and self.weights is not None


def mse(record: PredictionRecord) -> float:
    """Per-individual mean squared error over its testing points."""
    if len(record.ages) == 0:
        raise NoTestingPoints(record.id)
    return float(np.mean((record.observed - record.predicted_mean) ** 2))


def mse_aggregate(records: list[PredictionRecord]) -> tuple[float, float]:
    """(mean, sample sd) of per-individual MSEs; sd is nan below 2 records."""
    values = np.array([mse(r) for r in records])
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")
    return float(values.mean()), sd


def individual_coverage(record: PredictionRecord) -> float:
    """Membership-weighted fraction of testing points inside per-cluster bands."""
    if len(record.ages) == 0:
        raise NoTestingPoints(record.id)
    if not record.has_intervals:
        raise ValueError(f"record {record.id!r} carries no intervals")
    inside = (record.observed >= record.cluster_lower) & (record.observed <= record.cluster_upper)
    per_cluster = inside.mean(axis=1)
    return float(record.weights @ per_cluster)


def wcic95(records: list[PredictionRecord]) -> tuple[float, float]:
    """Cohort coverage percentage: 100 x mean (and sample sd) over individuals."""
    values = 100.0 * np.array([individual_coverage(r) for r in records])
    if len(values) == 0:
        raise NoTestingPoints("no records")
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")
    return float(values.mean()), sd


@dataclass
class ReportRow:
    method: str
    condition: str
    mse_mean: float
    mse_sd: float
    wcic_mean: float | None
    wcic_sd: float | None
    failed_fraction: float
    n_evaluated: int = 0
    n_failed: int = 0
    n_skipped: int = 0

    def __post_init__(self):
        if not 0.0 <= self.failed_fraction <= 1.0:
            raise ValueError(f"failed_fraction {self.failed_fraction} outside [0, 1]")


@dataclass
class ExperimentReport:
    """Rows per (method, condition) plus the per-individual records behind them."""

    name: str
    rows: list[ReportRow] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    notes: str = REPORT_NOTES

    def row(self, method: str, condition: str) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.condition == condition:
                return r
        raise KeyError((method, condition))

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_HEADER)
            for r in self.rows:
                writer.writerow(
                    [
                        r.method,
                        r.condition,
                        _fmt(r.mse_mean),
                        _fmt(r.mse_sd),
                        _fmt(r.wcic_mean),
                        _fmt(r.wcic_sd),
                        _fmt(r.failed_fraction),
                    ]
                )

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "notes": self.notes,
                "rows": [
                    {
                        "method": r.method,
                        "condition": r.condition,
                        "mse_mean": _none_if_nan(r.mse_mean),
                        "mse_sd": _none_if_nan(r.mse_sd),
                        "wcic_mean": _none_if_nan(r.wcic_mean),
                        "wcic_sd": _none_if_nan(r.wcic_sd),
                        "failed_fraction": r.failed_fraction,
                        "n_evaluated": r.n_evaluated,
                        "n_failed": r.n_failed,
                        "n_skipped": r.n_skipped,
                    }
                    for r in self.rows
                ],
                "records": self.records,
            },
            indent=2,
        )

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and np.isnan(value):
        return ""
    return repr(float(value))


def _none_if_nan(value):
    if value is None:
        return None
    value = float(value)
    return None if np.isnan(value) else value


def record_to_dict(record: PredictionRecord, method: str) -> dict:
    doc = {
        "method": method,
        "id": record.id,
        "condition": record.condition,
        "ages": record.ages.tolist(),
        "observed": record.observed.tolist(),
        "predicted_mean": record.predicted_mean.tolist(),
    }
    if record.has_intervals:
        doc["cluster_lower"] = record.cluster_lower.tolist()
        doc["cluster_upper"] = record.cluster_upper.tolist()
        doc["weights"] = record.weights.tolist()
    return doc
