"""Experiment protocols: missing-data sweep, forecasting sweep, cluster
sweep and sex stratification.

Each protocol derives one seed per (experiment, condition, individual) so
masks never shift when a method is added or removed, and failures of a
method on an individual are data (counted, never fatal).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .cohort import Cohort, GrowthSeries, mask_random, stable_seed, truncate_after
from .errors import GrowthcastError, NoTestingPoints
from .jenss import JenssBayleyModel, individual_offsets, jb_predict_bmi, predict_measure
from .metrics import (
    ExperimentReport,
    PredictionRecord,
    ReportRow,
    mse_aggregate,
    record_to_dict,
    wcic95,
)
from .mixture import ModelConfig, TrainedModel, predict, train
from .splines import eval_spline, fit_smoothing_spline

logger = logging.getLogger(__name__)

MISSING_RATIOS = (0.10, 0.25, 0.50, 0.75, 0.90)
FORECAST_CUTOFFS = (24.0, 36.0, 48.0, 60.0, 72.0)

Z95 = float(norm.ppf(0.975))


class GPMixtureMethod:
    """Adapter exposing the trained mixture to the harness."""

    name = "gp_mixture"

    def __init__(self, model: TrainedModel, level: float = 0.95):
        self.model = model
        self.z = float(norm.ppf(0.5 + level / 2.0))

    def predict_record(self, observed: GrowthSeries, testing: GrowthSeries, condition: str) -> PredictionRecord:
        ages = testing.ages
        prediction = predict(self.model, observed, ages)
        means = prediction.cluster_means
        sds = prediction.cluster_sds
        return PredictionRecord(
            id=observed.id,
            condition=condition,
            ages=ages,
            observed=testing.bmi_values,
            predicted_mean=prediction.mean,
            cluster_lower=means - self.z * sds,
            cluster_upper=means + self.z * sds,
            weights=prediction.weights,
        )


class SplineBaseline:
    """Per-individual smoothing spline; no uncertainty, fails under 4 points."""

    name = "spline"

    def predict_record(self, observed: GrowthSeries, testing: GrowthSeries, condition: str) -> PredictionRecord:
        fit = fit_smoothing_spline(observed)
        return PredictionRecord(
            id=observed.id,
            condition=condition,
            ages=testing.ages,
            observed=testing.bmi_values,
            predicted_mean=eval_spline(fit, testing.ages),
        )


class JenssBayleyBaseline:
    """Population weight/height curves from training; per-individual offsets
    refit from the observed points of the individual being evaluated."""

    name = "jenss_bayley"

    def __init__(self, weight_model: JenssBayleyModel, height_model: JenssBayleyModel):
        self.weight_model = weight_model
        self.height_model = height_model

    def predict_record(self, observed: GrowthSeries, testing: GrowthSeries, condition: str) -> PredictionRecord:
        preds = {}
        for measure, model in (("weight", self.weight_model), ("height", self.height_model)):
            pairs = [
                (o.age, getattr(o, measure))
                for o in observed.observations
                if getattr(o, measure) is not None
            ]
            times = np.array([p[0] for p in pairs])
            values = np.array([p[1] for p in pairs])
            offsets = individual_offsets(times, values, model.population, model.ridge)
            preds[measure] = predict_measure(model.population, offsets, testing.ages)
        bmi = preds["weight"] / (preds["height"] / 100.0) ** 2
        return PredictionRecord(
            id=observed.id,
            condition=condition,
            ages=testing.ages,
            observed=testing.bmi_values,
            predicted_mean=bmi,
        )


def fit_baselines(train_cohort: Cohort, ridge: float = 1.0) -> list:
    """The standard competitor set: splines and Jenss-Bayley."""
    from .jenss import fit_jenss_bayley

    weight_model = fit_jenss_bayley(train_cohort, "weight", ridge=ridge)
    height_model = fit_jenss_bayley(train_cohort, "height", ridge=ridge)
    return [SplineBaseline(), JenssBayleyBaseline(weight_model, height_model)]


BASELINE_REPORT_HEADER = ["id", "model", "status", "n_points", "rmse"]


def baseline_fit_report(cohort: Cohort, ridge: float = 1.0) -> list[dict]:
    """Per-individual baseline fit statuses, including failure reasons.

    Splines are fit per individual on BMI; the Jenss-Bayley rows report the
    individual-level refit around population curves fitted on this cohort.
    """
    from .errors import GrowthcastError
    from .jenss import fit_jenss_bayley

    rows = []
    for series in cohort:
        try:
            fit = fit_smoothing_spline(series)
            resid = eval_spline(fit, series.ages) - series.bmi_values
            rows.append(
                {
                    "id": series.id,
                    "model": "spline",
                    "status": "fitted",
                    "n_points": len(series),
                    "rmse": float(np.sqrt(np.mean(resid**2))),
                }
            )
        except GrowthcastError as exc:
            rows.append(
                {"id": series.id, "model": "spline", "status": f"failed: {exc}", "n_points": len(series), "rmse": None}
            )
    weight_model = fit_jenss_bayley(cohort, "weight", ridge=ridge)
    height_model = fit_jenss_bayley(cohort, "height", ridge=ridge)
    for series in cohort:
        fitted = series.id in weight_model.offsets and series.id in height_model.offsets
        if fitted:
            bmi_hat = jb_predict_bmi(weight_model, height_model, series.id, series.ages)
            rmse = float(np.sqrt(np.mean((bmi_hat - series.bmi_values) ** 2)))
            status = "fitted"
        else:
            rmse = None
            status = "failed: fewer than 2 weight/height points"
        rows.append(
            {"id": series.id, "model": "jenss_bayley", "status": status, "n_points": len(series), "rmse": rmse}
        )
    return rows


def write_baseline_fit_report(rows: list[dict], path) -> None:
    import csv
    from pathlib import Path

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BASELINE_REPORT_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["id"],
                    row["model"],
                    row["status"],
                    row["n_points"],
                    "" if row["rmse"] is None else repr(row["rmse"]),
                ]
            )


@dataclass
class _ConditionTally:
    records: list[PredictionRecord] = field(default_factory=list)
    n_failed: int = 0


def _evaluate_condition(
    methods: list,
    pairs: list[tuple[GrowthSeries, GrowthSeries]],
    condition: str,
    report: ExperimentReport,
) -> None:
    tallies = {m.name: _ConditionTally() for m in methods}
    n_skipped = 0
    for observed, testing in pairs:
        if len(testing) == 0:
            n_skipped += 1
            continue
        for method in methods:
            tally = tallies[method.name]
            try:
                record = method.predict_record(observed, testing, condition)
            except GrowthcastError as exc:
                tally.n_failed += 1
                logger.debug("%s failed on %s (%s): %s", method.name, observed.id, condition, exc)
                continue
            tally.records.append(record)
            report.records.append(record_to_dict(record, method.name))
    n_evaluable = len(pairs) - n_skipped
    for method in methods:
        tally = tallies[method.name]
        if tally.records:
            mse_mean, mse_sd = mse_aggregate(tally.records)
        else:
            mse_mean, mse_sd = float("nan"), float("nan")
        if tally.records and all(r.has_intervals for r in tally.records):
            wcic_mean, wcic_sd = wcic95(tally.records)
        else:
            wcic_mean, wcic_sd = None, None
        report.rows.append(
            ReportRow(
                method=method.name,
                condition=condition,
                mse_mean=mse_mean,
                mse_sd=mse_sd,
                wcic_mean=wcic_mean,
                wcic_sd=wcic_sd,
                failed_fraction=tally.n_failed / n_evaluable if n_evaluable else 0.0,
                n_evaluated=n_evaluable,
                n_failed=tally.n_failed,
                n_skipped=n_skipped,
            )
        )


def run_missing_experiment(
    model: TrainedModel,
    baselines: list,
    test_cohort: Cohort,
    ratios=MISSING_RATIOS,
    seed: int = 0,
) -> ExperimentReport:
    """Mask a fraction of each individual's points; predict them back."""
    methods = [GPMixtureMethod(model), *baselines]
    report = ExperimentReport(name="missing_data")
    for ratio in ratios:
        condition = f"{int(round(ratio * 100))}%"
        pairs = []
        for series in test_cohort:
            sub_seed = stable_seed(seed, "missing", ratio, series.id)
            retained, removed = mask_random(series, ratio, sub_seed)
            pairs.append((retained, removed))
        _evaluate_condition(methods, pairs, condition, report)
    return report


def forecast_condition_label(cutoff_months: float) -> str:
    if float(cutoff_months) % 12 == 0:
        return f"from {int(cutoff_months // 12)} to 10 years"
    return f"from {cutoff_months} months to 10 years"


def run_forecast_experiment(
    model: TrainedModel,
    baselines: list,
    test_cohort: Cohort,
    cutoffs=FORECAST_CUTOFFS,
) -> ExperimentReport:
    """Observe up to a cutoff age; predict everything after it."""
    methods = [GPMixtureMethod(model), *baselines]
    report = ExperimentReport(name="forecasting")
    for cutoff in cutoffs:
        condition = forecast_condition_label(cutoff)
        pairs = [truncate_after(series, cutoff) for series in test_cohort]
        _evaluate_condition(methods, pairs, condition, report)
    return report


@dataclass
class ClusterSweepEntry:
    n_clusters: int
    map_counts: list[int]
    mixing: list[float]
    mean_curves: np.ndarray  # (K, G)


@dataclass
class ClusterSweepReport:
    grid: np.ndarray
    entries: list[ClusterSweepEntry]

    def to_json(self) -> str:
        import json

        return json.dumps(
            {
                "grid_months": self.grid.tolist(),
                "entries": [
                    {
                        "n_clusters": e.n_clusters,
                        "map_counts": e.map_counts,
                        "mixing": e.mixing,
                        "mean_curves": e.mean_curves.tolist(),
                    }
                    for e in self.entries
                ],
            },
            indent=2,
        )


def run_cluster_sweep(
    train_cohort: Cohort,
    k_values=range(2, 11),
    base_config: ModelConfig | None = None,
) -> ClusterSweepReport:
    """Train across cluster counts and report MAP occupancy and mean curves."""
    entries = []
    grid = None
    for k in k_values:
        if base_config is None:
            config = ModelConfig(n_clusters=k)
        else:
            config = replace(base_config, n_clusters=k)
        model = train(train_cohort, config)
        grid = model.grid
        counts = np.bincount(model.map_labels(), minlength=k)
        entries.append(
            ClusterSweepEntry(
                n_clusters=k,
                map_counts=counts.tolist(),
                mixing=model.mixing.tolist(),
                mean_curves=np.vstack(model.hyper_means),
            )
        )
    return ClusterSweepReport(grid=grid, entries=entries)


@dataclass
class SexStratifiedReport:
    report: ExperimentReport
    mean_curves: dict[str, np.ndarray]  # sex -> (K, G)
    grid: np.ndarray


def run_sex_stratified(
    train_cohort: Cohort,
    test_cohort: Cohort,
    config: ModelConfig,
    mask_ratio: float = 0.5,
    forecast_cutoff: float = 72.0,
    seed: int = 0,
    with_baselines: bool = True,
) -> SexStratifiedReport:
    """Train and evaluate each sex independently; export mean curves."""
    report = ExperimentReport(name="sex_stratified")
    curves: dict[str, np.ndarray] = {}
    grid = None
    for sex in ("F", "M"):
        train_sex = train_cohort.filter_sex(sex)
        test_sex = test_cohort.filter_sex(sex)
        model = train(train_sex, config)
        grid = model.grid
        curves[sex] = np.vstack(model.hyper_means)
        baselines = fit_baselines(train_sex) if with_baselines else []
        methods = [GPMixtureMethod(model), *baselines]
        label = "female" if sex == "F" else "male"
        pairs = []
        for series in test_sex:
            sub_seed = stable_seed(seed, "sex_missing", sex, series.id)
            pairs.append(mask_random(series, mask_ratio, sub_seed))
        _evaluate_condition(methods, pairs, f"{label} missing {int(mask_ratio * 100)}%", report)
        pairs = [truncate_after(series, forecast_cutoff) for series in test_sex]
        _evaluate_condition(methods, pairs, f"{label} {forecast_condition_label(forecast_cutoff)}", report)
    return SexStratifiedReport(report=report, mean_curves=curves, grid=grid)
