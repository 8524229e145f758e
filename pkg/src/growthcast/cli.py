"""Command-line interface: simulate, train, predict, evaluate, risk, serve, plot.

All randomness flows from explicit --seed flags; outputs go to --out paths.
Exit codes: 0 success, 1 runtime error (diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import experiments as exp
from .cohort import load_cohort, write_cohort
from .errors import GrowthcastError
from .mixture import ModelConfig, credible_band, load_model, predict, sample_trajectories, train
from .mixture import save_model
from .risk import OverweightSpec, run_overweight_experiment
from .service import ServiceConfig
from .synthetic import SyntheticSpec, load_spec, simulate_cohort


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError as exc:
        raise click.UsageError(f"expected comma-separated numbers, got {text!r}") from exc


@click.group()
def cli():
    """Probabilistic childhood BMI trajectory modelling."""


@cli.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None, help="SyntheticSpec JSON")
@click.option("--n", "n_individuals", type=int, default=300, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="cohort CSV output")
@click.option("--truth-out", type=click.Path(), default=None, help="optional truth JSON output")
def simulate(spec_path, n_individuals, seed, out_path, truth_out):
    """Generate a synthetic cohort."""
    spec = load_spec(spec_path) if spec_path else SyntheticSpec(n_individuals=n_individuals)
    cohort, truth = simulate_cohort(spec, seed)
    write_cohort(cohort, out_path)
    if truth_out:
        doc = {
            "schedule": truth.schedule.tolist(),
            "labels": truth.labels,
            "curves": {k: v.tolist() for k, v in truth.curves.items()},
        }
        Path(truth_out).write_text(json.dumps(doc), encoding="utf-8")
    click.echo(f"wrote {len(cohort)} individuals to {out_path}")


@cli.command("train")
@click.option("--cohort", "cohort_path", type=click.Path(exists=True), required=True)
@click.option("--clusters", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-iters", type=int, default=30, show_default=True)
@click.option("--shared-hypers/--per-individual-hypers", default=True, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="model JSON output")
def train_command(cohort_path, clusters, seed, max_iters, shared_hypers, out_path):
    """Train the GP mixture on a cohort CSV."""
    cohort = load_cohort(cohort_path)
    config = ModelConfig(
        n_clusters=clusters,
        seed=seed,
        max_vem_iters=max_iters,
        shared_individual_hypers=shared_hypers,
    )
    model = train(cohort, config)
    save_model(model, out_path)
    click.echo(f"trained K={clusters} on {len(cohort)} individuals; model at {out_path}")


@cli.command("predict")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--series", "series_path", type=click.Path(exists=True), required=True, help="cohort CSV holding the individual")
@click.option("--id", "series_id", default=None, help="individual id (default: sole id in the file)")
@click.option("--targets", required=True, help="comma-separated target ages in months")
@click.option("--samples", type=int, default=0, show_default=True, help="posterior sample curves to include")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="prediction JSON output")
def predict_command(model_path, series_path, series_id, targets, samples, seed, out_path):
    """Predict BMI for one individual at target ages."""
    model = load_model(model_path)
    cohort = load_cohort(series_path)
    if series_id is None:
        if len(cohort) != 1:
            raise click.UsageError("--id required when the file holds several individuals")
        series = cohort.individuals[0]
    else:
        series = cohort.by_id(series_id)
    target_ages = np.asarray(_parse_floats(targets))
    prediction = predict(model, series, target_ages)
    band = credible_band(prediction, 0.95)
    doc = {
        "id": series.id,
        "sex": series.sex,
        "observations": [{"age_months": o.age, "bmi": o.bmi} for o in series.observations],
        "target_ages": prediction.target_times.tolist(),
        "mean": prediction.mean.tolist(),
        "mixture_lower95": band.lower.tolist(),
        "mixture_upper95": band.upper.tolist(),
        "weights": prediction.weights.tolist(),
    }
    if samples > 0:
        doc["samples"] = sample_trajectories(prediction, samples, seed).tolist()
        doc["seed"] = seed
    Path(out_path).write_text(json.dumps(doc), encoding="utf-8")
    click.echo(f"prediction for {series.id} at {len(target_ages)} ages written to {out_path}")


@cli.group()
def evaluate():
    """Experiment protocols producing report tables."""


def _load_model_and_methods(model_path, train_cohort_path, with_baselines):
    model = load_model(model_path)
    baselines = []
    if with_baselines:
        if train_cohort_path is None:
            raise click.UsageError("--train-cohort is required unless --no-baselines is set")
        baselines = exp.fit_baselines(load_cohort(train_cohort_path))
    return model, baselines


@evaluate.command("missing")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--train-cohort", "train_cohort_path", type=click.Path(exists=True), default=None)
@click.option("--test-cohort", "test_cohort_path", type=click.Path(exists=True), required=True)
@click.option("--ratios", default="0.1,0.25,0.5,0.75,0.9", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--baselines/--no-baselines", "with_baselines", default=True, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="report CSV output")
@click.option("--json-out", type=click.Path(), default=None)
def evaluate_missing(model_path, train_cohort_path, test_cohort_path, ratios, seed, with_baselines, out_path, json_out):
    """Missing-data reconstruction sweep."""
    model, baselines = _load_model_and_methods(model_path, train_cohort_path, with_baselines)
    report = exp.run_missing_experiment(
        model, baselines, load_cohort(test_cohort_path), ratios=_parse_floats(ratios), seed=seed
    )
    report.write_csv(out_path)
    if json_out:
        report.write_json(json_out)
    click.echo(f"missing-data report ({len(report.rows)} rows) written to {out_path}")


@evaluate.command("forecast")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--train-cohort", "train_cohort_path", type=click.Path(exists=True), default=None)
@click.option("--test-cohort", "test_cohort_path", type=click.Path(exists=True), required=True)
@click.option("--cutoffs", default="24,36,48,60,72", show_default=True, help="cutoff ages in months")
@click.option("--baselines/--no-baselines", "with_baselines", default=True, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--json-out", type=click.Path(), default=None)
def evaluate_forecast(model_path, train_cohort_path, test_cohort_path, cutoffs, with_baselines, out_path, json_out):
    """Forecasting sweep over observation cutoffs."""
    model, baselines = _load_model_and_methods(model_path, train_cohort_path, with_baselines)
    report = exp.run_forecast_experiment(
        model, baselines, load_cohort(test_cohort_path), cutoffs=_parse_floats(cutoffs)
    )
    report.write_csv(out_path)
    if json_out:
        report.write_json(json_out)
    click.echo(f"forecasting report ({len(report.rows)} rows) written to {out_path}")


@evaluate.command("clusters")
@click.option("--cohort", "cohort_path", type=click.Path(exists=True), required=True)
@click.option("--k-min", type=int, default=2, show_default=True)
@click.option("--k-max", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-iters", type=int, default=30, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="occupancy JSON output")
def evaluate_clusters(cohort_path, k_min, k_max, seed, max_iters, out_path):
    """Cluster-count sweep with occupancy histograms and mean curves."""
    cohort = load_cohort(cohort_path)
    base = ModelConfig(n_clusters=k_min, seed=seed, max_vem_iters=max_iters)
    report = exp.run_cluster_sweep(cohort, range(k_min, k_max + 1), base)
    Path(out_path).write_text(report.to_json(), encoding="utf-8")
    click.echo(f"cluster sweep K={k_min}..{k_max} written to {out_path}")


@evaluate.command("baselines")
@click.option("--cohort", "cohort_path", type=click.Path(exists=True), required=True)
@click.option("--ridge", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="fit-report CSV output")
def evaluate_baselines(cohort_path, ridge, out_path):
    """Per-individual baseline fit statuses (id,model,status,n_points,rmse)."""
    rows = exp.baseline_fit_report(load_cohort(cohort_path), ridge=ridge)
    exp.write_baseline_fit_report(rows, out_path)
    click.echo(f"baseline fit report ({len(rows)} rows) written to {out_path}")


@evaluate.command("sex")
@click.option("--train-cohort", "train_cohort_path", type=click.Path(exists=True), required=True)
@click.option("--test-cohort", "test_cohort_path", type=click.Path(exists=True), required=True)
@click.option("--clusters", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-iters", type=int, default=30, show_default=True)
@click.option("--baselines/--no-baselines", "with_baselines", default=True, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--curves-out", type=click.Path(), default=None, help="per-sex mean curves JSON")
def evaluate_sex(train_cohort_path, test_cohort_path, clusters, seed, max_iters, with_baselines, out_path, curves_out):
    """Sex-stratified training and evaluation."""
    config = ModelConfig(n_clusters=clusters, seed=seed, max_vem_iters=max_iters)
    result = exp.run_sex_stratified(
        load_cohort(train_cohort_path),
        load_cohort(test_cohort_path),
        config,
        seed=seed,
        with_baselines=with_baselines,
    )
    result.report.write_csv(out_path)
    if curves_out:
        doc = {
            "grid_months": result.grid.tolist(),
            "curves": {sex: curves.tolist() for sex, curves in result.mean_curves.items()},
        }
        Path(curves_out).write_text(json.dumps(doc), encoding="utf-8")
    click.echo(f"sex-stratified report written to {out_path}")


@cli.command("risk")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--cohort", "cohort_path", type=click.Path(exists=True), required=True)
@click.option("--horizons", default="24,48,72,96", show_default=True, help="observation horizons in months")
@click.option("--target-age", type=float, default=120.0, show_default=True)
@click.option("--cutoff", type=float, default=0.05, show_default=True)
@click.option("--method", type=click.Choice(["monte_carlo", "closed_form"]), default="monte_carlo", show_default=True)
@click.option("--n-samples", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="risk CSV output")
@click.option("--json-out", type=click.Path(), default=None)
def risk_command(model_path, cohort_path, horizons, target_age, cutoff, method, n_samples, seed, out_path, json_out):
    """Overweight-probability experiment over forecasting horizons."""
    model = load_model(model_path)
    cohort = load_cohort(cohort_path)
    spec = OverweightSpec(target_age=target_age, n_samples=n_samples, decision_cutoff=cutoff)
    report = run_overweight_experiment(
        model, cohort, horizons=_parse_floats(horizons), spec=spec, seed=seed, method=method
    )
    report.write_csv(out_path)
    if json_out:
        Path(json_out).write_text(report.to_json(), encoding="utf-8")
    click.echo(f"risk report over horizons {horizons} written to {out_path}")


@cli.command("serve")
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--cors-origin", multiple=True, help="allowed CORS origin (repeatable)")
def serve_command(model_path, host, port, cors_origin):
    """Run the HTTP JSON service."""
    from .service import serve

    serve(ServiceConfig(model_path=model_path, host=host, port=port, cors_origins=list(cors_origin)))


@cli.command("plot")
@click.option("--kind", type=click.Choice(["clusters", "report", "prediction", "risk"]), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", type=float, default=None, help="overweight threshold line for prediction plots")
@click.option("--out", "out_path", type=click.Path(), required=True)
def plot_command(kind, input_path, threshold, out_path):
    """Render a static chart from a report or prediction JSON."""
    from . import plots

    doc = plots.load_json(input_path)
    if kind == "clusters":
        plots.plot_clusters(doc, out_path)
    elif kind == "report":
        plots.plot_report(doc, out_path)
    elif kind == "prediction":
        plots.plot_prediction(doc, out_path, threshold=threshold)
    else:
        plots.plot_risk_summary(doc, out_path)
    click.echo(f"figure written to {out_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.Abort:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    except (GrowthcastError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
