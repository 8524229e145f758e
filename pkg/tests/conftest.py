"""Shared fixtures. The session-scoped trained models are reused across
test modules because training dominates suite runtime."""

from __future__ import annotations

import numpy as np
import pytest

from growthcast.cohort import Cohort, GrowthSeries, Observation
from growthcast.experiments import fit_baselines, run_forecast_experiment, run_missing_experiment
from growthcast.mixture import ModelConfig, train
from growthcast.synthetic import SyntheticSpec, simulate_cohort


def make_series(series_id, ages, bmi, sex="F", with_wh=False):
    from growthcast.synthetic import height_template

    obs = []
    for a, b in zip(ages, bmi):
        if with_wh:
            h = float(height_template(a))
            w = float(b) * (h / 100.0) ** 2
            obs.append(Observation(age=float(a), bmi=float(b), weight=w, height=h))
        else:
            obs.append(Observation(age=float(a), bmi=float(b)))
    return GrowthSeries(id=series_id, sex=sex, observations=tuple(obs))


@pytest.fixture(scope="session")
def recovery_data():
    """300 individuals from three well-separated templates, mild dropout."""
    spec = SyntheticSpec(n_individuals=300, dropout_rate=0.1)
    return simulate_cohort(spec, seed=42)


@pytest.fixture(scope="session")
def recovery_model(recovery_data):
    cohort, _ = recovery_data
    return train(cohort, ModelConfig(n_clusters=3, seed=1, max_vem_iters=30))


@pytest.fixture(scope="session")
def overspec_model(recovery_data):
    """K=8 on the same 3-template cohort; extra clusters should die out."""
    cohort, _ = recovery_data
    return train(cohort, ModelConfig(n_clusters=8, seed=2, max_vem_iters=50))


@pytest.fixture(scope="session")
def calib_spec():
    return SyntheticSpec(n_individuals=300, dropout_rate=0.0)


@pytest.fixture(scope="session")
def calib_train_cohort(calib_spec):
    cohort, _ = simulate_cohort(calib_spec, seed=7)
    return cohort


@pytest.fixture(scope="session")
def calib_test_data(calib_spec):
    from dataclasses import replace

    spec = replace(calib_spec, n_individuals=400)
    return simulate_cohort(spec, seed=8)


@pytest.fixture(scope="session")
def calib_model(calib_train_cohort):
    return train(calib_train_cohort, ModelConfig(n_clusters=3, seed=2, max_vem_iters=30))


@pytest.fixture(scope="session")
def calib_baselines(calib_train_cohort):
    return fit_baselines(calib_train_cohort)


@pytest.fixture(scope="session")
def missing_report(calib_model, calib_baselines, calib_test_data):
    cohort, _ = calib_test_data
    return run_missing_experiment(calib_model, calib_baselines, cohort, seed=5)


@pytest.fixture(scope="session")
def forecast_report(calib_model, calib_baselines, calib_test_data):
    cohort, _ = calib_test_data
    return run_forecast_experiment(calib_model, calib_baselines, cohort)


@pytest.fixture(scope="session")
def small_model():
    """Quick-to-train model for service/CLI/risk plumbing tests."""
    spec = SyntheticSpec(n_individuals=50, dropout_rate=0.0)
    cohort, _ = simulate_cohort(spec, seed=3)
    return train(cohort, ModelConfig(n_clusters=2, seed=0, max_vem_iters=10))
