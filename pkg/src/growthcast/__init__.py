"""Probabilistic modelling, clustering and forecasting of childhood BMI
trajectories, with spline and parametric growth-curve baselines, an
evaluation harness, and an overweight-probability decision tool."""

from .cohort import (
    Cohort,
    GrowthSeries,
    Observation,
    load_cohort,
    mask_random,
    split_cohort,
    truncate_after,
    write_cohort,
)
from .errors import GrowthcastError
from .gp import GaussianPosterior, KernelParams, NoiseParam, gp_condition, kernel_matrix
from .mixture import (
    MixturePrediction,
    ModelConfig,
    TrainedModel,
    credible_band,
    load_model,
    predict,
    sample_trajectories,
    save_model,
    train,
)
from .risk import OverweightSpec, RiskResult, classify_and_score, overweight_probability
from .synthetic import BmiTemplate, SyntheticSpec, simulate_cohort

__version__ = "0.1.0"

__all__ = [
    "BmiTemplate",
    "Cohort",
    "GaussianPosterior",
    "GrowthSeries",
    "GrowthcastError",
    "KernelParams",
    "MixturePrediction",
    "ModelConfig",
    "NoiseParam",
    "Observation",
    "OverweightSpec",
    "RiskResult",
    "SyntheticSpec",
    "TrainedModel",
    "classify_and_score",
    "credible_band",
    "gp_condition",
    "kernel_matrix",
    "load_cohort",
    "load_model",
    "mask_random",
    "overweight_probability",
    "predict",
    "sample_trajectories",
    "save_model",
    "simulate_cohort",
    "split_cohort",
    "train",
    "truncate_after",
    "write_cohort",
    "__version__",
]
