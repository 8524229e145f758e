"""Synthetic cohort generator standing in for the non-public study data.

Each individual draws a cluster from the mixing weights; its BMI curve is
the cluster template plus an individual GP deviation plus i.i.d. noise.
Heights come from a fixed monotone template so weight/height/BMI stay
mutually consistent.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohort import Cohort, GrowthSeries, Observation
from .errors import DegenerateSpec
from .gp import KernelParams, kernel_matrix, safe_factorize

# Visit ages in months, following the study-style schedule of 20 visits
# between birth and 10 years.
DEFAULT_SCHEDULE = (
    0.0, 0.75, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 24.0, 36.0,
    48.0, 54.0, 60.0, 66.0, 72.0, 78.0, 84.0, 96.0, 108.0, 120.0,
)


def height_template(ages_months) -> np.ndarray:
    """Monotone logistic-plus-linear height curve, ~50 cm at birth to ~140 cm at 10 y.

    Fixture constant, not a contract.
    """
    t = np.asarray(ages_months, dtype=float)
    return 38.8 + 35.0 / (1.0 + np.exp(-(t - 6.0) / 8.0)) + 0.55 * t


@dataclass(frozen=True)
class BmiTemplate:
    """Cluster mean-curve shape: infancy peak plus late quadratic rebound.

    curve(t) = baseline + peak_height * exp(-(t - peak_age)^2 / (2 peak_width^2))
               + rebound * (t/120)^2
    """

    baseline: float
    peak_height: float = 3.5
    peak_age: float = 9.0
    peak_width: float = 5.0
    rebound: float = 5.0

    def curve(self, ages_months) -> np.ndarray:
        t = np.asarray(ages_months, dtype=float)
        bump = self.peak_height * np.exp(-((t - self.peak_age) ** 2) / (2.0 * self.peak_width**2))
        return self.baseline + bump + self.rebound * (t / 120.0) ** 2


# Three shapes separated mostly by infancy-peak intensity and rebound
# strength: a lean, a middle and an upper pattern rising towards BMI ~26 at
# 10 years.
DEFAULT_TEMPLATES = (
    (0.35, BmiTemplate(baseline=12.8, peak_height=2.0, rebound=2.0)),
    (0.40, BmiTemplate(baseline=14.0, peak_height=3.5, rebound=6.0)),
    (0.25, BmiTemplate(baseline=15.2, peak_height=5.5, peak_width=6.0, rebound=11.0)),
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator configuration; JSON-serializable (see docs/synthetic-spec.md)."""

    n_individuals: int
    cluster_templates: tuple[tuple[float, BmiTemplate], ...] = DEFAULT_TEMPLATES
    individual_variance: float = 1.0
    individual_lengthscale: float = 30.0
    noise_sd: float = 0.25
    visit_schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    dropout_rate: float = 0.0
    female_fraction: float = 0.5

    def __post_init__(self):
        if self.n_individuals < 1:
            raise DegenerateSpec("n_individuals must be >= 1")
        if not self.cluster_templates:
            raise DegenerateSpec("at least one cluster template required")
        weights = np.array([w for w, _ in self.cluster_templates], dtype=float)
        if np.any(weights <= 0):
            raise DegenerateSpec("mixing weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DegenerateSpec(f"mixing weights sum to {weights.sum()}, expected 1")
        if len(self.visit_schedule) == 0:
            raise DegenerateSpec("visit schedule is empty")
        sched = np.asarray(self.visit_schedule, dtype=float)
        if np.any(np.diff(sched) <= 0):
            raise DegenerateSpec("visit schedule must be strictly increasing")
        if not 0 <= self.dropout_rate < 1:
            raise DegenerateSpec(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.individual_variance < 0 or self.individual_lengthscale <= 0:
            raise DegenerateSpec("individual kernel needs variance >= 0, lengthscale > 0")
        if self.noise_sd < 0:
            raise DegenerateSpec("noise_sd must be >= 0")

    @property
    def mixing_weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.cluster_templates], dtype=float)

    @property
    def individual_kernel(self) -> KernelParams | None:
        """None when the individual deviation is switched off (zero variance)."""
        if self.individual_variance == 0:
            return None
        return KernelParams(variance=self.individual_variance, lengthscale=self.individual_lengthscale)

    def to_json(self) -> str:
        doc = {
            "n_individuals": self.n_individuals,
            "cluster_templates": [
                {"weight": w, **{k: getattr(tpl, k) for k in ("baseline", "peak_height", "peak_age", "peak_width", "rebound")}}
                for w, tpl in self.cluster_templates
            ],
            "individual_variance": self.individual_variance,
            "individual_lengthscale": self.individual_lengthscale,
            "noise_sd": self.noise_sd,
            "visit_schedule": list(self.visit_schedule),
            "dropout_rate": self.dropout_rate,
            "female_fraction": self.female_fraction,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "SyntheticSpec":
        doc = json.loads(text)
        templates = tuple(
            (
                float(entry["weight"]),
                BmiTemplate(
                    baseline=float(entry["baseline"]),
                    peak_height=float(entry.get("peak_height", 3.5)),
                    peak_age=float(entry.get("peak_age", 9.0)),
                    peak_width=float(entry.get("peak_width", 5.0)),
                    rebound=float(entry.get("rebound", 5.0)),
                ),
            )
            for entry in doc["cluster_templates"]
        )
        return SyntheticSpec(
            n_individuals=int(doc["n_individuals"]),
            cluster_templates=templates,
            individual_variance=float(doc.get("individual_variance", 1.0)),
            individual_lengthscale=float(doc.get("individual_lengthscale", 30.0)),
            noise_sd=float(doc.get("noise_sd", 0.25)),
            visit_schedule=tuple(float(v) for v in doc["visit_schedule"]),
            dropout_rate=float(doc.get("dropout_rate", 0.0)),
            female_fraction=float(doc.get("female_fraction", 0.5)),
        )

    def spec_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:12]


@dataclass
class SimulationTruth:
    """Generator-side ground truth kept out of the cohort itself."""

    schedule: np.ndarray
    labels: dict[str, int]
    curves: dict[str, np.ndarray]  # noise-free BMI (template + GP draw) on schedule


def simulate_cohort(spec: SyntheticSpec, seed: int) -> tuple[Cohort, SimulationTruth]:
    """Draw a cohort; bit-reproducible for a fixed (spec, seed)."""
    rng = np.random.default_rng(seed)
    schedule = np.asarray(spec.visit_schedule, dtype=float)
    n_visits = len(schedule)
    weights = spec.mixing_weights
    heights = height_template(schedule)

    kernel = spec.individual_kernel
    if kernel is not None:
        K = kernel_matrix(kernel, schedule, schedule)
        L, _ = safe_factorize(K + 1e-10 * kernel.variance * np.eye(n_visits))
    else:
        L = None

    id_width = len(str(spec.n_individuals))
    individuals = []
    labels: dict[str, int] = {}
    curves: dict[str, np.ndarray] = {}
    for i in range(spec.n_individuals):
        series_id = f"S{i + 1:0{id_width}d}"
        sex = "F" if rng.random() < spec.female_fraction else "M"
        cluster = int(rng.choice(len(weights), p=weights))
        curve = spec.cluster_templates[cluster][1].curve(schedule)
        if L is not None:
            curve = curve + L @ rng.standard_normal(n_visits)
        noisy = curve + spec.noise_sd * rng.standard_normal(n_visits)
        keep = rng.random(n_visits) >= spec.dropout_rate
        if not keep.any():
            keep[rng.integers(n_visits)] = True
        observations = []
        for j in np.flatnonzero(keep):
            bmi = float(noisy[j])
            if bmi <= 0:
                bmi = 0.1  # noise should never push BMI this far; keep records valid
            height = float(heights[j])
            weight = bmi * (height / 100.0) ** 2
            observations.append(
                Observation(age=float(schedule[j]), bmi=bmi, weight=weight, height=height)
            )
        individuals.append(GrowthSeries(id=series_id, sex=sex, observations=tuple(observations)))
        labels[series_id] = cluster
        curves[series_id] = curve
    cohort = Cohort(
        individuals=tuple(individuals),
        provenance=f"synthetic:seed={seed},spec={spec.spec_hash()}",
    )
    return cohort, SimulationTruth(schedule=schedule, labels=labels, curves=curves)


def write_spec(spec: SyntheticSpec, path) -> None:
    Path(path).write_text(spec.to_json(), encoding="utf-8")


def load_spec(path) -> SyntheticSpec:
    return SyntheticSpec.from_json(Path(path).read_text(encoding="utf-8"))
