"""Domain types for longitudinal growth data plus cohort I/O and splitting.

Ages are in months everywhere inside the system; conversion to years is a
presentation concern. The cohort CSV schema is
``id,sex,age_months,weight_kg,height_cm,bmi`` with empty weight/height
fields allowed.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCohort, InvalidSplitSize, SchemaError

CSV_HEADER = ["id", "sex", "age_months", "weight_kg", "height_cm", "bmi"]

# Records outside this BMI range are rejected at load time.
BMI_ACCEPT_RANGE = (5.0, 60.0)


def bmi_from_weight_height(weight_kg: float, height_cm: float) -> float:
    return weight_kg / (height_cm / 100.0) ** 2


@dataclass(frozen=True)
class Observation:
    """One visit: age in months, BMI in kg/m^2, optional raw measurements.

    If both weight and height are present they must reproduce the stored
    BMI to within 1e-9 relative.
    """

    age: float
    bmi: float
    weight: float | None = None
    height: float | None = None

    def __post_init__(self):
        if self.age < 0:
            raise ValueError(f"age must be non-negative, got {self.age}")
        if not self.bmi > 0:
            raise ValueError(f"bmi must be positive, got {self.bmi}")
        if self.weight is not None and not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        if self.height is not None and not self.height > 0:
            raise ValueError(f"height must be positive, got {self.height}")
        if self.weight is not None and self.height is not None:
            implied = bmi_from_weight_height(self.weight, self.height)
            if abs(implied - self.bmi) > 1e-9 * max(1.0, abs(self.bmi)):
                raise ValueError(
                    f"bmi {self.bmi} inconsistent with weight/height (implies {implied})"
                )


@dataclass(frozen=True)
class GrowthSeries:
    """One child's observations, sorted by strictly increasing age.

    Loaders and the synthetic generator always produce at least one
    observation; derived views (masking, truncation) may be empty and
    callers of those operations decide how to treat an empty side.
    """

    id: str
    sex: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        if self.sex not in ("F", "M"):
            raise ValueError(f"sex must be 'F' or 'M', got {self.sex!r}")
        ages = [o.age for o in self.observations]
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise ValueError(f"ages must be strictly increasing for id {self.id!r}")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def ages(self) -> np.ndarray:
        return np.array([o.age for o in self.observations], dtype=float)

    @property
    def bmi_values(self) -> np.ndarray:
        return np.array([o.bmi for o in self.observations], dtype=float)

    def replace_observations(self, observations) -> "GrowthSeries":
        return GrowthSeries(id=self.id, sex=self.sex, observations=tuple(observations))


@dataclass(frozen=True)
class Cohort:
    """A set of growth series with unique ids and a provenance tag."""

    individuals: tuple[GrowthSeries, ...]
    provenance: str

    def __post_init__(self):
        if not self.individuals:
            raise EmptyCohort("cohort has no individuals")
        ids = [s.id for s in self.individuals]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate ids in cohort: {dup[:5]}")

    def __len__(self) -> int:
        return len(self.individuals)

    def __iter__(self):
        return iter(self.individuals)

    def by_id(self, series_id: str) -> GrowthSeries:
        for s in self.individuals:
            if s.id == series_id:
                return s
        raise KeyError(series_id)

    def filter_sex(self, sex: str) -> "Cohort":
        kept = tuple(s for s in self.individuals if s.sex == sex)
        return Cohort(individuals=kept, provenance=f"{self.provenance}|sex={sex}")


@dataclass
class RowDiagnostic:
    """Why a CSV row was rejected; row numbers are 1-based data rows."""

    row: int
    column: str
    reason: str


def _parse_float(raw: str, row: int, column: str) -> float | None:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError as exc:
        raise _RowError(column, f"not a number: {raw!r}") from exc
    if not math.isfinite(value):
        raise _RowError(column, f"not finite: {raw!r}")
    return value


class _RowError(Exception):
    def __init__(self, column: str, reason: str):
        self.column = column
        self.reason = reason


def _parse_row(rec: dict, row_no: int) -> tuple[str, str, Observation]:
    series_id = (rec.get("id") or "").strip()
    if not series_id:
        raise _RowError("id", "empty id")
    sex = (rec.get("sex") or "").strip()
    if sex not in ("F", "M"):
        raise _RowError("sex", f"sex must be F or M, got {sex!r}")
    age = _parse_float(rec.get("age_months") or "", row_no, "age_months")
    if age is None:
        raise _RowError("age_months", "missing age")
    if age < 0:
        raise _RowError("age_months", f"negative age {age}")
    weight = _parse_float(rec.get("weight_kg") or "", row_no, "weight_kg")
    height = _parse_float(rec.get("height_cm") or "", row_no, "height_cm")
    bmi = _parse_float(rec.get("bmi") or "", row_no, "bmi")
    if bmi is None:
        if weight is None or height is None:
            raise _RowError("bmi", "bmi missing and not computable from weight/height")
        bmi = bmi_from_weight_height(weight, height)
    if not (BMI_ACCEPT_RANGE[0] < bmi < BMI_ACCEPT_RANGE[1]):
        raise _RowError("bmi", f"bmi {bmi} outside accepted range {BMI_ACCEPT_RANGE}")
    try:
        obs = Observation(age=age, bmi=bmi, weight=weight, height=height)
    except ValueError as exc:
        raise _RowError("bmi", str(exc)) from exc
    return series_id, sex, obs


def load_cohort(path, rejected: list[RowDiagnostic] | None = None) -> Cohort:
    """Load a cohort CSV.

    Structural problems (bad header, duplicate (id, age) pairs, conflicting
    sex for one id) raise SchemaError. Value-level problems reject the row
    and are appended to `rejected` when a list is supplied.

    Raises FileNotFoundError, SchemaError, EmptyCohort.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    per_id: dict[str, dict] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != CSV_HEADER:
            raise SchemaError(0, "header", f"expected columns {CSV_HEADER}, got {reader.fieldnames}")
        for row_no, rec in enumerate(reader, start=1):
            try:
                series_id, sex, obs = _parse_row(rec, row_no)
            except _RowError as err:
                if rejected is not None:
                    rejected.append(RowDiagnostic(row=row_no, column=err.column, reason=err.reason))
                continue
            entry = per_id.setdefault(series_id, {"sex": sex, "obs": {}, "first_row": row_no})
            if entry["sex"] != sex:
                raise SchemaError(row_no, "sex", f"conflicting sex for id {series_id!r}")
            if obs.age in entry["obs"]:
                raise SchemaError(row_no, "age_months", f"duplicate (id, age) = ({series_id!r}, {obs.age})")
            entry["obs"][obs.age] = obs
    individuals = []
    for series_id, entry in per_id.items():
        observations = tuple(entry["obs"][a] for a in sorted(entry["obs"]))
        individuals.append(GrowthSeries(id=series_id, sex=entry["sex"], observations=observations))
    if not individuals:
        raise EmptyCohort(f"no valid rows in {path}")
    return Cohort(individuals=tuple(individuals), provenance=f"file:{path}")


def write_cohort(cohort: Cohort, path) -> None:
    """Write the CSV form; floats use repr so a reload is value-identical."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for series in cohort:
            for obs in series.observations:
                writer.writerow(
                    [
                        series.id,
                        series.sex,
                        repr(obs.age),
                        "" if obs.weight is None else repr(obs.weight),
                        "" if obs.height is None else repr(obs.height),
                        repr(obs.bmi),
                    ]
                )


def split_cohort(cohort: Cohort, n_train: int, seed: int) -> tuple[Cohort, Cohort]:
    """Deterministic random split preserving relative order within each side."""
    n = len(cohort)
    if not 0 < n_train < n:
        raise InvalidSplitSize(f"n_train must be in (0, {n}), got {n_train}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    train = Cohort(
        individuals=tuple(cohort.individuals[i] for i in train_idx),
        provenance=f"{cohort.provenance}|train(seed={seed},n={n_train})",
    )
    test = Cohort(
        individuals=tuple(cohort.individuals[i] for i in test_idx),
        provenance=f"{cohort.provenance}|test(seed={seed},n={n - n_train})",
    )
    return train, test


def mask_random(series: GrowthSeries, ratio: float, seed: int) -> tuple[GrowthSeries, GrowthSeries]:
    """Randomly hide a fraction of observations.

    The removed count is round-half-up(ratio * n), capped so at least one
    point is retained. Returns (retained, removed); their union is exactly
    the original observations.
    """
    if not 0 <= ratio < 1:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")
    n = len(series)
    if n == 0:
        raise ValueError("cannot mask an empty series")
    n_removed = int(math.floor(ratio * n + 0.5))
    n_removed = min(n_removed, n - 1)
    rng = np.random.default_rng(seed)
    removed_idx = set(rng.choice(n, size=n_removed, replace=False).tolist())
    retained = tuple(o for i, o in enumerate(series.observations) if i not in removed_idx)
    removed = tuple(o for i, o in enumerate(series.observations) if i in removed_idx)
    return series.replace_observations(retained), series.replace_observations(removed)


def truncate_after(series: GrowthSeries, cutoff_age: float) -> tuple[GrowthSeries, GrowthSeries]:
    """Partition into (age <= cutoff, age > cutoff). Either side may be empty."""
    if not cutoff_age > 0:
        raise ValueError(f"cutoff_age must be positive, got {cutoff_age}")
    observed = tuple(o for o in series.observations if o.age <= cutoff_age)
    testing = tuple(o for o in series.observations if o.age > cutoff_age)
    return series.replace_observations(observed), series.replace_observations(testing)


def stable_seed(*parts) -> int:
    """Order-sensitive 63-bit seed derived from the parts' repr; process-stable."""
    blob = "␟".join(repr(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(blob).digest()
    return int.from_bytes(digest[:8], "big") >> 1
