"""Exception types shared across the package."""


class GrowthcastError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(GrowthcastError):
    """A cohort file violates the expected schema.

    Carries the offending row number (1-based, header = row 0), the column
    name and a human-readable reason.
    """

    def __init__(self, row: int, column: str, reason: str):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class EmptyCohort(GrowthcastError):
    """No usable individuals."""


class InvalidSplitSize(GrowthcastError):
    """Requested train size does not leave both splits non-empty."""


class DegenerateSpec(GrowthcastError):
    """A synthetic-cohort spec that cannot generate data."""


class NonPositiveParam(GrowthcastError):
    """Kernel variance or lengthscale is not strictly positive."""


class NotPositiveDefinite(GrowthcastError):
    """Covariance factorization failed even at maximum jitter."""


class OptimizationDiverged(GrowthcastError):
    """Line search failed repeatedly; the objective cannot be improved."""


class InsufficientPoints(GrowthcastError):
    """An individual has too few points for the requested fit."""


class NoTestingPoints(GrowthcastError):
    """A metric was requested for an individual without testing points."""


class TargetOutOfRange(GrowthcastError):
    """Prediction targets fall outside the model's working-grid span."""


class TargetAgeMissing(GrowthcastError):
    """The risk target age is not among the prediction's target times."""


class UnknownIndividual(GrowthcastError):
    """An id was not fitted by the model being queried."""


class MissingStatus(GrowthcastError):
    """A risk result has no matching observed status."""
