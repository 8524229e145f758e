import statistics

import numpy as np
import pytest

from growthcast.errors import NoTestingPoints
from growthcast.metrics import (
    ExperimentReport,
    PredictionRecord,
    ReportRow,
    individual_coverage,
    mse,
    mse_aggregate,
    wcic95,
)


def _record(observed, predicted, lower=None, upper=None, weights=None, rid="x"):
    ages = np.arange(len(observed), dtype=float)
    return PredictionRecord(
        id=rid,
        condition="test",
        ages=ages,
        observed=np.asarray(observed, dtype=float),
        predicted_mean=np.asarray(predicted, dtype=float),
        cluster_lower=None if lower is None else np.asarray(lower, dtype=float),
        cluster_upper=None if upper is None else np.asarray(upper, dtype=float),
        weights=None if weights is None else np.asarray(weights, dtype=float),
    )


class TestMse:
    def test_perfect_prediction_is_zero(self):
        assert mse(_record([15.0, 16.0], [15.0, 16.0])) == 0.0

    def test_direct_arithmetic(self):
        # obs (1, 2), pred (2, 4) -> (1+4)/2
        assert mse(_record([1.0, 2.0], [2.0, 4.0])) == pytest.approx(2.5, abs=0)

    def test_aggregate_mean_and_sd(self):
        records = [_record([0.0], [1.0], rid="a"), _record([0.0], [np.sqrt(3.0)], rid="b")]
        mean, sd = mse_aggregate(records)
        assert mean == pytest.approx(statistics.mean([1.0, 3.0]), rel=1e-12)
        assert sd == pytest.approx(statistics.stdev([1.0, 3.0]), rel=1e-12)

    def test_no_testing_points(self):
        with pytest.raises(NoTestingPoints):
            mse(_record([], []))


class TestWcic95:
    def test_all_inside_single_cluster(self):
        record = _record(
            [15.0, 16.0],
            [15.0, 16.0],
            lower=[[14.0, 15.0]],
            upper=[[16.0, 17.0]],
            weights=[1.0],
        )
        mean, _ = wcic95([record])
        assert mean == 100.0

    def test_half_weight_half_coverage(self):
        # two clusters tau = (0.5, 0.5); every point inside cluster 1's band only
        record = _record(
            [15.0, 16.0],
            [15.0, 16.0],
            lower=[[14.0, 15.0], [20.0, 20.0]],
            upper=[[16.0, 17.0], [21.0, 21.0]],
            weights=[0.5, 0.5],
        )
        mean, _ = wcic95([record])
        assert mean == pytest.approx(50.0, abs=0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        records = []
        for i in range(20):
            obs = rng.normal(16, 1, size=4)
            records.append(
                _record(
                    obs,
                    obs + rng.normal(0, 0.1, size=4),
                    lower=[obs - rng.uniform(0.05, 1, size=4)],
                    upper=[obs + rng.uniform(0.05, 1, size=4)],
                    weights=[1.0],
                    rid=f"i{i}",
                )
            )
        forward = wcic95(records)
        backward = wcic95(records[::-1])
        assert forward[0] == pytest.approx(backward[0], rel=1e-12)
        assert mse_aggregate(records)[0] == pytest.approx(mse_aggregate(records[::-1])[0], rel=1e-12)

    def test_calibrated_gaussian_predictor_near_95(self):
        # predictor generates its own data: coverage must approach 95%
        rng = np.random.default_rng(12)
        z = 1.959963984540054
        records = []
        for i in range(400):
            mu = rng.normal(16, 2, size=6)
            sd = rng.uniform(0.3, 1.5, size=6)
            observed = rng.normal(mu, sd)
            records.append(
                _record(
                    observed,
                    mu,
                    lower=[mu - z * sd],
                    upper=[mu + z * sd],
                    weights=[1.0],
                    rid=f"c{i}",
                )
            )
        mean, _ = wcic95(records)
        assert 93.0 <= mean <= 97.0


class TestReport:
    def test_failed_fraction_bounds(self):
        with pytest.raises(ValueError):
            ReportRow("m", "c", 1.0, 0.1, None, None, failed_fraction=1.4)

    def test_csv_schema(self, tmp_path):
        report = ExperimentReport(name="t")
        report.rows.append(ReportRow("gp_mixture", "50%", 1.5, 0.3, 92.0, 10.0, 0.0))
        report.rows.append(ReportRow("spline", "50%", 4.5, 2.0, None, None, 0.25))
        path = tmp_path / "r.csv"
        report.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,condition,mse_mean,mse_sd,wcic_mean,wcic_sd,failed_fraction"
        assert lines[2].startswith("spline,50%,4.5,2.0,,,")

    def test_individual_coverage_requires_intervals(self):
        with pytest.raises(ValueError):
            individual_coverage(_record([1.0], [1.0]))
