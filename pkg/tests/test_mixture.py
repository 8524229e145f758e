import numpy as np
import pytest
from scipy.linalg import cho_solve

from growthcast.cohort import Cohort
from growthcast.errors import TargetOutOfRange
from growthcast.gp import (
    GaussianPosterior,
    KernelParams,
    NoiseParam,
    gaussian_logpdf_cho,
    gp_condition,
    kernel_matrix,
    safe_factorize,
)
from growthcast.mixture import (
    LOG2PI,
    MixturePrediction,
    ModelConfig,
    TrainingState,
    credible_band,
    e_step,
    elbo,
    gamma_objective,
    individual_objective,
    load_model,
    m_step,
    mean_process_gram,
    predict,
    sample_trajectories,
    save_model,
    train,
)
from growthcast.optimize import ascend
from growthcast.synthetic import SyntheticSpec, simulate_cohort

from conftest import make_series

COARSE_GRID = tuple(np.arange(0.0, 121.0, 12.0).tolist() + [120.0])[:-1]  # 0,12,...,120


def _coarse_config(k, **kw):
    grid = tuple(np.arange(0.0, 126.0, 6.0)[np.arange(0.0, 126.0, 6.0) <= 120.0].tolist())
    return ModelConfig(n_clusters=k, working_grid=grid, **kw)


@pytest.fixture(scope="module")
def small_cohort():
    cohort, _ = simulate_cohort(SyntheticSpec(n_individuals=16, dropout_rate=0.3), seed=21)
    return cohort


class TestEStep:
    def test_empty_cluster_keeps_prior(self, small_cohort):
        config = _coarse_config(2, seed=0)
        n = len(small_cohort)
        tau = np.column_stack([np.ones(n), np.zeros(n)])
        state = TrainingState.from_cohort(small_cohort, config, tau=tau)
        posteriors, _ = e_step(state)
        gram = mean_process_gram(state.mean_kernels[1], state.grid)
        assert np.max(np.abs(posteriors[1].mean - state.m0)) < 1e-6
        assert np.max(np.abs(posteriors[1].covariance - gram)) < 1e-6

    def test_single_individual_matches_gp_condition_oracle(self):
        grid = np.arange(0.0, 121.0, 6.0)
        values = 15.0 + np.sin(grid / 20.0)
        series = make_series("solo", grid, values)
        cohort = Cohort(individuals=(series,), provenance="t")
        config = ModelConfig(n_clusters=1, working_grid=tuple(grid))
        state = TrainingState.from_cohort(cohort, config)
        posteriors, tau = e_step(state)
        assert tau[0, 0] == 1.0

        # oracle: joint Gaussian over (mean process, observations), conditioned
        G = len(grid)
        gram = mean_process_gram(state.mean_kernels[0], grid)
        k_ind = kernel_matrix(state.ind_kernels[0], grid, grid)
        joint_mean = np.concatenate([state.m0, state.m0])
        joint_cov = np.block([[gram, gram], [gram, gram + k_ind]])
        oracle = gp_condition(
            joint_mean, joint_cov, np.arange(G, 2 * G), values, state.noises[0], np.arange(G)
        )
        assert np.max(np.abs(posteriors[0].mean - oracle.mean)) < 1e-6
        assert np.max(np.abs(posteriors[0].covariance - oracle.covariance)) < 1e-5

    def test_identical_individuals_split_membership(self):
        ages = np.array([0.0, 12.0, 36.0, 72.0, 120.0])
        values = np.array([13.5, 16.0, 15.2, 15.8, 17.0])
        cohort = Cohort(
            individuals=(make_series("a", ages, values), make_series("b", ages, values)),
            provenance="t",
        )
        config = _coarse_config(2)
        state = TrainingState.from_cohort(cohort, config, tau=np.full((2, 2), 0.5))
        _, tau = e_step(state)
        assert np.allclose(tau, 0.5, atol=1e-12)

    def test_rows_stochastic(self, small_cohort):
        state = TrainingState.from_cohort(small_cohort, _coarse_config(3, seed=4))
        _, tau = e_step(state)
        assert np.allclose(tau.sum(axis=1), 1.0, atol=1e-9)
        assert tau.min() >= 0.0 and tau.max() <= 1.0


def _fd_check(fun, x0, h=1e-5):
    _, grad = fun(x0)
    fd = np.empty_like(x0)
    for j in range(len(x0)):
        up, down = x0.copy(), x0.copy()
        up[j] += h
        down[j] -= h
        fd[j] = (fun(up)[0] - fun(down)[0]) / (2 * h)
    return grad, fd


class TestMStep:
    @pytest.fixture()
    def prepared_state(self, small_cohort):
        state = TrainingState.from_cohort(small_cohort, _coarse_config(2, seed=1))
        e_step(state)
        return state

    def test_uniform_tau_gives_uniform_pi(self, prepared_state):
        prepared_state.tau = np.full_like(prepared_state.tau, 0.5)
        m_step(prepared_state)
        assert np.allclose(prepared_state.pi, [0.5, 0.5], atol=1e-15)

    def test_gamma_gradient_matches_finite_differences(self, prepared_state):
        fun = gamma_objective(prepared_state, 0)
        for x0 in ([0.1, 3.0], [-0.5, 2.5], [0.4, 3.5]):
            grad, fd = _fd_check(fun, np.array(x0))
            assert np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)) < 1e-5

    def test_individual_gradient_matches_finite_differences(self, prepared_state):
        fun = individual_objective(prepared_state)
        for x0 in ([0.0, 3.2, -2.0], [-0.7, 2.8, -1.2]):
            grad, fd = _fd_check(fun, np.array(x0))
            assert np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)) < 1e-5

    def test_objective_never_decreases(self, prepared_state):
        before = elbo(prepared_state)
        m_step(prepared_state)
        after = elbo(prepared_state)
        assert after >= before - 1e-8


class TestTrain:
    def test_single_cluster_degeneracy(self, small_cohort):
        model = train(small_cohort, _coarse_config(1, max_vem_iters=3))
        assert np.allclose(model.memberships, 1.0)
        assert np.allclose(model.mixing, [1.0])

    def test_per_individual_hyperparameters_variant(self, small_cohort):
        config = _coarse_config(2, seed=3, max_vem_iters=3, shared_individual_hypers=False)
        model = train(small_cohort, config)
        assert np.all(np.diff(model.training_log) > -1e-8)
        series = small_cohort.individuals[0]
        prediction = predict(model, series, [30.0, 90.0])
        assert np.all(np.isfinite(prediction.mean))

    def test_objective_trace_non_decreasing(self, recovery_model):
        diffs = np.diff(recovery_model.training_log)
        assert np.all(diffs > -1e-8)

    def test_memberships_stochastic_and_mixing_simplex(self, recovery_model):
        tau = recovery_model.memberships
        assert np.allclose(tau.sum(axis=1), 1.0, atol=1e-9)
        assert tau.min() >= 0.0
        assert abs(recovery_model.mixing.sum() - 1.0) < 1e-12


def _direct_single_mean(cohort, config):
    """Plain two-level model (one shared mean process), written without any
    mixture machinery; used to pin the K=1 degeneracy of the VEM."""
    state = TrainingState.from_cohort(cohort, config)  # snapping + inits only
    grid, m0 = state.grid, state.m0
    G = len(grid)
    gamma = state.mean_kernels[0]
    theta = state.ind_kernels[0]
    noise = state.noises[0]
    idx_list, val_list = state.idx_list, state.val_list
    sq_grid = (grid.reshape(-1, 1) - grid.reshape(1, -1)) ** 2

    def e_update():
        gram = mean_process_gram(gamma, grid)
        Lg, _ = safe_factorize(gram)
        gram_inv = cho_solve((Lg, True), np.eye(G))
        prec = gram_inv.copy()
        rhs = gram_inv @ m0
        for idx, vals in zip(idx_list, val_list):
            t = grid[idx]
            psi = kernel_matrix(theta, t, t) + noise.noise_variance * np.eye(len(t))
            Lp, _ = safe_factorize(psi)
            inv = cho_solve((Lp, True), np.eye(len(t)))
            prec[np.ix_(idx, idx)] += inv
            rhs[idx] += inv @ vals
        L, _ = safe_factorize(0.5 * (prec + prec.T))
        cov = cho_solve((L, True), np.eye(G))
        return cho_solve((L, True), rhs), 0.5 * (cov + cov.T)

    m_hat, c_hat = e_update()
    for _ in range(config.max_vem_iters):
        # M: mean-process kernel
        resid = m_hat - m0
        def gamma_fun(x):
            v, ell = float(np.exp(x[0])), float(np.exp(x[1]))
            core = v * np.exp(-sq_grid / (2.0 * ell**2))
            gram = core + 1e-6 * v * np.eye(G)
            L, _ = safe_factorize(gram)
            alpha = cho_solve((L, True), resid)
            inv = cho_solve((L, True), np.eye(G))
            logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
            value = -0.5 * float(resid @ alpha) - 0.5 * logdet - 0.5 * float(np.sum(inv * c_hat)) - 0.5 * G * LOG2PI
            inner = np.outer(alpha, alpha) - inv + inv @ c_hat @ inv
            return value, np.array([
                0.5 * float(np.sum(inner * gram)),
                0.5 * float(np.sum(inner * (core * sq_grid / ell**2))),
            ])
        x, _, _ = ascend(gamma_fun, gamma.log_vector(), max_iters=config.m_step_max_iters, tol=1e-6)
        gamma = KernelParams.from_log_vector(x)

        # M: individual kernel and noise from fixed second moments
        Bs = []
        for idx, vals in zip(idx_list, val_list):
            r = vals - m_hat[idx]
            Bs.append(np.outer(r, r) + c_hat[np.ix_(idx, idx)])
        def theta_fun(x):
            v, ell, nv = float(np.exp(x[0])), float(np.exp(x[1])), float(np.exp(x[2]))
            value, grad = 0.0, np.zeros(3)
            for idx, B in zip(idx_list, Bs):
                t = grid[idx]
                sq = (t.reshape(-1, 1) - t.reshape(1, -1)) ** 2
                core = v * np.exp(-sq / (2.0 * ell**2))
                S = core + nv * np.eye(len(t))
                L, _ = safe_factorize(S)
                inv = cho_solve((L, True), np.eye(len(t)))
                logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
                value += -0.5 * float(np.sum(inv * B)) - 0.5 * (logdet + len(t) * LOG2PI)
                inner = inv @ B @ inv - inv
                grad[0] += 0.5 * float(np.sum(inner * core))
                grad[1] += 0.5 * float(np.sum(inner * (core * sq / ell**2)))
                grad[2] += 0.5 * nv * float(np.trace(inner))
            return value, grad
        x0 = np.append(theta.log_vector(), np.log(noise.noise_variance))
        x, _, _ = ascend(theta_fun, x0, max_iters=config.m_step_max_iters, tol=1e-6,
                         lower_bounds=np.array([-np.inf, -np.inf, np.log(1e-6)]))
        theta = KernelParams.from_log_vector(x[:2])
        noise = NoiseParam(float(np.exp(x[2])))
        m_hat, c_hat = e_update()

    def direct_predict(series, times):
        times = np.asarray(times, dtype=float)
        joint = np.concatenate([series.ages, times])
        W = np.zeros((len(joint), G))
        for j, t in enumerate(joint):
            pos = int(np.searchsorted(grid, t, side="right") - 1)
            pos = min(max(pos, 0), G - 2)
            frac = (t - grid[pos]) / (grid[pos + 1] - grid[pos])
            W[j, pos] = 1.0 - frac
            W[j, pos + 1] += frac
        prior_mean = W @ m_hat
        prior_cov = W @ c_hat @ W.T + kernel_matrix(theta, joint, joint)
        n_obs = len(series.ages)
        post = gp_condition(prior_mean, prior_cov, np.arange(n_obs), series.bmi_values,
                            noise, np.arange(n_obs, len(joint)))
        return post.mean, post.covariance + noise.noise_variance * np.eye(len(times))

    return direct_predict


class TestSingleMeanEquivalence:
    def test_k1_matches_direct_two_level_model(self):
        cohort, _ = simulate_cohort(SyntheticSpec(n_individuals=10, dropout_rate=0.55), seed=33)
        # every individual keeps a distinct visit subset for this seed
        assert len({tuple(s.ages.tolist()) for s in cohort}) == len(cohort)
        config = _coarse_config(1, max_vem_iters=3, vem_tolerance=-1.0)
        model = train(cohort, config)
        direct_predict = _direct_single_mean(cohort, config)
        times = np.array([6.0, 30.0, 66.0, 114.0])
        for series in cohort.individuals[:4]:
            mine = predict(model, series, times)
            d_mean, d_cov = direct_predict(series, times)
            assert np.max(np.abs(mine.per_cluster[0].mean - d_mean)) < 1e-8
            assert np.max(np.abs(mine.per_cluster[0].covariance - d_cov)) < 1e-8
            assert mine.weights[0] == 1.0


class TestPredict:
    def test_empty_series_returns_prior_mixture(self, calib_model, calib_test_data):
        cohort, _ = calib_test_data
        empty = cohort.individuals[0].replace_observations(())
        times = np.array([0.0, 45.5, 120.0])
        prediction = predict(calib_model, empty, times)
        assert np.array_equal(prediction.weights, calib_model.mixing)
        expected = calib_model.mixing @ np.vstack(
            [np.interp(times, calib_model.grid, m) for m in calib_model.hyper_means]
        )
        assert np.allclose(prediction.mean, expected, atol=1e-10)

    def test_dense_observations_interpolated(self):
        spec = SyntheticSpec(n_individuals=30, dropout_rate=0.0, noise_sd=0.01)
        cohort, _ = simulate_cohort(spec, seed=17)
        model = train(cohort, ModelConfig(n_clusters=2, seed=0, max_vem_iters=8))
        series = cohort.individuals[0]
        prediction = predict(model, series, series.ages)
        assert np.max(np.abs(prediction.mean - series.bmi_values)) < 0.05

    def test_uncertainty_shrinks_with_more_observations(self, calib_model, calib_test_data):
        cohort, _ = calib_test_data
        series = cohort.individuals[3]
        targets = np.arange(73.0, 121.0, 6.0)
        from growthcast.cohort import truncate_after

        variances = []
        for cutoff in (24.0, 48.0, 72.0):
            observed, _ = truncate_after(series, cutoff)
            prediction = predict(calib_model, observed, targets)
            variances.append(float(np.mean(prediction.variance)))
        assert variances[0] >= variances[1] >= variances[2]

    def test_mixture_mean_is_weighted_cluster_means(self, calib_model, calib_test_data):
        cohort, _ = calib_test_data
        prediction = predict(calib_model, cohort.individuals[5], [12.0, 90.0])
        assert np.array_equal(prediction.mean, prediction.weights @ prediction.cluster_means)

    def test_target_out_of_range(self, calib_model, calib_test_data):
        cohort, _ = calib_test_data
        with pytest.raises(TargetOutOfRange):
            predict(calib_model, cohort.individuals[0], [125.0])


def _mixture_fixture(means, sds, weights, times=(120.0,)):
    times = np.asarray(times, dtype=float)
    posts = [
        GaussianPosterior(times=times, mean=np.full(len(times), m), covariance=np.eye(len(times)) * s**2)
        for m, s in zip(means, sds)
    ]
    return MixturePrediction(target_times=times, per_cluster=posts, weights=np.asarray(weights, dtype=float))


class TestSampleTrajectories:
    def test_degenerate_returns_mean(self):
        pred = _mixture_fixture([18.0], [0.0], [1.0], times=(60.0, 120.0))
        rows = sample_trajectories(pred, 5, seed=0)
        assert np.array_equal(rows, np.full((5, 2), 18.0))

    def test_monte_carlo_mean_converges(self):
        pred = _mixture_fixture([20.0], [1.5], [1.0])
        rows = sample_trajectories(pred, 100_000, seed=1)
        se = 1.5 / np.sqrt(100_000)
        assert abs(rows.mean() - 20.0) < 4 * se

    def test_degenerate_weights_choose_one_cluster(self):
        pred = _mixture_fixture([0.0, 1000.0], [1.0, 1.0], [1.0, 0.0])
        rows = sample_trajectories(pred, 500, seed=2)
        assert np.all(np.abs(rows - 0.0) < 10.0)

    def test_deterministic_per_seed(self):
        pred = _mixture_fixture([15.0, 19.0], [1.0, 2.0], [0.3, 0.7], times=(60.0, 120.0))
        assert np.array_equal(sample_trajectories(pred, 50, seed=9), sample_trajectories(pred, 50, seed=9))


class TestCredibleBand:
    def test_single_cluster_normal_band(self):
        pred = _mixture_fixture([16.0], [1.2], [1.0])
        band = credible_band(pred, 0.95)
        assert band.lower[0] == pytest.approx(16.0 - 1.959964 * 1.2, abs=2e-5)
        assert band.upper[0] == pytest.approx(16.0 + 1.959964 * 1.2, abs=2e-5)

    def test_identical_clusters_collapse(self):
        single = credible_band(_mixture_fixture([17.0], [0.8], [1.0]), 0.95)
        double = credible_band(_mixture_fixture([17.0, 17.0], [0.8, 0.8], [0.5, 0.5]), 0.95)
        assert double.lower[0] == pytest.approx(single.lower[0], abs=1e-5)
        assert double.upper[0] == pytest.approx(single.upper[0], abs=1e-5)

    def test_bimodal_band_matches_monte_carlo(self):
        pred = _mixture_fixture([0.0, 4.0], [1.0, 1.0], [0.5, 0.5])
        band = credible_band(pred, 0.95)
        rng = np.random.default_rng(7)
        n = 10_000_000
        comp = rng.random(n) < 0.5
        draws = np.where(comp, rng.normal(0.0, 1.0, n), rng.normal(4.0, 1.0, n))
        lo, hi = np.quantile(draws, [0.025, 0.975])
        assert abs(band.lower[0] - lo) < 0.01
        assert abs(band.upper[0] - hi) < 0.01


class TestSerialization:
    def test_round_trip_reproduces_predictions(self, small_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(small_model, path)
        again = load_model(path)
        series = make_series("q", [3.0, 24.0, 60.0], [15.5, 16.5, 15.8])
        times = np.array([12.0, 90.0, 120.0])
        a = predict(small_model, series, times)
        b = predict(again, series, times)
        assert np.max(np.abs(a.mean - b.mean)) < 1e-12
        assert np.max(np.abs(a.weights - b.weights)) < 1e-12
        for pa, pb in zip(a.per_cluster, b.per_cluster):
            assert np.max(np.abs(pa.covariance - pb.covariance)) < 1e-12
