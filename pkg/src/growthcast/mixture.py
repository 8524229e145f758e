"""Multi-task GP mixture for trajectory clustering and prediction.

Every individual's BMI curve is a cluster-specific mean process plus an
individual GP deviation plus observation noise. Training alternates a
variational E-step (hyper-posterior over each cluster's mean process on a
working grid, then membership probabilities) with an M-step (closed-form
mixing weights, gradient ascent on kernel and noise hyperparameters). The
evidence lower bound is tracked and must never decrease.

Predictions for an individual are per-cluster Gaussian posteriors obtained
by conditioning on its observations, combined with membership weights into
a Gaussian-mixture predictive distribution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cho_solve
from scipy.special import logsumexp, ndtr
from scipy.stats import norm

from .cohort import Cohort, GrowthSeries
from .errors import EmptyCohort, TargetOutOfRange
from .gp import (
    NOISE_FLOOR,
    GaussianPosterior,
    KernelParams,
    NoiseParam,
    gaussian_logpdf_cho,
    gp_condition,
    kernel_matrix,
    safe_factorize,
)
from .optimize import ascend

logger = logging.getLogger(__name__)

LOG2PI = float(np.log(2.0 * np.pi))

# Relative nugget kept inside every mean-process gram matrix. A fixed,
# parameter-smooth nugget (rather than escalating jitter) keeps the VEM
# objective continuous, which the monotonicity guarantee needs.
MEAN_NUGGET = 1e-6

MODEL_FORMAT_VERSION = 1

# Ages (months) at which per-individual summaries are taken for k-means
# initialization of the memberships.
INIT_SUMMARY_AGES = (3.0, 24.0, 72.0, 120.0)


def default_working_grid() -> np.ndarray:
    """Uniform 1-month lattice over [0, 120]: 121 points."""
    return np.arange(0.0, 121.0)


def mean_process_gram(params: KernelParams, times) -> np.ndarray:
    """Kernel gram of a cluster mean process, including its fixed nugget."""
    t = np.asarray(times, dtype=float)
    return kernel_matrix(params, t, t) + MEAN_NUGGET * params.variance * np.eye(len(t))


@dataclass(frozen=True)
class ModelConfig:
    n_clusters: int
    shared_individual_hypers: bool = True
    max_vem_iters: int = 30
    vem_tolerance: float = 1e-2
    working_grid: tuple[float, ...] | None = None
    seed: int = 0
    m_step_max_iters: int = 200

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        grid = self.grid
        if np.any(np.diff(grid) <= 0):
            raise ValueError("working grid must be strictly increasing")
        if grid[0] > 0 or grid[-1] < 120:
            raise ValueError("working grid must cover [0, 120] months")

    @property
    def grid(self) -> np.ndarray:
        if self.working_grid is None:
            return default_working_grid()
        return np.asarray(self.working_grid, dtype=float)


@dataclass
class _Group:
    """Individuals sharing one snapped index set (and, if not shared, one
    individual each)."""

    idx: np.ndarray          # grid indices, sorted
    times: np.ndarray        # grid[idx]
    sq: np.ndarray           # squared time distances within the group
    members: list[int]       # positions into the cohort ordering
    values: np.ndarray       # (n_members, n_idx)


@dataclass
class TrainingState:
    """Mutable VEM state over a snapped cohort."""

    config: ModelConfig
    grid: np.ndarray
    ids: list[str]
    idx_list: list[np.ndarray]
    val_list: list[np.ndarray]
    groups: list[_Group]
    group_of: list[int]
    m0: np.ndarray
    pi: np.ndarray
    tau: np.ndarray
    mean_kernels: list[KernelParams]
    ind_kernels: list[KernelParams]   # length 1 when shared
    noises: list[NoiseParam]          # parallel to ind_kernels
    hyper_means: list[np.ndarray] = field(default_factory=list)
    hyper_covs: list[np.ndarray] = field(default_factory=list)
    hyper_cov_logdets: list[float] = field(default_factory=list)
    elbo_trace: list[float] = field(default_factory=list)

    @property
    def n_individuals(self) -> int:
        return len(self.ids)

    @property
    def shared(self) -> bool:
        return self.config.shared_individual_hypers

    def kernel_for_group(self, g: int) -> tuple[KernelParams, NoiseParam]:
        if self.shared:
            return self.ind_kernels[0], self.noises[0]
        member = self.groups[g].members[0]
        return self.ind_kernels[member], self.noises[member]

    @staticmethod
    def from_cohort(cohort: Cohort, config: ModelConfig, tau: np.ndarray | None = None) -> "TrainingState":
        return _build_state(cohort, config, tau)


def _snap_to_grid(grid: np.ndarray, ages: np.ndarray) -> np.ndarray:
    if ages.size and (ages.min() < grid[0] - 1e-9 or ages.max() > grid[-1] + 1e-9):
        raise TargetOutOfRange(
            f"ages [{ages.min()}, {ages.max()}] outside working grid span [{grid[0]}, {grid[-1]}]"
        )
    pos = np.searchsorted(grid, ages)
    pos = np.clip(pos, 1, len(grid) - 1)
    left = grid[pos - 1]
    right = grid[pos]
    return np.where(ages - left <= right - ages, pos - 1, pos).astype(int)


def _build_state(cohort: Cohort, config: ModelConfig, tau_override: np.ndarray | None) -> TrainingState:
    if len(cohort) == 0:
        raise EmptyCohort("cannot train on an empty cohort")
    grid = config.grid
    K = config.n_clusters
    ids, idx_list, val_list = [], [], []
    for series in cohort:
        ages = series.ages
        if len(ages) == 0:
            raise EmptyCohort(f"individual {series.id!r} has no observations")
        snapped = _snap_to_grid(grid, ages)
        values = series.bmi_values
        # observations snapping onto one lattice point are averaged
        uniq, inverse = np.unique(snapped, return_inverse=True)
        merged = np.zeros(len(uniq))
        counts = np.zeros(len(uniq))
        np.add.at(merged, inverse, values)
        np.add.at(counts, inverse, 1.0)
        ids.append(series.id)
        idx_list.append(uniq)
        val_list.append(merged / counts)

    n = len(ids)
    # group individuals that share a snapped index set (per-individual
    # hyperparameters force singleton groups)
    groups: list[_Group] = []
    group_of = [0] * n
    if config.shared_individual_hypers:
        key_to_group: dict[tuple, int] = {}
        for i, idx in enumerate(idx_list):
            key = tuple(idx.tolist())
            g = key_to_group.get(key)
            if g is None:
                g = len(groups)
                key_to_group[key] = g
                times = grid[idx]
                sq = (times.reshape(-1, 1) - times.reshape(1, -1)) ** 2
                groups.append(_Group(idx=idx, times=times, sq=sq, members=[], values=None))
            groups[g].members.append(i)
            group_of[i] = g
    else:
        for i, idx in enumerate(idx_list):
            times = grid[idx]
            sq = (times.reshape(-1, 1) - times.reshape(1, -1)) ** 2
            groups.append(_Group(idx=idx, times=times, sq=sq, members=[i], values=None))
            group_of[i] = i
    for g in groups:
        g.values = np.vstack([val_list[i] for i in g.members])

    # grand mean curve as the mean-process prior mean
    sums = np.zeros(len(grid))
    counts = np.zeros(len(grid))
    for idx, vals in zip(idx_list, val_list):
        sums[idx] += vals
        counts[idx] += 1.0
    covered = counts > 0
    m0 = np.empty(len(grid))
    m0[covered] = sums[covered] / counts[covered]
    if not covered.all():
        m0 = np.interp(grid, grid[covered], m0[covered])

    all_values = np.concatenate(val_list)
    v0 = float(np.var(all_values))
    if v0 <= 0:
        v0 = 1.0
    kernel0 = KernelParams(variance=v0, lengthscale=24.0)
    noise0 = NoiseParam(noise_variance=max(0.05 * v0, NOISE_FLOOR))

    if tau_override is not None:
        tau = np.asarray(tau_override, dtype=float).copy()
        if tau.shape != (n, K):
            raise ValueError(f"tau override must be shape ({n}, {K})")
    elif K == 1:
        tau = np.ones((n, 1))
    else:
        rng = np.random.default_rng(config.seed)
        summaries = np.empty((n, len(INIT_SUMMARY_AGES)))
        for i, series in enumerate(cohort):
            summaries[i] = np.interp(INIT_SUMMARY_AGES, series.ages, series.bmi_values)
        _, labels = kmeans2(summaries, K, minit="++", seed=rng)
        tau = np.zeros((n, K))
        tau[np.arange(n), labels] = 1.0

    return TrainingState(
        config=config,
        grid=grid,
        ids=ids,
        idx_list=idx_list,
        val_list=val_list,
        groups=groups,
        group_of=group_of,
        m0=m0,
        pi=np.full(K, 1.0 / K),
        tau=tau,
        mean_kernels=[kernel0] * K,
        ind_kernels=[kernel0] if config.shared_individual_hypers else [kernel0] * n,
        noises=[noise0] if config.shared_individual_hypers else [noise0] * n,
    )


def _psi_factors(state: TrainingState) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Per group: (cholesky of Psi, Psi^{-1}, logdet Psi)."""
    out = []
    for g_idx, group in enumerate(state.groups):
        kernel, noise = state.kernel_for_group(g_idx)
        psi = kernel.variance * np.exp(-group.sq / (2.0 * kernel.lengthscale**2))
        psi = psi + noise.noise_variance * np.eye(len(group.idx))
        L, _ = safe_factorize(psi)
        inv = cho_solve((L, True), np.eye(len(group.idx)))
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        out.append((L, inv, logdet))
    return out


def _data_loglik_matrix(state: TrainingState, psi) -> np.ndarray:
    """(N, K) matrix of log pi_k + E_q[log N(y_i; mu_k(t_i), Psi_i)]."""
    n, K = state.tau.shape
    with np.errstate(divide="ignore"):
        log_pi = np.where(state.pi > 0, np.log(np.maximum(state.pi, 1e-300)), -np.inf)
    ll = np.empty((n, K))
    for g_idx, group in enumerate(state.groups):
        L, inv, logdet = psi[g_idx]
        t = len(group.idx)
        base = -0.5 * logdet - 0.5 * t * LOG2PI
        for k in range(K):
            resid = group.values - state.hyper_means[k][group.idx]
            alpha = cho_solve((L, True), resid.T)
            quad = np.einsum("ij,ji->i", resid, alpha)
            trace = float(np.sum(inv * state.hyper_covs[k][np.ix_(group.idx, group.idx)]))
            ll[group.members, k] = log_pi[k] + base - 0.5 * quad - 0.5 * trace
    return ll


def e_step(state: TrainingState) -> tuple[list[GaussianPosterior], np.ndarray]:
    """Update hyper-posteriors then memberships; returns both."""
    grid = state.grid
    G = len(grid)
    K = state.config.n_clusters
    psi = _psi_factors(state)
    eye = np.eye(G)

    hyper_means, hyper_covs, logdets = [], [], []
    for k in range(K):
        gram = mean_process_gram(state.mean_kernels[k], grid)
        Lg, _ = safe_factorize(gram)
        gram_inv = cho_solve((Lg, True), eye)
        prec = gram_inv.copy()
        rhs = gram_inv @ state.m0
        for g_idx, group in enumerate(state.groups):
            tau_g = state.tau[group.members, k]
            w = float(tau_g.sum())
            if w == 0.0:
                continue
            _, inv, _ = psi[g_idx]
            sel = np.ix_(group.idx, group.idx)
            prec[sel] += w * inv
            rhs[group.idx] += inv @ (tau_g @ group.values)
        Lp, _ = safe_factorize(0.5 * (prec + prec.T))
        cov = cho_solve((Lp, True), eye)
        cov = 0.5 * (cov + cov.T)
        mean = cho_solve((Lp, True), rhs)
        hyper_means.append(mean)
        hyper_covs.append(cov)
        logdets.append(-2.0 * float(np.sum(np.log(np.diag(Lp)))))
    state.hyper_means = hyper_means
    state.hyper_covs = hyper_covs
    state.hyper_cov_logdets = logdets

    ll = _data_loglik_matrix(state, psi)
    state.tau = np.exp(ll - logsumexp(ll, axis=1, keepdims=True))

    posteriors = [
        GaussianPosterior(times=grid, mean=hyper_means[k], covariance=hyper_covs[k])
        for k in range(K)
    ]
    return posteriors, state.tau


def gamma_objective(state: TrainingState, k: int):
    """Expected complete-data log-likelihood term for cluster k's mean kernel.

    Returns fun(x) -> (value, gradient) over x = (log variance, log lengthscale).
    """
    grid = state.grid
    G = len(grid)
    sq = (grid.reshape(-1, 1) - grid.reshape(1, -1)) ** 2
    resid = state.hyper_means[k] - state.m0
    C = state.hyper_covs[k]
    eye = np.eye(G)

    def fun(x):
        v, ell = float(np.exp(x[0])), float(np.exp(x[1]))
        core = v * np.exp(-sq / (2.0 * ell**2))
        gram = core + MEAN_NUGGET * v * eye
        L, _ = safe_factorize(gram)
        alpha = cho_solve((L, True), resid)
        inv = cho_solve((L, True), eye)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        value = (
            -0.5 * float(resid @ alpha)
            - 0.5 * logdet
            - 0.5 * float(np.sum(inv * C))
            - 0.5 * G * LOG2PI
        )
        inner = np.outer(alpha, alpha) - inv + inv @ C @ inv
        grad = np.array(
            [
                0.5 * float(np.sum(inner * gram)),
                0.5 * float(np.sum(inner * (core * sq / ell**2))),
            ]
        )
        return value, grad

    return fun


def _weighted_moments(state: TrainingState) -> tuple[list[np.ndarray], list[float]]:
    """Per group: B = sum_i sum_k tau_ik [(y_i - m_k)(y_i - m_k)' + C_k] and
    the member count (tau rows sum to one)."""
    K = state.config.n_clusters
    Bs, counts = [], []
    for group in state.groups:
        t = len(group.idx)
        B = np.zeros((t, t))
        sel = np.ix_(group.idx, group.idx)
        for k in range(K):
            tau_g = state.tau[group.members, k]
            w = float(tau_g.sum())
            if w == 0.0:
                continue
            resid = group.values - state.hyper_means[k][group.idx]
            B += (resid * tau_g[:, None]).T @ resid
            B += w * state.hyper_covs[k][sel]
        Bs.append(0.5 * (B + B.T))
        counts.append(float(len(group.members)))
    return Bs, counts


def individual_objective(state: TrainingState, group_ids: list[int] | None = None):
    """Pooled membership-weighted data term over (log v, log l, log noise).

    Covers the groups in group_ids (default: all), which is how the
    per-individual-hyperparameter variant reuses the same objective.
    """
    Bs, counts = _weighted_moments(state)
    if group_ids is None:
        group_ids = list(range(len(state.groups)))

    def fun(x):
        v, ell, noise = float(np.exp(x[0])), float(np.exp(x[1])), float(np.exp(x[2]))
        value = 0.0
        grad = np.zeros(3)
        for g in group_ids:
            group = state.groups[g]
            t = len(group.idx)
            core = v * np.exp(-group.sq / (2.0 * ell**2))
            S = core + noise * np.eye(t)
            L, _ = safe_factorize(S)
            inv = cho_solve((L, True), np.eye(t))
            logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
            B = Bs[g]
            cnt = counts[g]
            value += -0.5 * float(np.sum(inv * B)) - 0.5 * cnt * (logdet + t * LOG2PI)
            inner = inv @ B @ inv - cnt * inv
            grad[0] += 0.5 * float(np.sum(inner * core))
            grad[1] += 0.5 * float(np.sum(inner * (core * group.sq / ell**2)))
            grad[2] += 0.5 * noise * float(np.trace(inner))
        return value, grad

    return fun


def m_step(state: TrainingState) -> None:
    """Closed-form mixing update plus gradient ascent on all kernels."""
    cfg = state.config
    state.pi = state.tau.mean(axis=0)
    for k in range(cfg.n_clusters):
        fun = gamma_objective(state, k)
        x0 = state.mean_kernels[k].log_vector()
        x, _, _ = ascend(fun, x0, max_iters=cfg.m_step_max_iters, tol=1e-6)
        state.mean_kernels[k] = KernelParams.from_log_vector(x)

    floor = np.array([-np.inf, -np.inf, np.log(NOISE_FLOOR)])
    if state.shared:
        fun = individual_objective(state)
        x0 = np.append(state.ind_kernels[0].log_vector(), np.log(state.noises[0].noise_variance))
        x, _, _ = ascend(fun, x0, max_iters=cfg.m_step_max_iters, tol=1e-6, lower_bounds=floor)
        state.ind_kernels = [KernelParams.from_log_vector(x[:2])]
        state.noises = [NoiseParam(noise_variance=float(np.exp(x[2])))]
    else:
        for g_idx, group in enumerate(state.groups):
            i = group.members[0]
            fun = individual_objective(state, [g_idx])
            x0 = np.append(state.ind_kernels[i].log_vector(), np.log(state.noises[i].noise_variance))
            x, _, _ = ascend(fun, x0, max_iters=cfg.m_step_max_iters, tol=1e-6, lower_bounds=floor)
            state.ind_kernels[i] = KernelParams.from_log_vector(x[:2])
            state.noises[i] = NoiseParam(noise_variance=float(np.exp(x[2])))


def elbo(state: TrainingState) -> float:
    """Evidence lower bound under the current state; the training objective."""
    G = len(state.grid)
    total = 0.0
    for k in range(state.config.n_clusters):
        gram = mean_process_gram(state.mean_kernels[k], state.grid)
        L, _ = safe_factorize(gram)
        resid = state.hyper_means[k] - state.m0
        inv = cho_solve((L, True), np.eye(G))
        total += gaussian_logpdf_cho(resid, L)
        total += -0.5 * float(np.sum(inv * state.hyper_covs[k]))
        total += 0.5 * state.hyper_cov_logdets[k] + 0.5 * G * (1.0 + LOG2PI)
    ll = _data_loglik_matrix(state, _psi_factors(state))
    tau = state.tau
    mask = tau > 0
    total += float(np.sum(tau[mask] * (ll[mask] - np.log(tau[mask]))))
    return total


@dataclass
class TrainedModel:
    """Immutable training artifact; safe for concurrent prediction."""

    config: ModelConfig
    grid: np.ndarray
    prior_mean: np.ndarray
    mixing: np.ndarray
    memberships: np.ndarray
    ids: list[str]
    mean_kernels: list[KernelParams]
    individual_kernel: KernelParams
    noise: NoiseParam
    hyper_means: list[np.ndarray]
    hyper_covs: list[np.ndarray]
    hyper_chols: list[np.ndarray]
    training_log: list[float]

    @property
    def n_clusters(self) -> int:
        return self.config.n_clusters

    def hyper_posterior(self, k: int) -> GaussianPosterior:
        return GaussianPosterior(times=self.grid, mean=self.hyper_means[k], covariance=self.hyper_covs[k])

    def map_labels(self) -> np.ndarray:
        """Most-probable cluster per training individual; ties -> lowest index."""
        return np.argmax(self.memberships, axis=1)

    def predict(self, series: GrowthSeries, target_times, include_noise: bool = True) -> "MixturePrediction":
        return predict(self, series, target_times, include_noise=include_noise)


def _finalize_model(state: TrainingState) -> TrainedModel:
    chols = []
    covs = []
    for cov in state.hyper_covs:
        L, _ = safe_factorize(cov)
        chols.append(L)
        covs.append(L @ L.T)  # canonical form so serialization round-trips exactly
    if state.shared:
        ind_kernel = state.ind_kernels[0]
        noise = state.noises[0]
    else:
        logs = np.mean([k.log_vector() for k in state.ind_kernels], axis=0)
        ind_kernel = KernelParams.from_log_vector(logs)
        noise = NoiseParam(float(np.exp(np.mean([np.log(n.noise_variance) for n in state.noises]))))
    return TrainedModel(
        config=state.config,
        grid=state.grid.copy(),
        prior_mean=state.m0.copy(),
        mixing=state.pi.copy(),
        memberships=state.tau.copy(),
        ids=list(state.ids),
        mean_kernels=list(state.mean_kernels),
        individual_kernel=ind_kernel,
        noise=noise,
        hyper_means=[m.copy() for m in state.hyper_means],
        hyper_covs=covs,
        hyper_chols=chols,
        training_log=list(state.elbo_trace),
    )


def train(cohort: Cohort, config: ModelConfig) -> TrainedModel:
    """Variational EM until the bound improves by less than the tolerance."""
    state = TrainingState.from_cohort(cohort, config)
    previous = -np.inf
    for iteration in range(config.max_vem_iters):
        e_step(state)
        m_step(state)
        value = elbo(state)
        state.elbo_trace.append(value)
        logger.debug("vem iteration %d: elbo %.6f", iteration, value)
        if value - previous < config.vem_tolerance:
            break
        previous = value
    # final E-step so exported hyper-posteriors match the final hyperparameters
    e_step(state)
    state.elbo_trace.append(elbo(state))
    return _finalize_model(state)


@dataclass
class MixturePrediction:
    """Per-cluster Gaussian posteriors over shared target times plus weights."""

    target_times: np.ndarray
    per_cluster: list[GaussianPosterior]
    weights: np.ndarray

    def __post_init__(self):
        self.target_times = np.asarray(self.target_times, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()}, expected 1")
        for post in self.per_cluster:
            if len(post.times) != len(self.target_times) or np.max(
                np.abs(post.times - self.target_times), initial=0.0
            ) > 1e-9:
                raise ValueError("per-cluster posteriors must share the target times")

    @property
    def cluster_means(self) -> np.ndarray:
        return np.vstack([p.mean for p in self.per_cluster])

    @property
    def cluster_sds(self) -> np.ndarray:
        return np.vstack([p.sd for p in self.per_cluster])

    @property
    def mean(self) -> np.ndarray:
        """Mixture mean: exactly the weight-combination of cluster means."""
        return self.weights @ self.cluster_means

    @property
    def variance(self) -> np.ndarray:
        m = self.cluster_means
        second = self.weights @ (self.cluster_sds**2 + m**2)
        return second - self.mean**2


def _interp_weights(grid: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Rows of linear-interpolation weights mapping grid values to times."""
    if times.size and (times.min() < grid[0] - 1e-9 or times.max() > grid[-1] + 1e-9):
        raise TargetOutOfRange(
            f"times [{times.min()}, {times.max()}] outside grid span [{grid[0]}, {grid[-1]}]"
        )
    pos = np.searchsorted(grid, times, side="right") - 1
    pos = np.clip(pos, 0, len(grid) - 2)
    frac = (times - grid[pos]) / (grid[pos + 1] - grid[pos])
    frac = np.clip(frac, 0.0, 1.0)
    W = np.zeros((len(times), len(grid)))
    rows = np.arange(len(times))
    W[rows, pos] = 1.0 - frac
    W[rows, pos + 1] += frac
    return W


def predict(
    model: TrainedModel,
    series: GrowthSeries,
    target_times,
    include_noise: bool = True,
) -> MixturePrediction:
    """Mixture predictive distribution for one individual at target times.

    Per cluster, the prior over (observed + target) times combines the
    interpolated hyper-posterior with the individual kernel; conditioning on
    the observations uses observation noise on the observed block. With
    include_noise the returned posteriors describe observable values (noise
    variance added on the target diagonal), which is what coverage metrics
    are computed against.
    """
    target_times = np.atleast_1d(np.asarray(target_times, dtype=float))
    obs_ages = series.ages
    y = series.bmi_values
    n_obs = len(obs_ages)
    joint = np.concatenate([obs_ages, target_times])
    W = _interp_weights(model.grid, joint)
    kernel = model.individual_kernel
    noise = model.noise
    K_joint = kernel_matrix(kernel, joint, joint)
    obs_idx = np.arange(n_obs)
    tgt_idx = np.arange(n_obs, n_obs + len(target_times))

    per_cluster = []
    log_ev = np.empty(model.n_clusters)
    with np.errstate(divide="ignore"):
        log_pi = np.where(model.mixing > 0, np.log(np.maximum(model.mixing, 1e-300)), -np.inf)
    for k in range(model.n_clusters):
        prior_mean = W @ model.hyper_means[k]
        prior_cov = W @ model.hyper_covs[k] @ W.T + K_joint
        post = gp_condition(prior_mean, prior_cov, obs_idx, y, noise, tgt_idx)
        cov = post.covariance
        if include_noise:
            cov = cov + noise.noise_variance * np.eye(len(target_times))
        per_cluster.append(GaussianPosterior(times=target_times, mean=post.mean, covariance=cov))
        if n_obs:
            S = prior_cov[:n_obs, :n_obs] + noise.noise_variance * np.eye(n_obs)
            L, _ = safe_factorize(S)
            log_ev[k] = log_pi[k] + gaussian_logpdf_cho(y - prior_mean[:n_obs], L)
    if n_obs:
        weights = np.exp(log_ev - logsumexp(log_ev))
        weights = weights / weights.sum()
    else:
        weights = model.mixing.copy()
    return MixturePrediction(target_times=target_times, per_cluster=per_cluster, weights=weights)


def sample_trajectories(prediction: MixturePrediction, n: int, seed: int) -> np.ndarray:
    """n joint draws from the mixture predictive; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    K = len(prediction.per_cluster)
    T = len(prediction.target_times)
    weights = prediction.weights / prediction.weights.sum()
    assignments = rng.choice(K, size=n, p=weights)
    draws = rng.standard_normal((n, T))
    out = np.empty((n, T))
    for k in range(K):
        rows = assignments == k
        if not rows.any():
            continue
        post = prediction.per_cluster[k]
        if np.max(np.abs(post.covariance), initial=0.0) == 0.0:
            L = np.zeros((T, T))
        else:
            L, _ = safe_factorize(post.covariance)
        out[rows] = post.mean + draws[rows] @ L.T
    return out


@dataclass
class CredibleBand:
    """Central credible band of the mixture plus the per-cluster bands."""

    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    per_cluster: list[tuple[np.ndarray, np.ndarray]]
    level: float


def _mixture_quantile(weights, means, sds, prob) -> np.ndarray:
    """Vectorized bisection of the mixture CDF; tolerance 1e-6 kg/m^2."""
    spread = np.maximum(sds, 1e-12)
    lo = np.min(means - 12.0 * spread, axis=0) - 1e-6
    hi = np.max(means + 12.0 * spread, axis=0) + 1e-6

    def cdf(x):
        with np.errstate(invalid="ignore"):
            z = np.where(sds > 0, (x[None, :] - means) / np.where(sds > 0, sds, 1.0), 0.0)
        comp = np.where(sds > 0, ndtr(z), (x[None, :] >= means).astype(float))
        return weights @ comp

    for _ in range(200):
        if np.max(hi - lo) <= 1e-6:
            break
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < prob
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def credible_band(prediction: MixturePrediction, level: float = 0.95) -> CredibleBand:
    """Per-cluster normal bands and the numerically inverted mixture band."""
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    z = float(norm.ppf(0.5 + level / 2.0))
    per_cluster = []
    for post in prediction.per_cluster:
        sd = post.sd
        per_cluster.append((post.mean - z * sd, post.mean + z * sd))
    means = prediction.cluster_means
    sds = prediction.cluster_sds
    w = prediction.weights
    lower = _mixture_quantile(w, means, sds, (1.0 - level) / 2.0)
    upper = _mixture_quantile(w, means, sds, (1.0 + level) / 2.0)
    return CredibleBand(
        times=prediction.target_times,
        lower=lower,
        upper=upper,
        per_cluster=per_cluster,
        level=level,
    )


def save_model(model: TrainedModel, path) -> None:
    """Versioned JSON serialization; reload reproduces predictions exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "n_clusters": model.config.n_clusters,
            "shared_individual_hypers": model.config.shared_individual_hypers,
            "max_vem_iters": model.config.max_vem_iters,
            "vem_tolerance": model.config.vem_tolerance,
            "working_grid": None
            if model.config.working_grid is None
            else list(model.config.working_grid),
            "seed": model.config.seed,
            "m_step_max_iters": model.config.m_step_max_iters,
        },
        "grid": model.grid.tolist(),
        "prior_mean": model.prior_mean.tolist(),
        "mixing": model.mixing.tolist(),
        "memberships": model.memberships.tolist(),
        "ids": model.ids,
        "mean_kernels": [
            {"variance": k.variance, "lengthscale": k.lengthscale} for k in model.mean_kernels
        ],
        "individual_kernel": {
            "variance": model.individual_kernel.variance,
            "lengthscale": model.individual_kernel.lengthscale,
        },
        "noise_variance": model.noise.noise_variance,
        "hyper_means": [m.tolist() for m in model.hyper_means],
        "hyper_cov_cholesky": [L.tolist() for L in model.hyper_chols],
        "training_log": model.training_log,
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    cfg_doc = doc["config"]
    config = ModelConfig(
        n_clusters=int(cfg_doc["n_clusters"]),
        shared_individual_hypers=bool(cfg_doc["shared_individual_hypers"]),
        max_vem_iters=int(cfg_doc["max_vem_iters"]),
        vem_tolerance=float(cfg_doc["vem_tolerance"]),
        working_grid=None if cfg_doc["working_grid"] is None else tuple(cfg_doc["working_grid"]),
        seed=int(cfg_doc["seed"]),
        m_step_max_iters=int(cfg_doc["m_step_max_iters"]),
    )
    chols = [np.array(L, dtype=float) for L in doc["hyper_cov_cholesky"]]
    covs = [L @ L.T for L in chols]
    return TrainedModel(
        config=config,
        grid=np.array(doc["grid"], dtype=float),
        prior_mean=np.array(doc["prior_mean"], dtype=float),
        mixing=np.array(doc["mixing"], dtype=float),
        memberships=np.array(doc["memberships"], dtype=float),
        ids=list(doc["ids"]),
        mean_kernels=[
            KernelParams(variance=k["variance"], lengthscale=k["lengthscale"])
            for k in doc["mean_kernels"]
        ],
        individual_kernel=KernelParams(
            variance=doc["individual_kernel"]["variance"],
            lengthscale=doc["individual_kernel"]["lengthscale"],
        ),
        noise=NoiseParam(noise_variance=float(doc["noise_variance"])),
        hyper_means=[np.array(m, dtype=float) for m in doc["hyper_means"]],
        hyper_covs=covs,
        hyper_chols=chols,
        training_log=list(doc["training_log"]),
    )
