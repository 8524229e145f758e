"""Single-task Gaussian-process primitives.

Exponentiated-quadratic kernels, robust Cholesky factorization, marginal
likelihoods with log-space gradients, and closed-form Gaussian conditioning.
Everything here is a pure function over immutable inputs; the mixture model
and the baselines are built on top.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import NonPositiveParam, NotPositiveDefinite

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-6  # (kg/m^2)^2, applied during hyperparameter optimization

# Jitter ladder for safe_factorize: try the matrix as-is first, then escalate.
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class KernelParams:
    """Exponentiated-quadratic kernel hyperparameters.

    variance is in (kg/m^2)^2, lengthscale in months. Both must be strictly
    positive; optimizers work on their logs.
    """

    variance: float
    lengthscale: float

    def __post_init__(self):
        if not (self.variance > 0 and self.lengthscale > 0):
            raise NonPositiveParam(
                f"variance={self.variance}, lengthscale={self.lengthscale}"
            )

    def log_vector(self) -> np.ndarray:
        return np.log([self.variance, self.lengthscale])

    @staticmethod
    def from_log_vector(x) -> "KernelParams":
        return KernelParams(variance=float(np.exp(x[0])), lengthscale=float(np.exp(x[1])))


@dataclass(frozen=True)
class NoiseParam:
    """Observation noise variance, (kg/m^2)^2."""

    noise_variance: float

    def __post_init__(self):
        if self.noise_variance < 0:
            raise NonPositiveParam(f"noise_variance={self.noise_variance}")


@dataclass
class GaussianPosterior:
    """A multivariate normal over BMI values at a set of ages.

    The covariance is symmetrized on construction; a diagonal entry more
    negative than -1e-8 is an error, small negatives are clipped to zero.
    """

    times: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if not (len(self.times) == len(self.mean) == cov.shape[0] == cov.shape[1]):
            raise ValueError("times, mean and covariance dimensions disagree")
        asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
        if asym > 1e-10:
            raise ValueError(f"covariance asymmetric by {asym:.3e}")
        cov = 0.5 * (cov + cov.T)
        diag = np.diag(cov)
        if diag.size and diag.min() < -1e-8:
            raise ValueError(f"negative posterior variance {diag.min():.3e}")
        if diag.size and diag.min() < 0.0:
            np.fill_diagonal(cov, np.maximum(diag, 0.0))
        self.covariance = cov

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0))


def kernel_matrix(params: KernelParams, times_a, times_b) -> np.ndarray:
    """Exponentiated-quadratic kernel: v * exp(-(a-b)^2 / (2 l^2))."""
    if not (params.variance > 0 and params.lengthscale > 0):
        raise NonPositiveParam(str(params))
    a = np.asarray(times_a, dtype=float).reshape(-1, 1)
    b = np.asarray(times_b, dtype=float).reshape(1, -1)
    sq = (a - b) ** 2
    return params.variance * np.exp(-sq / (2.0 * params.lengthscale**2))


def safe_factorize(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky-factorize a symmetric matrix, escalating jitter as needed.

    Returns (L, jitter) with L @ L.T == matrix + jitter * I. Jitter starts
    at zero and escalates 1e-10 -> 1e-4 by decades; beyond that the matrix
    is declared not positive definite.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0]
    for jitter in _JITTERS:
        try:
            L = np.linalg.cholesky(matrix + jitter * np.eye(n) if jitter else matrix)
        except np.linalg.LinAlgError:
            continue
        if jitter:
            logger.debug("factorization needed jitter %.1e (n=%d)", jitter, n)
        return L, jitter
    raise NotPositiveDefinite(f"{n}x{n} matrix not PD even with jitter {_JITTERS[-1]:.0e}")


def gaussian_logpdf_cho(resid: np.ndarray, L: np.ndarray) -> float:
    """log N(resid; 0, S) given a Cholesky factor L of S."""
    alpha = cho_solve((L, True), resid)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * resid @ alpha - 0.5 * logdet - 0.5 * len(resid) * np.log(2.0 * np.pi))


def log_marginal_likelihood(
    kernel: KernelParams,
    noise: NoiseParam,
    times,
    values,
    prior_mean,
) -> tuple[float, np.ndarray]:
    """Marginal likelihood of values under GP(prior_mean, K + sigma^2 I).

    Returns the log-density and its gradient with respect to
    (log variance, log lengthscale, log noise_variance), via the standard
    trace identity d/dp = 0.5 tr((aa' - S^{-1}) dS/dp) with a = S^{-1} r.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    n = len(times)
    K = kernel_matrix(kernel, times, times)
    S = K + noise.noise_variance * np.eye(n)
    L, _ = safe_factorize(S)
    r = values - prior_mean
    alpha = cho_solve((L, True), r)
    value = gaussian_logpdf_cho(r, L)

    S_inv = cho_solve((L, True), np.eye(n))
    inner = np.outer(alpha, alpha) - S_inv
    sq = (times.reshape(-1, 1) - times.reshape(1, -1)) ** 2
    dK_dlogv = K
    dK_dlogl = K * sq / kernel.lengthscale**2
    dS_dlogn = noise.noise_variance * np.eye(n)
    grad = np.array(
        [
            0.5 * np.sum(inner * dK_dlogv),
            0.5 * np.sum(inner * dK_dlogl),
            0.5 * np.sum(inner * dS_dlogn),
        ]
    )
    return value, grad


def gp_condition(
    prior_mean,
    prior_cov,
    observed_idx,
    observed_values,
    noise: NoiseParam,
    target_idx,
) -> GaussianPosterior:
    """Condition targets on observations within one joint Gaussian.

    Observation noise is added on the observed block only. The joint grid is
    indexed by position; times carried on the result are the target indices'
    positions cast to float unless the caller re-labels them.
    """
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_cov = np.asarray(prior_cov, dtype=float)
    obs = np.asarray(observed_idx, dtype=int)
    tgt = np.asarray(target_idx, dtype=int)
    y = np.asarray(observed_values, dtype=float)

    mean_t = prior_mean[tgt]
    cov_tt = prior_cov[np.ix_(tgt, tgt)]
    if obs.size == 0:
        return GaussianPosterior(times=tgt.astype(float), mean=mean_t, covariance=_sym(cov_tt))

    S_oo = prior_cov[np.ix_(obs, obs)] + noise.noise_variance * np.eye(obs.size)
    L, _ = safe_factorize(S_oo)
    cov_to = prior_cov[np.ix_(tgt, obs)]
    r = y - prior_mean[obs]
    mean = mean_t + cov_to @ cho_solve((L, True), r)
    half = solve_triangular(L, cov_to.T, lower=True)
    cov = cov_tt - half.T @ half
    return GaussianPosterior(times=tgt.astype(float), mean=mean, covariance=_sym(cov))


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)
