"""Noise-free GP regression with a squared-exponential ARD kernel.

Inputs are mapped affinely to the unit cube and outputs standardized before
fitting; the public functions speak original units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

JITTER_REL = 1e-6
LENGTHSCALE_BOUNDS = (1e-3, 1e2)
VARIANCE_BOUNDS = (1e-6, 1e4)


@dataclass(frozen=True)
class SeArdKernel:
    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if not self.variance > 0 or not np.all(ls > 0):
            raise ValueError("kernel variance and lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))


def kernel_eval(kernel: SeArdKernel, A, B) -> np.ndarray:
    """Cross-covariance matrix ``k(A_i, B_j)`` of shape ``(len(A), len(B))``."""
    A = np.atleast_2d(np.asarray(A, dtype=float)) / kernel.lengthscales
    B = np.atleast_2d(np.asarray(B, dtype=float)) / kernel.lengthscales
    # explicit differences keep k(x, x) == variance exactly
    sq = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    return kernel.variance * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class LengthscalePrior:
    """Log-normal prior on each lengthscale (unit-cube scale)."""

    median: float = 0.3
    log_std: float = 0.7

    def sample(self, d: int, rng: np.random.Generator) -> np.ndarray:
        return np.exp(np.log(self.median) + self.log_std * rng.standard_normal(d))


@dataclass(frozen=True)
class GpModel:
    """A conditioned GP; ``X_train`` and ``y_train`` are stored normalized."""

    kernel: SeArdKernel
    jitter: float
    X_train: np.ndarray
    y_train: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    x_offset: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_std: float

    @property
    def n(self) -> int:
        return self.X_train.shape[0]

    @property
    def d(self) -> int:
        return self.X_train.shape[1]

    def normalize_x(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_offset) / self.x_scale

    def solve(self, B) -> np.ndarray:
        return linalg.cho_solve((self.chol, True), B)

    def half_solve(self, B) -> np.ndarray:
        """``L^{-1} B`` for the lower Cholesky factor ``L``."""
        return linalg.solve_triangular(self.chol, B, lower=True, check_finite=False)

    def with_point(self, x_norm: np.ndarray, y_norm: float) -> "GpModel":
        """Condition on one extra normalized observation, hyperparameters fixed."""
        X = np.vstack([self.X_train, np.atleast_2d(x_norm)])
        y = np.append(self.y_train, y_norm)
        return _condition_normalized(self.kernel, X, y, self.x_offset, self.x_scale, self.y_mean, self.y_std)


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not std > 0:
        std = 1.0
    return (y - mean) / std, mean, std


def _condition_normalized(kernel, Xn, yn, x_offset, x_scale, y_mean, y_std) -> GpModel:
    jitter = JITTER_REL * kernel.variance
    K = kernel_eval(kernel, Xn, Xn)
    K[np.diag_indices_from(K)] += jitter
    L = linalg.cholesky(K, lower=True)
    alpha = linalg.cho_solve((L, True), yn)
    return GpModel(kernel, jitter, Xn, yn, L, alpha, x_offset, x_scale, y_mean, y_std)


def condition(X, y, kernel: SeArdKernel, lower, upper) -> GpModel:
    """Build a GP on ``(X, y)`` with given (normalized-scale) hyperparameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    lower = np.asarray(lower, dtype=float)
    scale = np.asarray(upper, dtype=float) - lower
    yn, y_mean, y_std = _standardize(y)
    return _condition_normalized(kernel, (X - lower) / scale, yn, lower, scale, y_mean, y_std)


def map_objective(theta: np.ndarray, Xn: np.ndarray, yn: np.ndarray, prior: LengthscalePrior):
    """Log marginal likelihood plus lengthscale log-prior and its gradient.

    ``theta = [log variance, log lengthscale_1, ..., log lengthscale_d]``.
    Raises ``numpy.linalg.LinAlgError`` if the kernel matrix is not PD.
    """
    n, d = Xn.shape
    variance = np.exp(theta[0])
    ls = np.exp(theta[1:])
    diff2 = (Xn[:, None, :] - Xn[None, :, :]) ** 2 / ls**2
    R = np.exp(-0.5 * diff2.sum(axis=-1))
    K = variance * (R + JITTER_REL * np.eye(n))
    L = linalg.cholesky(K, lower=True)
    alpha = linalg.cho_solve((L, True), yn)
    lml = -0.5 * yn @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2.0 * np.pi)

    W = np.outer(alpha, alpha) - linalg.cho_solve((L, True), np.eye(n))
    grad = np.empty(d + 1)
    grad[0] = 0.5 * np.sum(W * K)
    VR = variance * R
    for k in range(d):
        grad[k + 1] = 0.5 * np.sum(W * VR * diff2[:, :, k])

    mu, s = np.log(prior.median), prior.log_std
    z = theta[1:]
    log_prior = np.sum(-z - (z - mu) ** 2 / (2.0 * s**2) - np.log(s * np.sqrt(2.0 * np.pi)))
    grad[1:] += -1.0 - (z - mu) / s**2
    return lml + log_prior, grad


class FitError(RuntimeError):
    pass


def fit_map(
    X,
    y,
    lower,
    upper,
    prior: LengthscalePrior | None = None,
    restarts: int = 10,
    rng: np.random.Generator | None = None,
) -> GpModel:
    """MAP fit of kernel hyperparameters by multi-start L-BFGS-B."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least two observations")
    prior = prior or LengthscalePrior()
    rng = rng if rng is not None else np.random.default_rng(0)
    lower = np.asarray(lower, dtype=float)
    scale = np.asarray(upper, dtype=float) - lower
    Xn = (X - lower) / scale
    yn, y_mean, y_std = _standardize(y)
    d = X.shape[1]

    log_bounds = [tuple(np.log(VARIANCE_BOUNDS))] + [tuple(np.log(LENGTHSCALE_BOUNDS))] * d
    lo = np.array([b[0] for b in log_bounds])
    hi = np.array([b[1] for b in log_bounds])

    def negative(theta):
        value, grad = map_objective(theta, Xn, yn, prior)
        return -value, -grad

    best_theta, best_value = None, -np.inf
    for _ in range(restarts):
        theta0 = np.clip(np.concatenate([[0.0], np.log(prior.sample(d, rng))]), lo, hi)
        try:
            start_value = -negative(theta0)[0]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = optimize.minimize(negative, theta0, jac=True, method="L-BFGS-B", bounds=log_bounds)
            theta, value = res.x, -res.fun
            if not np.isfinite(value) or value < start_value:
                theta, value = theta0, start_value
        except np.linalg.LinAlgError:
            continue
        if value > best_value:
            best_theta, best_value = theta, value
    if best_theta is None:
        raise FitError("every hyperparameter restart failed the Cholesky factorization")
    kernel = SeArdKernel(np.exp(best_theta[0]), np.exp(best_theta[1:]))
    return _condition_normalized(kernel, Xn, yn, lower, scale, y_mean, y_std)


def posterior_normalized(model: GpModel, Xn: np.ndarray, full_cov: bool = False):
    ks = kernel_eval(model.kernel, Xn, model.X_train)
    mean = ks @ model.alpha
    v = model.half_solve(ks.T)
    if full_cov:
        cov = kernel_eval(model.kernel, Xn, Xn) - v.T @ v
        cov = 0.5 * (cov + cov.T)
        cov[np.diag_indices_from(cov)] = np.maximum(np.diag(cov), 0.0)
        return mean, cov
    var = np.maximum(model.kernel.variance - np.sum(v**2, axis=0), 0.0)
    return mean, var


def posterior(model: GpModel, X_test, full_cov: bool = False):
    """Posterior mean and variance (or covariance) in original units."""
    mean, spread = posterior_normalized(model, model.normalize_x(X_test), full_cov)
    return model.y_mean + model.y_std * mean, model.y_std**2 * spread


class GpEnsemble:
    """Independent GPs, one per objective, sharing the posterior interface of RobustGp."""

    def __init__(self, models: list[GpModel]):
        self.models = list(models)

    @property
    def n_objectives(self) -> int:
        return len(self.models)

    def posterior(self, X, full_cov: bool = False):
        """Returns ``mean (m, M)`` and ``var (m, M)`` or ``cov (M, m, m)``."""
        means, spreads = zip(*(posterior(m, X, full_cov) for m in self.models))
        mean = np.stack(means, axis=-1)
        return (mean, np.stack(spreads)) if full_cov else (mean, np.stack(spreads, axis=-1))

    def mean(self, X) -> np.ndarray:
        return self.posterior(X)[0]

    def batch_posterior(self, Xb: np.ndarray):
        """Joint posterior of each batch in ``Xb (m, q, d)``: mean ``(m, q, M)``, cov ``(m, M, q, q)``."""
        Xb = np.asarray(Xb, dtype=float)
        m, q, d = Xb.shape
        mean = np.empty((m, q, self.n_objectives))
        cov = np.empty((m, self.n_objectives, q, q))
        for o, model in enumerate(self.models):
            Xn = model.normalize_x(Xb.reshape(m * q, d))
            ks = kernel_eval(model.kernel, Xn, model.X_train)
            mean[:, :, o] = (ks @ model.alpha).reshape(m, q)
            v = model.half_solve(ks.T).reshape(model.n, m, q)
            Z = Xn.reshape(m, q, d) / model.kernel.lengthscales
            prior = model.kernel.variance * np.exp(-0.5 * np.sum((Z[:, :, None] - Z[:, None, :]) ** 2, axis=-1))
            C = prior - np.einsum("nma,nmb->mab", v, v)
            C = 0.5 * (C + np.swapaxes(C, 1, 2))
            mean[:, :, o] = model.y_mean + model.y_std * mean[:, :, o]
            cov[:, o] = model.y_std**2 * C
        return mean, cov
