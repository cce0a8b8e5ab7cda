"""Diagonal-covariance Gaussian mixtures: log density, the negative
log-likelihood penalty with its analytic gradient, and EM fitting."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from ..errors import DimensionError, InsufficientDataError
from ..netcore import RngState, Tensor, as_tensor
from .gaussian import LOG_2PI, DiagonalGaussian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiagonalGmm:
    """K-component mixture; weights [K], means [K x D], variances [K x D]"""

    weights: Tensor
    means: Tensor
    variances: Tensor

    def __post_init__(self):
        weights = as_tensor(self.weights, "weights")
        means = as_tensor(self.means, "means")
        variances = as_tensor(self.variances, "variances")
        if weights.ndim != 1 or weights.size < 1:
            raise DimensionError(f"weights must be a non-empty vector, got {weights.shape}")
        if means.ndim != 2 or means.shape[0] != weights.size or variances.shape != means.shape:
            raise DimensionError(f"inconsistent mixture shapes weights={weights.shape} "
                                 f"means={means.shape} variances={variances.shape}")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, "
                             f"got sum {weights.sum()}")
        if np.any(variances <= 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @classmethod
    def from_components(cls, weights, components: List[DiagonalGaussian]) -> "DiagonalGmm":
        return cls(weights=np.asarray(weights, dtype=np.float64),
                   means=np.stack([c.mean for c in components]),
                   variances=np.stack([c.variance for c in components]))

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> List[DiagonalGaussian]:
        return [DiagonalGaussian(mean=m, variance=v) for m, v in zip(self.means, self.variances)]

    def penalty(self, h: Tensor) -> Tuple[Union[float, Tensor], Tensor]:
        return gmm_penalty(self, h)

    def log_density(self, h: Tensor) -> Union[float, Tensor]:
        return gmm_log_density(self, h)


def _component_log_probs(h: np.ndarray, weights: np.ndarray, means: np.ndarray,
                         variances: np.ndarray) -> np.ndarray:
    """log alpha_k + log N(h_n; mu_k, Sigma_k) as [N x K]; zero weights give -inf."""
    with np.errstate(divide="ignore"):
        log_weights = np.log(weights)
    log_norm = -0.5 * (means.shape[1] * LOG_2PI + np.sum(np.log(variances), axis=1))
    diff = h[:, None, :] - means[None, :, :]
    mahalanobis = np.sum(diff * diff / variances[None, :, :], axis=2)
    return log_weights[None, :] + log_norm[None, :] - 0.5 * mahalanobis


def _as_batch(model: DiagonalGmm, h) -> Tuple[np.ndarray, bool]:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != model.dim:
        raise DimensionError(f"activation shape {h.shape} does not match model dim {model.dim}")
    return np.atleast_2d(h), h.ndim == 1


def gmm_log_density(model: DiagonalGmm, h: Tensor) -> Union[float, Tensor]:
    """log sum_k alpha_k N(h; mu_k, Sigma_k), normalization constants included."""
    batch, single = _as_batch(model, h)
    log_probs = _component_log_probs(batch, model.weights, model.means, model.variances)
    values = logsumexp(log_probs, axis=1)
    return float(values[0]) if single else values


def responsibilities(model: DiagonalGmm, h: Tensor) -> Tensor:
    """Posterior component probabilities gamma_k(h), rows summing to 1."""
    batch, single = _as_batch(model, h)
    log_probs = _component_log_probs(batch, model.weights, model.means, model.variances)
    gamma = np.exp(log_probs - logsumexp(log_probs, axis=1, keepdims=True))
    return gamma[0] if single else gamma


def gmm_penalty(model: DiagonalGmm, h: Tensor) -> Tuple[Union[float, Tensor], Tensor]:
    """
    R(h) = -log sum_k alpha_k N(h; mu_k, Sigma_k)
    dR/dh = sum_k gamma_k(h) (h - mu_k) / var_k
    """
    batch, single = _as_batch(model, h)
    log_probs = _component_log_probs(batch, model.weights, model.means, model.variances)
    log_total = logsumexp(log_probs, axis=1, keepdims=True)
    gamma = np.exp(log_probs - log_total)
    scaled = (batch[:, None, :] - model.means[None, :, :]) / model.variances[None, :, :]
    grad = np.einsum("nk,nkd->nd", gamma, scaled)
    penalty = -log_total[:, 0]
    if single:
        return float(penalty[0]), grad[0]
    return penalty, grad


@dataclass
class EmConfig:
    """Settings for diagonal-GMM EM fitting"""

    n_components: int = 8
    max_iters: int = 200
    tol: float = 1e-6  # per-sample mean log-likelihood improvement
    variance_floor: float = 1e-6
    empty_mass: float = 1e-8  # responsibility mass below which a component is re-seeded


@dataclass
class GmmEmFitter:
    """
    EM for a diagonal GMM.

    Means are seeded with k-means++ on the samples, weights start uniform and
    every component starts with the global per-dimension variance. Iterations
    stop when the mean log-likelihood improves by less than ``tol``.
    """

    config: EmConfig
    rng: RngState
    history: List[float] = field(default_factory=list, init=False)
    converged: bool = field(default=False, init=False)
    n_reseeded: int = field(default=0, init=False)

    def fit(self, samples: Tensor) -> DiagonalGmm:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2:
            raise DimensionError(f"samples must be [N x D], got {samples.shape}")
        n_samples = samples.shape[0]
        n_components = self.config.n_components
        if n_components < 1:
            raise ValueError(f"K must be at least 1, got {n_components}")
        if n_samples < n_components:
            raise InsufficientDataError(f"need at least K={n_components} samples, got {n_samples}")

        self.history = []
        self.converged = False
        self.n_reseeded = 0
        floor = self.config.variance_floor
        global_variance = np.maximum(samples.var(axis=0), floor)

        centers, _ = kmeans_plusplus(samples, n_components, random_state=self.rng.integer_seed())
        weights = np.full(n_components, 1.0 / n_components)
        means = np.array(centers, dtype=np.float64)
        variances = np.tile(global_variance, (n_components, 1))

        for iteration in range(self.config.max_iters):
            log_probs = _component_log_probs(samples, weights, means, variances)
            log_total = logsumexp(log_probs, axis=1, keepdims=True)
            self.history.append(float(log_total.mean()))
            if len(self.history) > 1 and self.history[-1] - self.history[-2] < self.config.tol:
                self.converged = True
                logger.debug(f"EM converged after {iteration} iterations "
                             f"(mean log-likelihood {self.history[-1]:.6f})")
                break
            gamma = np.exp(log_probs - log_total)
            weights, means, variances = self._maximize(samples, gamma, global_variance)
        else:
            log_probs = _component_log_probs(samples, weights, means, variances)
            self.history.append(float(logsumexp(log_probs, axis=1).mean()))
            logger.info(f"EM stopped at max_iters={self.config.max_iters} without converging")

        return DiagonalGmm(weights=weights, means=means, variances=variances)

    def _maximize(self, samples: np.ndarray, gamma: np.ndarray, global_variance: np.ndarray
                  ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        mass = gamma.sum(axis=0)
        weights = mass / mass.sum()
        safe_mass = np.where(mass > 0, mass, 1.0)
        means = (gamma.T @ samples) / safe_mass[:, None]
        diff = samples[:, None, :] - means[None, :, :]
        variances = np.einsum("nk,nkd->kd", gamma, diff * diff) / safe_mass[:, None]
        variances = np.maximum(variances, self.config.variance_floor)

        # an empty component keeps its (negligible) weight but moves onto a random sample
        for k in np.flatnonzero(mass < self.config.empty_mass):
            row = int(self.rng.generator.integers(samples.shape[0]))
            means[k] = samples[row]
            variances[k] = global_variance
            self.n_reseeded += 1
            logger.warning(f"EM component {k} emptied (mass {mass[k]:.2e}); re-seeded at sample {row}")
        return weights, means, variances


def fit_gmm_em(samples: Tensor, n_components: int, rng: RngState, max_iters: int = 200,
               tol: float = 1e-6, variance_floor: float = 1e-6) -> DiagonalGmm:
    config = EmConfig(n_components=n_components, max_iters=max_iters, tol=tol,
                      variance_floor=variance_floor)
    return GmmEmFitter(config, rng).fit(samples)
