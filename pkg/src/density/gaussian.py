"""Diagonal Gaussian over layer activations and its quadratic penalty."""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..errors import DimensionError, InsufficientDataError
from ..netcore import Tensor, as_tensor

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagonalGaussian:
    mean: Tensor
    variance: Tensor

    def __post_init__(self):
        mean = as_tensor(self.mean, "mean")
        variance = as_tensor(self.variance, "variance")
        if mean.ndim != 1 or variance.shape != mean.shape:
            raise DimensionError(f"mean {mean.shape} and variance {variance.shape} must be [D]")
        if np.any(variance <= 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def penalty(self, h: Tensor) -> Tuple[Union[float, Tensor], Tensor]:
        return gaussian_penalty(self, h)

    def log_density(self, h: Tensor) -> Union[float, Tensor]:
        return gaussian_log_density(self, h)


def _check_dims(dim: int, h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != dim:
        raise DimensionError(f"activation shape {h.shape} does not match model dim {dim}")
    return h


def fit_gaussian(samples: Tensor, variance_floor: float = 1e-6) -> DiagonalGaussian:
    """Maximum-likelihood fit: sample mean and population variance, floored."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise DimensionError(f"samples must be [N x D], got {samples.shape}")
    if samples.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {samples.shape[0]}")
    if variance_floor <= 0:
        raise ValueError("variance floor must be positive")
    mean = samples.mean(axis=0)
    variance = np.maximum(samples.var(axis=0), variance_floor)
    return DiagonalGaussian(mean=mean, variance=variance)


def gaussian_penalty(model: DiagonalGaussian, h: Tensor) -> Tuple[Union[float, Tensor], Tensor]:
    """
    R(h) = 1/2 sum_d (h_d - mu_d)^2 / var_d, constant term omitted.

    Accepts one vector [D] (scalar R) or a batch [N x D] (R per row).
    """
    h = _check_dims(model.dim, h)
    diff = h - model.mean
    grad = diff / model.variance
    penalty = 0.5 * np.sum(diff * grad, axis=-1)
    if h.ndim == 1:
        return float(penalty), grad
    return penalty, grad


def gaussian_log_density(model: DiagonalGaussian, h: Tensor) -> Union[float, Tensor]:
    h = _check_dims(model.dim, h)
    diff = h - model.mean
    log_norm = -0.5 * (model.dim * LOG_2PI + np.sum(np.log(model.variance)))
    value = log_norm - 0.5 * np.sum(diff * diff / model.variance, axis=-1)
    return float(value) if h.ndim == 1 else value
