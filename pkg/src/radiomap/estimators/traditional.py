"""K-nearest neighbors, simple Kriging and kernel ridge regression."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..synth import gudmundson_covariance
from .base import PointEstimator, pairwise_distances, solve_psd


@dataclass(frozen=True)
class KnnParams:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class KrigingParams:
    shadow_variance: float = 0.51 ** 2
    shadow_half_distance: float = 300.0
    noise_variance: float = 1.0


class Kernel(enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class KrrParams:
    reg: float = 1e-3
    kernel: Kernel = Kernel.GAUSSIAN
    width: float = 50.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", Kernel(self.kernel))
        if not self.reg > 0 or not self.width > 0:
            raise ValueError("reg and width must be positive")


def knn_estimate(obs_locations, obs_power, params: KnnParams, query):
    """Mean of the ``k`` nearest observed powers at each query location.

    Equal distances are resolved by observation order.
    """
    obs_power = np.asarray(obs_power, dtype=float)
    k = params.k
    if k > len(obs_power):
        raise ValueError(f"k={k} exceeds the {len(obs_power)} observations")
    d = pairwise_distances(query, obs_locations)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    return obs_power[nearest].mean(axis=1)


class KnnEstimator(PointEstimator):
    name = "knn"

    def __init__(self, params: KnnParams):
        self.params = params

    def estimate_points(self, obs_locations, obs_power, query, spec=None):
        return knn_estimate(obs_locations, obs_power, self.params, query)


class KrigingModel:
    """Simple Kriging fitted to one observation set.

    The unknown mean is replaced by the sample mean of the observations,
    which is added back to every estimate.
    """

    def __init__(self, obs_locations, obs_power, params: KrigingParams):
        self.params = params
        self.locations = np.asarray(obs_locations, dtype=float).reshape(-1, 2)
        power = np.asarray(obs_power, dtype=float)
        self.mean = float(power.mean())
        cov = gudmundson_covariance(pairwise_distances(self.locations, self.locations),
                                    params.shadow_variance, params.shadow_half_distance)
        cov[np.diag_indices_from(cov)] += params.noise_variance
        self.weights = solve_psd(cov, power - self.mean)

    def __call__(self, query):
        cross = gudmundson_covariance(pairwise_distances(query, self.locations),
                                      self.params.shadow_variance, self.params.shadow_half_distance)
        return self.mean + cross @ self.weights


def kriging_estimate(obs_locations, obs_power, params: KrigingParams, query):
    return KrigingModel(obs_locations, obs_power, params)(query)


class KrigingEstimator(PointEstimator):
    name = "kriging"

    def __init__(self, params: KrigingParams):
        self.params = params

    def estimate_points(self, obs_locations, obs_power, query, spec=None):
        return kriging_estimate(obs_locations, obs_power, self.params, query)


def kernel_matrix(a, b, kernel: Kernel, width: float):
    d = pairwise_distances(a, b)
    if Kernel(kernel) is Kernel.GAUSSIAN:
        return np.exp(-d ** 2 / width)
    return np.exp(-d / width)


def krr_objective(alpha, gram, targets, reg):
    """``mean((y - K alpha)**2) + reg * sum(alpha**2)``."""
    resid = targets - gram @ alpha
    return float(np.mean(resid ** 2) + reg * np.sum(alpha ** 2))


def krr_fit(obs_locations, obs_power, params: KrrParams):
    """Coefficients minimizing the coefficient-penalized least squares
    ``(1/N) ||y - K a||^2 + reg ||a||^2`` for mean-centered ``y``.

    The optimum solves ``(K^T K + N reg I) a = K^T y``. With the symmetric
    eigendecomposition ``K = Q diag(s) Q^T`` this is
    ``a = Q diag(s / (s^2 + N reg)) Q^T y``, which stays accurate when
    ``K`` is numerically rank deficient.

    Returns ``(alpha, mean)``.
    """
    locs = np.asarray(obs_locations, dtype=float).reshape(-1, 2)
    power = np.asarray(obs_power, dtype=float)
    mean = float(power.mean())
    y = power - mean
    gram = kernel_matrix(locs, locs, params.kernel, params.width)
    s, q = np.linalg.eigh(gram)
    alpha = q @ ((s / (s ** 2 + len(y) * params.reg)) * (q.T @ y))
    return alpha, mean


class KrrModel:
    def __init__(self, obs_locations, obs_power, params: KrrParams):
        self.params = params
        self.locations = np.asarray(obs_locations, dtype=float).reshape(-1, 2)
        self.alpha, self.mean = krr_fit(self.locations, obs_power, params)

    def __call__(self, query):
        return self.mean + kernel_matrix(query, self.locations, self.params.kernel, self.params.width) @ self.alpha


class KrrEstimator(PointEstimator):
    name = "krr"

    def __init__(self, params: KrrParams):
        self.params = params

    def estimate_points(self, obs_locations, obs_power, query, spec=None):
        return KrrModel(obs_locations, obs_power, self.params)(query)
