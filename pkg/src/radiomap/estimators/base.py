"""Common estimator interface.

Every estimator answers two questions:

* ``estimate_points(obs_locations, obs_power, query)`` -- grid-agnostic use:
  power at arbitrary query locations from scattered observations.
* ``estimate_grid(observed, obs_locations, obs_power)`` -- grid-aware use:
  a full ``N_y x N_x`` estimate from a quantized grid restricted to its
  observed entries. ``obs_locations``/``obs_power`` are the raw
  measurements behind those entries (only FRADE looks at them).
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ..core import GridSpec, QuantizedGrid, quantize


class NumericalError(RuntimeError):
    pass


class GridMapEstimate:
    """Grid estimate evaluated off-grid by nearest grid point."""

    def __init__(self, values, spec: GridSpec):
        self.grid_values = np.asarray(values, dtype=float).reshape(spec.shape)
        self.spec = spec

    def evaluate(self, locations):
        rows, cols = self.spec.nearest(locations)
        return self.grid_values[rows, cols]

    __call__ = evaluate


class MapEstimator:
    name = "estimator"

    def estimate_points(self, obs_locations, obs_power, query, spec=None):
        raise NotImplementedError

    def estimate_grid(self, observed: QuantizedGrid, obs_locations=None, obs_power=None):
        raise NotImplementedError


class PointEstimator(MapEstimator):
    """Function regressors; on a grid they treat observed grid points as
    measurement locations carrying the quantized values."""

    def estimate_grid(self, observed: QuantizedGrid, obs_locations=None, obs_power=None):
        coords = observed.spec.coordinates().reshape(-1, 2)
        occ = observed.occupied
        est = self.estimate_points(coords[occ], observed.values.ravel()[occ], coords)
        return est.reshape(observed.spec.shape)


class GridEstimator(MapEstimator):
    """Grid-native estimators; point queries go through quantization of
    the observations and the nearest-grid-point rule. ``spec`` must be set
    before point queries."""

    spec: GridSpec | None = None

    def estimate_points(self, obs_locations, obs_power, query, spec: GridSpec | None = None):
        spec = spec or self.spec
        if spec is None:
            raise ValueError("a GridSpec is required for point queries")

        observed = quantize(SimpleNamespace(locations=obs_locations, power=obs_power), spec)
        grid = self.estimate_grid(observed, obs_locations, obs_power)
        return GridMapEstimate(grid, spec).evaluate(query)


def pairwise_distances(a, b):
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def solve_psd(matrix, rhs, start_jitter=1e-9, max_jitter=1e-3):
    """Solve ``matrix @ x = rhs`` for symmetric PSD ``matrix`` by Cholesky.

    Tries the matrix as given first, then adds diagonal jitter from
    ``start_jitter`` growing 10x up to ``max_jitter``.
    """
    from scipy.linalg import LinAlgError, cho_factor, cho_solve

    scale = float(np.mean(np.diag(matrix))) if len(matrix) else 1.0
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(matrix + jitter * scale * np.eye(len(matrix)), lower=True)
            return cho_solve(factor, rhs)
        except LinAlgError:
            jitter = start_jitter if jitter == 0.0 else jitter * 10
            if jitter > max_jitter * (1 + 1e-12):
                raise NumericalError(
                    f"covariance of {len(matrix)} observations is singular even with jitter {max_jitter:g}"
                ) from None
