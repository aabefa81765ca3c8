"""Hybrid estimator: the completion network additionally sees K-NN, Kriging
and KRR estimates on the grid, computed from the raw observed measurements."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ..core import GridSpec, QuantizedGrid, quantize
from .network import NetworkEstimator, grid_offset
from .traditional import KnnParams, KrigingParams, KrrParams, KrrModel, KrigingModel, knn_estimate


def traditional_channels(obs_locations, obs_power, spec: GridSpec,
                         knn: KnnParams, kriging: KrigingParams, krr: KrrParams) -> np.ndarray:
    """``(3, N_y, N_x)``: K-NN, Kriging and KRR evaluated at every grid point.

    K-NN uses ``min(k, #observations)`` neighbors.
    """
    coords = spec.coordinates().reshape(-1, 2)
    obs_power = np.asarray(obs_power, dtype=float)
    k = KnnParams(min(knn.k, len(obs_power)))
    out = np.stack([
        knn_estimate(obs_locations, obs_power, k, coords),
        KrigingModel(obs_locations, obs_power, kriging)(coords),
        KrrModel(obs_locations, obs_power, krr)(coords),
    ])
    return out.reshape(3, *spec.shape)


def frade_assemble_input(instance, observed_cells, spec: GridSpec,
                         knn: KnnParams, kriging: KrigingParams, krr: KrrParams) -> np.ndarray:
    """Raw 5-channel tensor ``[values, mask, knn, kriging, krr]``.

    ``observed_cells`` are flat grid indices of the observed entries; the
    measurements of ``instance`` assigned to them are the observations.
    """
    flat = spec.flat_index(instance.locations)
    chosen = np.isin(flat, np.asarray(observed_cells, dtype=int))
    locs, power = instance.locations[chosen], instance.power[chosen]
    grid = quantize(SimpleNamespace(locations=locs, power=power), spec)
    trad = traditional_channels(locs, power, spec, knn, kriging, krr)
    return np.concatenate([grid.values[None], grid.mask[None], trad])


class FradeEstimator(NetworkEstimator):
    name = "frade"
    input_channels = 5

    def __init__(self, weights, knn: KnnParams, kriging: KrigingParams, krr: KrrParams, spec=None):
        super().__init__(weights, spec)
        self.knn, self.kriging, self.krr = knn, kriging, krr

    def network_input(self, observed: QuantizedGrid, obs_locations=None, obs_power=None):
        if obs_locations is None or obs_power is None:
            raise ValueError("FRADE needs the raw observed measurements")
        offset = grid_offset(observed)
        trad = traditional_channels(obs_locations, obs_power, observed.spec, self.knn, self.kriging, self.krr)
        x = np.concatenate([
            ((observed.values - offset) * observed.mask)[None],
            observed.mask[None],
            trad - offset,
        ])
        return x, offset
