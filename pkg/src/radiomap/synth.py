"""Synthetic power maps: log-distance path loss, Gudmundson shadowing,
sum-of-sinusoids small-scale fading and Gaussian measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Location, MeasurementSet

N_FADING_WAVES = 32
REFERENCE_DISTANCE = 1.0
_JITTER = 1e-9


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagationConfig:
    tx_power_plus_gain: float = 0.0
    tx_location: Location = Location(-50.0, 0.0)
    path_loss_exponent: float = 2.0
    shadow_variance: float = 0.0
    shadow_half_distance: float = 50.0
    fading_enabled: bool = False
    noise_std: float = 0.0
    wavelength: float = 0.3266
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tx_location", Location(float(self.tx_location[0]), float(self.tx_location[1])))
        if self.shadow_variance < 0 or self.path_loss_exponent < 0 or self.noise_std < 0:
            raise ValueError("shadow_variance, path_loss_exponent and noise_std must be non-negative")
        if not self.shadow_half_distance > 0 or not self.wavelength > 0:
            raise ValueError("shadow_half_distance and wavelength must be positive")


def gudmundson_covariance(distance, variance, half_distance):
    """``variance * 2**(-distance / half_distance)``."""
    return variance * np.exp2(-np.asarray(distance, dtype=float) / half_distance)


def shadow_covariance(loc_a, loc_b, cfg: PropagationConfig) -> float:
    d = np.hypot(loc_a[0] - loc_b[0], loc_a[1] - loc_b[1])
    return float(gudmundson_covariance(d, cfg.shadow_variance, cfg.shadow_half_distance))


def _axis(length, spacing):
    n = int(np.ceil(length / spacing - 1e-9))
    return spacing * np.arange(n + 1)


@lru_cache(maxsize=8)
def _correlation_factor(nx, ny, spacing, half_distance):
    # Cholesky factor of the unit-variance correlation on the shadowing grid.
    xs, ys = spacing * np.arange(nx), spacing * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    corr = gudmundson_covariance(d, 1.0, half_distance)
    corr[np.diag_indices_from(corr)] += _JITTER
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as exc:
        raise GenerationError("shadowing covariance is not positive definite") from exc


class GroundTruthMap:
    """A fixed realization of the propagation model over a region.

    ``fading_free(x)`` is the map without small-scale fading and
    ``with_fading(x)`` adds the fading gain ``10*log10(|h(x)|^2)`` of a
    unit-mean-power sum of plane waves.
    """

    def __init__(self, region, cfg: PropagationConfig, shadow_spacing=None):
        self.region = (float(region[0]), float(region[1]))
        self.config = cfg
        ss = np.random.SeedSequence(cfg.seed)
        shadow_seq, fading_seq, noise_seq = ss.spawn(3)
        self._noise_seq = noise_seq

        if shadow_spacing is None:
            shadow_spacing = max(max(self.region) / 44.0, 1e-3)
        self._shadow = None
        if cfg.shadow_variance > 0:
            xs, ys = _axis(self.region[0], shadow_spacing), _axis(self.region[1], shadow_spacing)
            factor = _correlation_factor(len(xs), len(ys), float(shadow_spacing), float(cfg.shadow_half_distance))
            white = np.random.default_rng(shadow_seq).standard_normal(factor.shape[0])
            field = np.sqrt(cfg.shadow_variance) * (factor @ white)
            self._shadow = RegularGridInterpolator((xs, ys), field.reshape(len(xs), len(ys)),
                                                   method="linear", bounds_error=False, fill_value=None)

        rng = np.random.default_rng(fading_seq)
        angles = rng.uniform(0.0, 2 * np.pi, N_FADING_WAVES)
        self._wavevectors = (2 * np.pi / cfg.wavelength) * np.column_stack([np.cos(angles), np.sin(angles)])
        self._phases = rng.uniform(0.0, 2 * np.pi, N_FADING_WAVES)

    def path_loss(self, locations):
        locs = np.asarray(locations, dtype=float).reshape(-1, 2)
        tx = self.config.tx_location
        d = np.hypot(locs[:, 0] - tx.x, locs[:, 1] - tx.y)
        d = np.maximum(d, self.config.wavelength)
        return 10.0 * self.config.path_loss_exponent * np.log10(d / REFERENCE_DISTANCE)

    def shadowing(self, locations):
        locs = np.asarray(locations, dtype=float).reshape(-1, 2)
        if self._shadow is None:
            return np.zeros(len(locs))
        return self._shadow(locs)

    def fading_gain(self, locations):
        """``10*log10(|h|^2)`` with ``E|h|^2 = 1``; the fading loss is its negative."""
        locs = np.asarray(locations, dtype=float).reshape(-1, 2)
        arg = locs @ self._wavevectors.T + self._phases
        h = np.exp(1j * arg).sum(axis=1) / np.sqrt(N_FADING_WAVES)
        return 10.0 * np.log10(np.abs(h) ** 2)

    def fading_free(self, locations):
        return self.config.tx_power_plus_gain - self.path_loss(locations) - self.shadowing(locations)

    def with_fading(self, locations):
        base = self.fading_free(locations)
        if not self.config.fading_enabled:
            return base
        return base + self.fading_gain(locations)


def generate_map(region, cfg: PropagationConfig, shadow_spacing=None) -> GroundTruthMap:
    """Draw one ground-truth map. The shadowing field is sampled exactly on a
    regular grid (``shadow_spacing``, default longest side / 44) and bilinearly
    interpolated elsewhere."""
    return GroundTruthMap(region, cfg, shadow_spacing)


def sample_measurements(gt: GroundTruthMap, locations, grid_spacing: float, rng=None) -> MeasurementSet:
    """Noisy measurements ``p(x_n) + z_n`` at the given locations.

    Noise comes from the map's own seed unless ``rng`` is given.
    """
    locs = np.asarray(locations, dtype=float).reshape(-1, 2)
    if rng is None:
        rng = np.random.default_rng(gt._noise_seq)
    power = gt.with_fading(locs)
    if gt.config.noise_std > 0:
        power = power + gt.config.noise_std * rng.standard_normal(len(locs))
    return MeasurementSet(locs, power, gt.region, gt.config.wavelength, grid_spacing)


def lawnmower_locations(region, line_spacing: float, along_spacing: float) -> np.ndarray:
    """Serpentine survey: lines of constant ``y`` spaced ``line_spacing``
    apart, one point every ``along_spacing`` along each line, both ends
    included and no turnaround points."""
    if line_spacing <= 0 or along_spacing <= 0:
        raise ValueError("spacings must be positive")
    lx, ly = region
    xs = along_spacing * np.arange(int(np.floor(lx / along_spacing + 1e-9)) + 1)
    ys = line_spacing * np.arange(int(np.floor(ly / line_spacing + 1e-9)) + 1)
    rows = []
    for k, y in enumerate(ys):
        line = xs if k % 2 == 0 else xs[::-1]
        rows.append(np.column_stack([line, np.full(len(line), y)]))
    return np.vstack(rows)


def hover_locations(region, spacing: float, per_point: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """``per_point`` jittered samples at every point of a regular grid, clipped to the region."""
    lx, ly = region
    xs = spacing * np.arange(int(np.floor(lx / spacing + 1e-9)) + 1)
    ys = spacing * np.arange(int(np.floor(ly / spacing + 1e-9)) + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    base = np.repeat(np.column_stack([gx.ravel(), gy.ravel()]), per_point, axis=0)
    pts = base + jitter * rng.standard_normal(base.shape)
    return np.clip(pts, 0.0, [lx, ly])


def tx_at_distance(region, distance: float, angle: float = 0.0) -> Location:
    """Transmitter ``distance`` meters from the region center along ``angle``."""
    cx, cy = region[0] / 2.0, region[1] / 2.0
    return Location(cx + distance * np.cos(angle), cy + distance * np.sin(angle))


def synthetic_set(region, grid_spacing: float, cfg: PropagationConfig, along_spacing=None) -> MeasurementSet:
    """Lawnmower survey of a freshly drawn map; the usual way to get a test set."""
    gt = generate_map(region, cfg)
    if along_spacing is None:
        along_spacing = 0.27 * cfg.wavelength / 0.3266
    locs = lawnmower_locations(region, grid_spacing, along_spacing)
    return sample_measurements(gt, locs, grid_spacing)


def with_seed(cfg: PropagationConfig, seed: int) -> PropagationConfig:
    return replace(cfg, seed=int(seed))
