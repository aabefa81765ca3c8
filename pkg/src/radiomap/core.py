"""Measurements, grids, patches and observation splits.

Locations are stored as ``(N, 2)`` float arrays of ``(x, y)`` meters and
powers as ``(N,)`` arrays of dB values. Grid indices ``(i, j)`` are 1-based
in the public helpers that mirror the matrix convention (row 1 is the top
row, i.e. the largest ``y``) and 0-based everywhere else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Patch draws that land on an empty area are retried this many times.
MAX_PATCH_TRIES = 100


class EmptyPatchError(RuntimeError):
    """Raised when no non-empty patch could be drawn."""


class Location(NamedTuple):
    x: float
    y: float


class CombiningMode(enum.Enum):
    """How measurements assigned to the same grid point are combined."""

    NATURAL_MEAN = "natural_mean"
    DB_MEAN = "db_mean"
    NATURAL_MEDIAN = "natural_median"
    DB_MEDIAN = "db_median"


def db_to_natural(p_db):
    return 10.0 ** (np.asarray(p_db, dtype=float) / 10.0)


def natural_to_db(p_lin):
    return 10.0 * np.log10(p_lin)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Geolocated power samples over a rectangular region ``[0, Lx] x [0, Ly]``.

    ``grid_spacing`` is the spacing of the region grid that patch corners
    are aligned to; ``region`` must be an integer multiple of it.
    """

    locations: np.ndarray
    power: np.ndarray
    region: tuple[float, float]
    wavelength: float
    grid_spacing: float

    def __post_init__(self):
        locs = _frozen(self.locations).reshape(-1, 2)
        power = _frozen(self.power).reshape(-1)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "region", (float(self.region[0]), float(self.region[1])))
        if len(power) < 1 or len(locs) != len(power):
            raise ValueError("need at least one measurement and one location per power value")
        if not np.all(np.isfinite(power)) or not np.all(np.isfinite(locs)):
            raise ValueError("locations and powers must be finite")
        if self.wavelength <= 0 or self.grid_spacing <= 0:
            raise ValueError("wavelength and grid_spacing must be positive")
        lx, ly = self.region
        tol = 1e-9 * max(lx, ly)
        inside = (locs[:, 0] >= -tol) & (locs[:, 0] <= lx + tol) & (locs[:, 1] >= -tol) & (locs[:, 1] <= ly + tol)
        if not np.all(inside):
            raise ValueError("all measurement locations must lie inside the region")

    def __len__(self):
        return len(self.power)

    @property
    def region_grid_shape(self) -> tuple[int, int]:
        """``(N_Ly, N_Lx)``: number of grid spacings along y and x."""
        return (_as_count(self.region[1], self.grid_spacing), _as_count(self.region[0], self.grid_spacing))


def _as_count(length, spacing):
    n = length / spacing
    k = int(round(n))
    if abs(n - k) > 1e-6 or k < 1:
        raise ValueError(f"length {length} is not a positive integer multiple of {spacing}")
    return k


@dataclass(frozen=True)
class GridSpec:
    """``n_rows x n_cols`` grid with point ``(i, j)`` at
    ``origin + [spacing*(j-1), spacing*(n_rows-i)]`` (1-based indices)."""

    n_rows: int
    n_cols: int
    spacing: float
    origin: Location = Location(0.0, 0.0)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "origin", Location(float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def for_patch(cls, patch: "Patch", spacing: float) -> "GridSpec":
        n = _as_count(patch.side, spacing)
        return cls(n, n, spacing, patch.corner)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def size(self) -> int:
        return self.n_rows * self.n_cols

    def coordinates(self) -> np.ndarray:
        """All grid point locations as an ``(n_rows, n_cols, 2)`` array."""
        j = np.arange(self.n_cols)
        i = np.arange(self.n_rows)
        xs = self.origin.x + self.spacing * j
        ys = self.origin.y + self.spacing * (self.n_rows - 1 - i)
        out = np.empty((self.n_rows, self.n_cols, 2))
        out[..., 0] = xs[None, :]
        out[..., 1] = ys[:, None]
        return out

    def nearest(self, locations) -> tuple[np.ndarray, np.ndarray]:
        """0-based ``(row, col)`` of the nearest grid point of each location.

        The grid is separable, so the Euclidean nearest point is found per
        axis. Ties go to the smallest ``(i, j)`` in row-major order: the
        smaller column and, since rows grow downwards, the larger ``y``.
        """
        locs = np.asarray(locations, dtype=float).reshape(-1, 2)
        u = (locs[:, 0] - self.origin.x) / self.spacing
        v = (locs[:, 1] - self.origin.y) / self.spacing
        col = np.ceil(u - 0.5).astype(int)
        k = np.floor(v + 0.5).astype(int)
        col = np.clip(col, 0, self.n_cols - 1)
        k = np.clip(k, 0, self.n_rows - 1)
        return self.n_rows - 1 - k, col

    def flat_index(self, locations) -> np.ndarray:
        rows, cols = self.nearest(locations)
        return rows * self.n_cols + cols


def grid_point_location(spec: GridSpec, i: int, j: int) -> Location:
    """Location of grid point ``(i, j)``, 1-based as in the matrix convention."""
    if not (1 <= i <= spec.n_rows and 1 <= j <= spec.n_cols):
        raise IndexError(f"grid index ({i}, {j}) outside {spec.n_rows}x{spec.n_cols} grid")
    return Location(spec.origin.x + spec.spacing * (j - 1), spec.origin.y + spec.spacing * (spec.n_rows - i))


@dataclass(frozen=True, eq=False)
class QuantizedGrid:
    """Combined per-grid-point values and the 0/1 occupancy mask.

    ``values`` is exactly 0 wherever ``mask`` is 0.
    """

    values: np.ndarray
    mask: np.ndarray
    spec: GridSpec

    def __post_init__(self):
        values = _frozen(self.values)
        mask = _frozen(self.mask)
        if values.shape != self.spec.shape or mask.shape != self.spec.shape:
            raise ValueError("values and mask must match the grid shape")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def occupied(self) -> np.ndarray:
        """Flat indices of occupied grid points, ascending."""
        return np.flatnonzero(self.mask.ravel())

    def restrict(self, flat_indices) -> "QuantizedGrid":
        """Copy with every entry outside ``flat_indices`` zeroed in both channels."""
        keep = np.zeros(self.spec.size, dtype=bool)
        keep[np.asarray(flat_indices, dtype=int)] = True
        keep = keep.reshape(self.spec.shape) & (self.mask > 0)
        return QuantizedGrid(np.where(keep, self.values, 0.0), keep.astype(float), self.spec)


@dataclass(frozen=True)
class Patch:
    corner: Location
    side: float

    def contains(self, locations) -> np.ndarray:
        """Half-open membership ``corner <= x < corner + side`` per axis."""
        locs = np.asarray(locations, dtype=float).reshape(-1, 2)
        x0, y0 = self.corner
        return (locs[:, 0] >= x0) & (locs[:, 0] < x0 + self.side) & (locs[:, 1] >= y0) & (locs[:, 1] < y0 + self.side)


@dataclass(frozen=True, eq=False)
class EstimationInstance:
    """Measurements that fall inside one patch."""

    locations: np.ndarray
    power: np.ndarray
    patch: Patch
    set_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "locations", _frozen(self.locations).reshape(-1, 2))
        object.__setattr__(self, "power", _frozen(self.power).reshape(-1))
        if len(self.locations) != len(self.power):
            raise ValueError("one location per power value")

    def __len__(self):
        return len(self.power)

    def subset(self, indices) -> "EstimationInstance":
        idx = np.asarray(indices, dtype=int)
        return EstimationInstance(self.locations[idx], self.power[idx], self.patch, self.set_index)


@dataclass(frozen=True, eq=False)
class ObservationSplit:
    obs: np.ndarray
    nobs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        object.__setattr__(self, "obs", _frozen(self.obs, int))
        object.__setattr__(self, "nobs", _frozen(self.nobs, int))

    @property
    def n_obs(self) -> int:
        return len(self.obs)


def _combine(groups_values, mode: CombiningMode):
    if mode is CombiningMode.DB_MEAN:
        return np.mean(groups_values)
    if mode is CombiningMode.DB_MEDIAN:
        return np.median(groups_values)
    lin = db_to_natural(groups_values)
    if mode is CombiningMode.NATURAL_MEAN:
        return natural_to_db(np.mean(lin))
    return natural_to_db(np.median(lin))


def quantize(instance, spec: GridSpec, mode: CombiningMode = CombiningMode.DB_MEAN) -> QuantizedGrid:
    """Assign each measurement to its nearest grid point and combine per point.

    ``instance`` is anything with ``locations`` and ``power`` arrays.
    """
    mode = CombiningMode(mode)
    values = np.zeros(spec.size)
    mask = np.zeros(spec.size)
    power = np.asarray(instance.power, dtype=float)
    if len(power):
        flat = spec.flat_index(instance.locations)
        if mode is CombiningMode.DB_MEAN:
            sums = np.bincount(flat, weights=power, minlength=spec.size)
            counts = np.bincount(flat, minlength=spec.size)
            hit = counts > 0
            values[hit] = sums[hit] / counts[hit]
            mask[hit] = 1.0
        else:
            order = np.argsort(flat, kind="stable")
            cells, starts = np.unique(flat[order], return_index=True)
            for cell, group in zip(cells, np.split(power[order], starts[1:])):
                values[cell] = _combine(group, mode)
                mask[cell] = 1.0
    return QuantizedGrid(values.reshape(spec.shape), mask.reshape(spec.shape), spec)


def admissible_corners(mset: MeasurementSet, side: float) -> np.ndarray:
    """All grid-aligned bottom-left corners of ``side x side`` patches, ``(K, 2)``."""
    n_ly, n_lx = mset.region_grid_shape
    n = _as_count(side, mset.grid_spacing)
    if n > n_lx or n > n_ly:
        raise ValueError("patch side exceeds the region")
    mx, my = np.meshgrid(np.arange(n_lx - n + 1), np.arange(n_ly - n + 1), indexing="ij")
    return np.column_stack([mx.ravel(), my.ravel()]) * mset.grid_spacing


def sample_patch(mset: MeasurementSet, side: float, rng: np.random.Generator,
                 set_index: int = 0, min_measurements: int = 1) -> EstimationInstance:
    """Draw a grid-aligned patch uniformly and collect the measurements inside.

    Patches holding fewer than ``min_measurements`` measurements are redrawn
    up to ``MAX_PATCH_TRIES`` times before :class:`EmptyPatchError`.
    """
    corners = admissible_corners(mset, side)
    for _ in range(MAX_PATCH_TRIES):
        cx, cy = corners[rng.integers(len(corners))]
        patch = Patch(Location(cx, cy), float(side))
        inside = patch.contains(mset.locations)
        if np.count_nonzero(inside) >= min_measurements:
            return EstimationInstance(mset.locations[inside], mset.power[inside], patch, set_index)
    raise EmptyPatchError(f"no patch with >= {min_measurements} measurements after {MAX_PATCH_TRIES} draws")


def split_uniform(n_total: int, n_obs: int, rng: np.random.Generator, allow_all: bool = False) -> ObservationSplit:
    """Uniform split of ``range(n_total)`` without replacement.

    ``n_total`` may also be an instance, in which case its length is used.
    By default at least one index must remain unobserved.
    """
    if not isinstance(n_total, (int, np.integer)):
        n_total = len(n_total)
    upper = n_total if allow_all else n_total - 1
    if not 1 <= n_obs <= upper:
        raise ValueError(f"n_obs={n_obs} outside [1, {upper}] for {n_total} items")
    chosen = rng.choice(n_total, size=n_obs, replace=False)
    obs = np.sort(chosen)
    nobs = np.setdiff1d(np.arange(n_total), obs, assume_unique=True)
    return ObservationSplit(obs, nobs)


def split_clustered(instance, spec: GridSpec, n_obs: int, rng: np.random.Generator) -> ObservationSplit:
    """Pick ``n_obs`` occupied grid points uniformly; observe all their measurements."""
    flat = spec.flat_index(instance.locations)
    cells = np.unique(flat)
    if not 1 <= n_obs <= len(cells):
        raise ValueError(f"n_obs={n_obs} outside [1, {len(cells)}] occupied grid points")
    picked = rng.choice(cells, size=n_obs, replace=False)
    chosen = np.isin(flat, picked)
    return ObservationSplit(np.flatnonzero(chosen), np.flatnonzero(~chosen))
