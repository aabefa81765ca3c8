"""Monte-Carlo error metrics and the experiment sweeps built on them."""

from __future__ import annotations

import csv
import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    MAX_PATCH_TRIES,
    EmptyPatchError,
    GridSpec,
    ObservationSplit,
    QuantizedGrid,
    quantize,
    sample_patch,
    split_clustered,
    split_uniform,
)
from .estimators.base import MapEstimator
from .synth import PropagationConfig, hover_locations, generate_map, sample_measurements, synthetic_set, tx_at_distance


class MetricKind(enum.Enum):
    RMSE = "rmse"
    RMSE_G = "rmse_g"
    GRID_NOBS = "rmse_grid_nobs"
    GRID_ALL = "rmse_grid_all"


@dataclass(frozen=True)
class MetricReport:
    estimator: str
    metric: MetricKind
    n_obs: int
    mean_error: float
    std_error: float
    iterations: int
    normalized_density: float


REPORT_HEADER = ["estimator", "metric", "n_obs", "normalized_density", "mean_error_db", "std_error_db", "iterations"]


def normalized_density(n_obs, wavelength, side):
    """Observations per squared wavelength: ``n_obs * wavelength**2 / side**2``."""
    return n_obs * wavelength ** 2 / side ** 2


def n_obs_for_density(density, wavelength, side):
    return max(1, int(round(density * side ** 2 / wavelength ** 2)))


def rmse_from_mse(mses) -> tuple[float, float]:
    """Root of the mean per-iteration MSE and its delta-method standard error."""
    mses = np.asarray(mses, dtype=float)
    if mses.size == 0:
        raise ValueError("no iterations")
    rmse = float(np.sqrt(mses.mean()))
    if mses.size < 2 or rmse == 0.0:
        return rmse, 0.0
    se_mse = mses.std(ddof=1) / np.sqrt(mses.size)
    return rmse, float(se_mse / (2.0 * rmse))


def metric_rmse(per_iteration_errors) -> float:
    """RMSE from a sequence of per-iteration error vectors at unobserved
    locations: per-iteration mean squared error, averaged over iterations,
    then one square root."""
    mses = []
    for err in per_iteration_errors:
        err = np.asarray(err, dtype=float)
        if err.size == 0:
            raise ValueError("an iteration has no unobserved locations")
        mses.append(np.mean(err ** 2))
    return rmse_from_mse(mses)[0]


def split_grid(grid: QuantizedGrid, n_obs: int, rng, allow_all: bool = False) -> ObservationSplit:
    """Uniform split of the occupied entries; indices are flat grid indices."""
    occ = grid.occupied
    sp = split_uniform(len(occ), n_obs, rng, allow_all=allow_all)
    return ObservationSplit(occ[sp.obs], occ[sp.nobs])


def grid_errors(kind: MetricKind, estimate, grid: QuantizedGrid, split: ObservationSplit) -> np.ndarray:
    kind = MetricKind(kind)
    if kind is MetricKind.GRID_NOBS:
        idx = split.nobs
        if len(idx) == 0:
            raise ValueError("no unobserved grid entries")
    elif kind is MetricKind.GRID_ALL:
        idx = grid.occupied
        if len(idx) == 0:
            raise ValueError("no occupied grid entries")
    else:
        raise ValueError(f"{kind} is not a grid metric")
    return np.asarray(estimate, dtype=float).ravel()[idx] - grid.values.ravel()[idx]


def metric_grid(kind: MetricKind, estimate, grid: QuantizedGrid, split: ObservationSplit) -> float:
    """Single-draw grid RMSE over unobserved (``GRID_NOBS``) or all occupied
    (``GRID_ALL``) entries."""
    return float(np.sqrt(np.mean(grid_errors(kind, estimate, grid, split) ** 2)))


def _draw(sets, side, rng, accept):
    for _ in range(MAX_PATCH_TRIES):
        i = int(rng.integers(len(sets)))
        inst = sample_patch(sets[i], side, rng, set_index=i)
        if accept(inst):
            return inst
    raise EmptyPatchError("could not draw a patch with enough measurements")


def mc_iteration(kind: MetricKind, n_obs: int, sets, estimator: MapEstimator, side: float, spacing: float,
                 rng: np.random.Generator) -> float:
    """One Monte-Carlo draw; returns the mean squared error of that draw."""
    if kind is MetricKind.RMSE:
        inst = _draw(sets, side, rng, lambda s: len(s) > n_obs)
        spec = GridSpec.for_patch(inst.patch, spacing)
        sp = split_uniform(len(inst), n_obs, rng)
    elif kind is MetricKind.RMSE_G:
        def enough(s):
            return len(np.unique(GridSpec.for_patch(s.patch, spacing).flat_index(s.locations))) > n_obs
        inst = _draw(sets, side, rng, enough)
        spec = GridSpec.for_patch(inst.patch, spacing)
        sp = split_clustered(inst, spec, n_obs, rng)
    else:
        need = n_obs if kind is MetricKind.GRID_ALL else n_obs + 1

        def enough(s):
            return len(np.unique(GridSpec.for_patch(s.patch, spacing).flat_index(s.locations))) >= need
        inst = _draw(sets, side, rng, enough)
        spec = GridSpec.for_patch(inst.patch, spacing)
        grid = quantize(inst, spec)
        sp = split_grid(grid, n_obs, rng, allow_all=kind is MetricKind.GRID_ALL)
        chosen = np.isin(spec.flat_index(inst.locations), sp.obs)
        est = estimator.estimate_grid(grid.restrict(sp.obs), inst.locations[chosen], inst.power[chosen])
        return float(np.mean(grid_errors(kind, est, grid, sp) ** 2))

    est = estimator.estimate_points(inst.locations[sp.obs], inst.power[sp.obs], inst.locations[sp.nobs], spec=spec)
    return float(np.mean((inst.power[sp.nobs] - est) ** 2))


def run_sweep(test_sets, estimator: MapEstimator, kinds, n_obs_list, side: float, spacing: float,
              iterations: int, seed: int = 0, threads: int = 1, name: str | None = None) -> list[MetricReport]:
    """Monte-Carlo estimate of each metric for each number of observations.

    Iteration ``t`` of metric ``kinds[a]`` at ``n_obs_list[b]`` draws from its
    own stream ``SeedSequence(seed, spawn_key=(a, b, t))``, so results do not
    depend on ``threads``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    kinds = [MetricKind(k) for k in kinds]
    wavelength = test_sets[0].wavelength
    name = name or estimator.name
    reports = []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for a, kind in enumerate(kinds):
            for b, n_obs in enumerate(n_obs_list):
                def one(t, kind=kind, n_obs=n_obs, a=a, b=b):
                    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(a, b, t)))
                    return mc_iteration(kind, int(n_obs), test_sets, estimator, side, spacing, rng)
                mses = list(pool.map(one, range(iterations))) if pool else [one(t) for t in range(iterations)]
                mean, se = rmse_from_mse(mses)
                reports.append(MetricReport(name, kind, int(n_obs), mean, se, iterations,
                                            normalized_density(int(n_obs), wavelength, side)))
    finally:
        if pool:
            pool.shutdown()
    return reports


def _fmt(v):
    return f"{v:.6g}"


def report_rows(reports: Sequence[MetricReport]):
    for r in reports:
        yield [r.estimator, r.metric.value, str(r.n_obs), _fmt(r.normalized_density), _fmt(r.mean_error),
               _fmt(r.std_error), str(r.iterations)]


def write_report_csv(reports, path, extra: dict | None = None):
    """Write reports to a path or text stream; ``extra`` maps additional column names to per-row values."""
    extra = extra or {}
    if hasattr(path, "write"):
        _write_rows(reports, path, extra)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(reports, fh, extra)


def _write_rows(reports, fh, extra):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_HEADER + list(extra))
    for i, row in enumerate(report_rows(reports)):
        w.writerow(row + [v[i] if isinstance(v[i], str) else _fmt(v[i]) for v in extra.values()])


# ---------------------------------------------------------------- experiments


def distance_sweep(template: PropagationConfig, distances, estimator: MapEstimator, density: float = 0.001,
                   side: float = 43.2, spacing: float = 1.2, region=(54.0, 54.0), iterations: int = 500,
                   seed: int = 0, threads: int = 1, along_spacing=None) -> list[tuple[float, MetricReport]]:
    """RMSE versus transmitter distance from the region center at a fixed
    normalized density; one synthetic set per distance."""
    if any(d <= 0 for d in distances):
        raise ValueError("distances must be positive")
    n_obs = n_obs_for_density(density, template.wavelength, side)
    seeds = np.random.SeedSequence(seed).generate_state(len(distances))
    out = []
    for d, s in zip(distances, seeds):
        cfg = replace(template, tx_location=tx_at_distance(region, d), seed=int(s))
        mset = synthetic_set(region, spacing, cfg, along_spacing)
        rep = run_sweep([mset], estimator, [MetricKind.RMSE], [n_obs], side, spacing, iterations,
                        seed=int(s), threads=threads)[0]
        out.append((float(d), rep))
    return out


def hover_set(region, spacing: float, cfg: PropagationConfig, per_point: int = 5, jitter: float = 0.3):
    """Measurements taken hovering at each region-grid point (several per point)."""
    gt = generate_map(region, cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    locs = hover_locations(region, spacing, per_point, jitter, rng)
    return sample_measurements(gt, locs, spacing)


@dataclass(frozen=True)
class ScenarioResult:
    scenario: str
    density: float
    report: MetricReport
    params: object


def scenario_sweep(scenarios: dict, densities, search=None, side: float = 40.0, spacing: float = 4.0,
                   region=(120.0, 120.0), n_train_sets: int = 4, n_test_sets: int = 2, train_instances: int = 100,
                   train_splits: int = 100, iterations: int = 300, seed: int = 0,
                   threads: int = 1) -> list[ScenarioResult]:
    """Kriging RMSE per (scenario, density), retraining the Kriging
    hyperparameters on separate training sets at every point."""
    from .estimators.traditional import KrigingEstimator
    from .training import SearchGrid, draw_instances, draw_splits, train_kriging

    if not scenarios:
        raise ValueError("need at least one scenario")
    search = search or SearchGrid()
    root = np.random.SeedSequence(seed)
    results = []
    for name, template in scenarios.items():
        sub = root.spawn(1)[0]
        set_seeds = sub.generate_state(n_train_sets + n_test_sets)
        sets = [hover_set(region, spacing, replace(template, seed=int(s))) for s in set_seeds]
        train_sets, test_sets = sets[:n_train_sets], sets[n_train_sets:]
        rng = np.random.default_rng(sub.spawn(1)[0])
        instances = draw_instances(train_sets, side, train_instances, rng, min_measurements=2)
        for density in densities:
            n_obs = n_obs_for_density(density, template.wavelength, side)
            splits = draw_splits(instances, lambda _r, n=n_obs: n, train_splits, rng)
            params = train_kriging(splits, search).best
            rep = run_sweep(test_sets, KrigingEstimator(params), [MetricKind.RMSE], [n_obs], side, spacing,
                            iterations, seed=int(rng.integers(2 ** 32)), threads=threads)[0]
            results.append(ScenarioResult(name, float(density), rep, params))
    return results
