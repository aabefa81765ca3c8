import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radiomap.core import (
    CombiningMode,
    EmptyPatchError,
    EstimationInstance,
    GridSpec,
    Location,
    MeasurementSet,
    Patch,
    admissible_corners,
    grid_point_location,
    quantize,
    sample_patch,
    split_clustered,
    split_uniform,
)


def _instance(locs, power, corner=(0.0, 0.0), side=100.0):
    return EstimationInstance(np.asarray(locs, float), np.asarray(power, float), Patch(Location(*corner), side))


def brute_force_nearest(spec, locs):
    """Flat index of the closest grid point by exhaustive search; argmin
    keeps the first (row-major smallest) of equally close points."""
    pts = spec.coordinates().reshape(-1, 2)
    d2 = ((locs[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


# ---------------------------------------------------------------- grid geometry


@pytest.mark.parametrize("spacing, n_rows, i, j, expected", [
    (1.2, 16, 16, 1, (0.0, 0.0)),
    (1.2, 16, 1, 16, (18.0, 18.0)),
    (4.0, 16, 1, 1, (0.0, 60.0)),
])
def test_grid_point_location_examples(spacing, n_rows, i, j, expected):
    loc = grid_point_location(GridSpec(n_rows, 16, spacing), i, j)
    assert loc == pytest.approx(expected, abs=1e-12)


def test_grid_point_location_uses_origin():
    spec = GridSpec(4, 3, 2.0, Location(10.0, 20.0))
    assert grid_point_location(spec, 4, 1) == (10.0, 20.0)
    assert grid_point_location(spec, 1, 3) == (14.0, 26.0)


@pytest.mark.parametrize("i, j", [(0, 1), (1, 0), (17, 1), (1, 17)])
def test_grid_point_location_out_of_range(i, j):
    with pytest.raises(IndexError):
        grid_point_location(GridSpec(16, 16, 1.2), i, j)


def test_coordinates_agree_with_point_formula():
    spec = GridSpec(5, 7, 0.5, Location(1.0, 2.0))
    coords = spec.coordinates()
    for i in range(1, 6):
        for j in range(1, 8):
            assert tuple(coords[i - 1, j - 1]) == grid_point_location(spec, i, j)


@pytest.mark.parametrize("kwargs", [dict(n_rows=0, n_cols=3, spacing=1.0), dict(n_rows=3, n_cols=3, spacing=0.0)])
def test_gridspec_rejects_invalid(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8),
       st.lists(st.tuples(st.floats(-3, 12, allow_nan=False), st.floats(-3, 12, allow_nan=False)),
                min_size=1, max_size=30))
def test_nearest_matches_brute_force(n_rows, n_cols, pts):
    spec = GridSpec(n_rows, n_cols, 1.3, Location(0.5, -0.25))
    locs = np.array(pts)
    assert np.array_equal(spec.flat_index(locs), brute_force_nearest(spec, locs))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6),
       st.lists(st.tuples(st.integers(-4, 28), st.integers(-4, 28)), min_size=1, max_size=30))
def test_nearest_breaks_exact_ties_row_major(n_rows, n_cols, quarter_pts):
    # Quarter-spacing lattice: many points sit exactly halfway between grid points.
    spec = GridSpec(n_rows, n_cols, 1.0)
    locs = np.array(quarter_pts, dtype=float) / 4.0
    assert np.array_equal(spec.flat_index(locs), brute_force_nearest(spec, locs))


def test_tie_goes_to_smallest_index():
    spec = GridSpec(2, 2, 1.0)
    # Equidistant from all four grid points; (1, 1) is the top-left one.
    rows, cols = spec.nearest([[0.5, 0.5]])
    assert (rows[0], cols[0]) == (0, 0)


# ---------------------------------------------------------------- quantize


def test_quantize_db_mean_example():
    g = quantize(_instance([[0.1, 0.1], [0.2, 0.0]], [-50, -60]), GridSpec(2, 2, 1.0))
    assert g.values[1, 0] == -55.0
    assert g.mask.sum() == 1


def test_quantize_natural_mean_example():
    g = quantize(_instance([[0.1, 0.1], [0.2, 0.0]], [-50, -60]), GridSpec(2, 2, 1.0), CombiningMode.NATURAL_MEAN)
    assert g.values[1, 0] == pytest.approx(10 * np.log10((1e-5 + 1e-6) / 2))
    assert g.values[1, 0] == pytest.approx(-52.60, abs=5e-3)


def test_quantize_db_median_example():
    g = quantize(_instance([[0.1, 0.1], [0.2, 0.0], [0, 0]], [-50, -60, -70]), GridSpec(2, 2, 1.0),
                 CombiningMode.DB_MEDIAN)
    assert g.values[1, 0] == -60.0


def test_quantize_natural_median():
    g = quantize(_instance([[0, 0]] * 3, [-50, -60, -70]), GridSpec(1, 1, 1.0), CombiningMode.NATURAL_MEDIAN)
    assert g.values[0, 0] == pytest.approx(-60.0)


def test_quantize_empty_instance():
    g = quantize(_instance(np.empty((0, 2)), []), GridSpec(3, 3, 1.0))
    assert not g.mask.any() and not g.values.any()


def _random_instance(data):
    n = data.draw(st.integers(1, 40))
    locs = np.array(data.draw(st.lists(st.tuples(st.floats(0, 5.9), st.floats(0, 5.9)), min_size=n, max_size=n)))
    power = np.array(data.draw(st.lists(st.floats(-120, 0), min_size=n, max_size=n)))
    return _instance(locs, power, side=6.0)


@settings(max_examples=100, deadline=None)
@given(st.data(), st.sampled_from(list(CombiningMode)))
def test_quantize_mask_and_zero_fill(data, mode):
    inst = _random_instance(data)
    spec = GridSpec(5, 5, 1.2)
    g = quantize(inst, spec, mode)
    occupied = np.zeros(spec.size, bool)
    occupied[brute_force_nearest(spec, inst.locations)] = True
    assert np.array_equal(g.mask.ravel() > 0, occupied)
    assert np.all(g.values.ravel()[~occupied] == 0)
    assert np.array_equal(g.values * g.mask, g.values)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_quantize_single_measurement_per_point_is_exact(data):
    spec = GridSpec(6, 6, 1.0)
    cells = data.draw(st.lists(st.integers(0, 35), unique=True, min_size=1, max_size=36))
    power = np.array(data.draw(st.lists(st.floats(-120, 0), min_size=len(cells), max_size=len(cells))))
    locs = spec.coordinates().reshape(-1, 2)[cells]
    g = quantize(_instance(locs, power, side=6.0), spec, CombiningMode.DB_MEAN)
    assert np.array_equal(g.values.ravel()[cells], power)


@settings(max_examples=100, deadline=None)
@given(st.floats(-120, 0), st.integers(1, 8), st.sampled_from(list(CombiningMode)))
def test_constant_list_combines_to_constant(value, count, mode):
    g = quantize(_instance([[0.0, 0.0]] * count, [value] * count), GridSpec(1, 1, 1.0), mode)
    assert g.values[0, 0] == pytest.approx(value, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-120, 0), min_size=1, max_size=20))
def test_natural_mean_dominates_db_mean(values):
    inst = _instance([[0.0, 0.0]] * len(values), values)
    spec = GridSpec(1, 1, 1.0)
    nat = quantize(inst, spec, CombiningMode.NATURAL_MEAN).values[0, 0]
    db = quantize(inst, spec, CombiningMode.DB_MEAN).values[0, 0]
    assert nat >= db - 1e-9


def test_restrict_zeroes_both_channels():
    g = quantize(_instance([[0, 0], [1, 0], [2, 0]], [-1, -2, -3]), GridSpec(1, 3, 1.0))
    r = g.restrict([1])
    assert r.values.tolist() == [[0.0, -2.0, 0.0]]
    assert r.mask.tolist() == [[0.0, 1.0, 0.0]]


# ---------------------------------------------------------------- patches


def _mset(n_cells=45, spacing=1.2, n=500, seed=0):
    side = n_cells * spacing
    rng = np.random.default_rng(seed)
    return MeasurementSet(rng.uniform(0, side, (n, 2)), rng.normal(-60, 5, n), (side, side), 0.3266, spacing)


def test_admissible_corners_count():
    mset = _mset()
    assert len(admissible_corners(mset, 16 * 1.2)) == 30 ** 2 == 900


def test_full_region_patch_has_one_corner():
    mset = _mset()
    corners = admissible_corners(mset, 45 * 1.2)
    assert corners.tolist() == [[0.0, 0.0]]


def test_patch_corners_are_multiples_of_spacing():
    mset = _mset(n_cells=10, spacing=0.7)
    corners = admissible_corners(mset, 3 * 0.7)
    k = corners / 0.7
    assert np.allclose(k, np.round(k), atol=1e-9)
    assert np.all(corners + 3 * 0.7 <= 10 * 0.7 + 1e-9)


def test_sample_patch_is_deterministic_and_complete():
    mset = _mset()
    a = sample_patch(mset, 19.2, np.random.default_rng(3))
    b = sample_patch(mset, 19.2, np.random.default_rng(3))
    assert a.patch == b.patch
    assert np.array_equal(a.locations, b.locations) and np.array_equal(a.power, b.power)
    inside = a.patch.contains(mset.locations)
    assert inside.sum() == len(a)
    assert np.array_equal(mset.power[inside], a.power)


def test_sample_patch_corner_distribution_is_uniform():
    mset = _mset(n_cells=4, spacing=1.0, n=400)
    rng = np.random.default_rng(0)
    corners = [sample_patch(mset, 3.0, rng).patch.corner for _ in range(4000)]
    _, counts = np.unique(np.array(corners), axis=0, return_counts=True)
    assert len(counts) == 4
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)


def test_sample_patch_empty_raises():
    mset = MeasurementSet([[9.5, 9.5]], [-50.0], (10.0, 10.0), 0.3, 1.0)
    with pytest.raises(EmptyPatchError):
        sample_patch(mset, 2.0, np.random.default_rng(0), min_measurements=2)


def test_sample_patch_rejects_oversized_patch():
    with pytest.raises(ValueError):
        sample_patch(_mset(n_cells=4, spacing=1.0), 5.0, np.random.default_rng(0))


def test_measurement_set_validation():
    with pytest.raises(ValueError):
        MeasurementSet([[11.0, 0.0]], [-50.0], (10.0, 10.0), 0.3, 1.0)
    with pytest.raises(ValueError):
        MeasurementSet(np.empty((0, 2)), [], (10.0, 10.0), 0.3, 1.0)
    with pytest.raises(ValueError):
        MeasurementSet([[1.0, 1.0]], [-50.0], (10.0, 10.0), 0.0, 1.0)


# ---------------------------------------------------------------- splits


def test_split_uniform_cardinality():
    sp = split_uniform(10, 9, np.random.default_rng(0))
    assert len(sp.nobs) == 1 and len(sp.obs) == 9


@pytest.mark.parametrize("n_obs", [0, 10, 11])
def test_split_uniform_rejects_bad_n_obs(n_obs):
    with pytest.raises(ValueError):
        split_uniform(10, n_obs, np.random.default_rng(0))


def test_split_uniform_allow_all():
    sp = split_uniform(4, 4, np.random.default_rng(0), allow_all=True)
    assert sp.obs.tolist() == [0, 1, 2, 3] and sp.nobs.size == 0


def test_split_uniform_two_items_is_fair():
    first = sum(split_uniform(2, 1, np.random.default_rng(s)).obs[0] == 0 for s in range(10_000))
    assert abs(first / 10_000 - 0.5) < 0.05


def test_split_uniform_deterministic():
    a = split_uniform(50, 20, np.random.default_rng(9))
    b = split_uniform(50, 20, np.random.default_rng(9))
    assert np.array_equal(a.obs, b.obs)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 60), st.data())
def test_split_uniform_partitions(n, data):
    n_obs = data.draw(st.integers(1, n - 1))
    sp = split_uniform(n, n_obs, np.random.default_rng(data.draw(st.integers(0, 2 ** 32))))
    assert len(np.intersect1d(sp.obs, sp.nobs)) == 0
    assert sorted(np.concatenate([sp.obs, sp.nobs]).tolist()) == list(range(n))
    assert sp.n_obs == n_obs


def _five_per_point():
    spec = GridSpec(4, 4, 4.0)
    pts = np.repeat(spec.coordinates().reshape(-1, 2), 5, axis=0)
    pts = pts + np.random.default_rng(1).uniform(-0.3, 0.3, pts.shape)
    return _instance(pts, np.arange(len(pts), dtype=float), side=16.0), spec


def test_split_clustered_five_per_point():
    inst, spec = _five_per_point()
    sp = split_clustered(inst, spec, 3, np.random.default_rng(0))
    assert len(sp.obs) == 15
    cells = spec.flat_index(inst.locations)
    assert len(np.unique(cells[sp.obs])) == 3
    assert not np.isin(cells[sp.nobs], cells[sp.obs]).any()


def test_split_clustered_all_points_leaves_nothing():
    inst, spec = _five_per_point()
    sp = split_clustered(inst, spec, 16, np.random.default_rng(0))
    assert sp.nobs.size == 0 and len(sp.obs) == 80


def test_split_clustered_rejects_too_many():
    inst, spec = _five_per_point()
    with pytest.raises(ValueError):
        split_clustered(inst, spec, 17, np.random.default_rng(0))


def test_split_clustered_single_measurement_cells_match_uniform():
    spec = GridSpec(2, 2, 1.0)
    inst = _instance(spec.coordinates().reshape(-1, 2), np.zeros(4), side=2.0)
    counts = np.zeros(4)
    for s in range(4000):
        counts[split_clustered(inst, spec, 1, np.random.default_rng(s)).obs[0]] += 1
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)
