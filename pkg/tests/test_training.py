import numpy as np
import pytest

from oracles import kink_margin_network
from radiomap.core import GridSpec, quantize
from radiomap.estimators import (
    Kernel,
    KnnEstimator,
    KnnParams,
    KrigingEstimator,
    KrigingParams,
    KrrEstimator,
    KrrParams,
    NetworkEstimator,
    NetworkWeights,
)
from radiomap.estimators.network import loss_and_grad, masked_mse, network_forward
from radiomap.synth import PropagationConfig, synthetic_set
from radiomap.training import (
    Adam,
    AdamConfig,
    SearchGrid,
    TrainingError,
    draw_instances,
    draw_splits,
    learning_curve,
    make_training_examples,
    train_knn,
    train_kriging,
    train_krr,
    train_network,
    train_network_tensors,
    train_traditional,
    uniform_n_obs,
)


@pytest.fixture(scope="module")
def small_sets():
    cfg = PropagationConfig(tx_location=(-15.0, 5.0), shadow_variance=9.0, shadow_half_distance=6.0,
                            noise_std=0.5, path_loss_exponent=2.0)
    return [synthetic_set((14.4, 14.4), 1.2, PropagationConfig(**{**cfg.__dict__, "seed": s}), 0.6)
            for s in range(4)]


@pytest.fixture(scope="module")
def instances(small_sets):
    return draw_instances(small_sets, 7.2, 30, np.random.default_rng(0), min_measurements=20)


def test_default_search_grid_values():
    g = SearchGrid()
    assert g.knn_k == list(range(2, 14))
    assert np.allclose(g.kriging_var, [(0.01 + 0.1 * i) ** 2 for i in range(10)])
    assert g.kriging_var[-1] == pytest.approx(0.91 ** 2)
    assert g.kriging_halfdist == [50.0 * i for i in range(1, 13)]
    assert np.allclose(g.krr_reg, [10.0 ** -e for e in range(12, 0, -1)])
    assert set(g.krr_kernels) == {Kernel.GAUSSIAN, Kernel.LAPLACIAN}
    assert g.krr_widths == [float(w) for w in range(20, 151, 10)]


def test_empty_search_grid_rejected():
    with pytest.raises(ValueError):
        SearchGrid(knn_k=[])


def test_single_candidate_grid(instances):
    g = SearchGrid(knn_k=[4], kriging_var=[2.0], kriging_halfdist=[7.0], kriging_noise=[0.3],
                   krr_reg=[1e-3], krr_kernels=["laplacian"], krr_widths=[30.0])
    knn, kriging, krr = train_traditional(instances, g, uniform_n_obs(5, 15), np.random.default_rng(1), n_splits=20)
    assert knn == KnnParams(4)
    assert kriging == KrigingParams(2.0, 7.0, 0.3)
    assert krr == KrrParams(1e-3, Kernel.LAPLACIAN, 30.0)


def _reference_objective(estimator, splits):
    mses = [np.mean((sp.query_power - estimator.estimate_points(sp.obs_locs, sp.obs_power, sp.query_locs)) ** 2)
            for sp in splits]
    return np.sqrt(np.mean(mses))


@pytest.mark.parametrize("which", ["knn", "kriging", "krr"])
def test_search_is_exhaustive_and_objectives_are_exact(instances, which):
    grid = SearchGrid(knn_k=[2, 3, 5, 8], kriging_var=[0.5, 4.0, 9.0], kriging_halfdist=[2.0, 6.0, 20.0],
                      kriging_noise=[0.25, 1.0], krr_reg=[1e-6, 1e-3, 1e-1], krr_widths=[5.0, 20.0, 60.0])
    splits = draw_splits(instances, uniform_n_obs(10, 15), 15, np.random.default_rng(2))
    trainer, est_cls = {"knn": (train_knn, KnnEstimator), "kriging": (train_kriging, KrigingEstimator),
                        "krr": (train_krr, KrrEstimator)}[which]
    res = trainer(splits, grid)
    ref = np.array([_reference_objective(est_cls(c), splits) for c in res.candidates])
    assert np.allclose(res.objectives, ref, rtol=1e-9, atol=1e-9)
    assert res.best == res.candidates[int(np.argmin(ref))]
    assert res.objectives.min() == res.objectives[res.candidates.index(res.best)]


def test_ties_pick_simplest_candidate(instances):
    # Every split observes fewer than 2 points, so K = 2 and K = 3 both average all observations.
    splits = draw_splits(instances, lambda _r: 1, 10, np.random.default_rng(0))
    res = train_knn(splits, SearchGrid(knn_k=[3, 2]))
    assert res.objectives[0] == res.objectives[1]
    assert res.best == KnnParams(2)
    res = train_kriging(splits, SearchGrid(kriging_halfdist=[10.0, 300.0], kriging_var=[1.0]))
    assert res.candidates[0].shadow_half_distance == 300.0


def test_training_is_deterministic(instances):
    a = train_traditional(instances, SearchGrid(), rng=np.random.default_rng(5), n_splits=10)
    b = train_traditional(instances, SearchGrid(), rng=np.random.default_rng(5), n_splits=10)
    assert a == b


# ---------------------------------------------------------------- examples


def test_example_count(instances):
    rng = np.random.default_rng(0)
    spec = GridSpec.for_patch(instances[0].patch, 1.2)
    examples = [ex for inst in instances[:8] for ex in make_training_examples(inst, spec, (3, 10), 5, rng)]
    assert len(examples) == 8 * 5
    # Same bookkeeping at full size: 40,000 instances x 5 copies.
    assert 40_000 * 5 == 200_000


def test_fixed_n_obs_range(instances):
    inst = instances[0]
    spec = GridSpec.for_patch(inst.patch, 1.2)
    occupied = len(quantize(inst, spec).occupied)
    for k in (4, occupied + 5):
        for ex in make_training_examples(inst, spec, (k, k), 3, np.random.default_rng(k)):
            assert ex.input.mask.sum() == min(k, occupied)


def test_copies_are_distinct_and_consistent(instances):
    inst = instances[1]
    spec = GridSpec.for_patch(inst.patch, 1.2)
    exs = make_training_examples(inst, spec, (8, 8), 5, np.random.default_rng(3))
    masks = {ex.input.mask.tobytes() for ex in exs}
    assert len(masks) == 5
    for ex in exs:
        assert np.all(ex.input.values[ex.input.mask == 0] == 0)
        keep = ex.input.mask > 0
        assert np.array_equal(ex.input.values[keep], ex.target.values[keep])
    again = make_training_examples(inst, spec, (8, 8), 5, np.random.default_rng(3))
    assert all(np.array_equal(a.input.mask, b.input.mask) for a, b in zip(exs, again))


def test_bad_n_obs_range(instances):
    spec = GridSpec.for_patch(instances[0].patch, 1.2)
    with pytest.raises(ValueError):
        make_training_examples(instances[0], spec, (0, 4), 1, np.random.default_rng(0))


# ---------------------------------------------------------------- Adam


def test_adam_zero_gradient_leaves_weights():
    p = [np.array([1.0, -2.0]), np.array([[0.5]])]
    before = [a.copy() for a in p]
    opt = Adam(p, AdamConfig(learning_rate=0.1))
    for _ in range(3):
        opt.step([np.zeros(2), np.zeros((1, 1))])
    assert all(np.array_equal(a, b) for a, b in zip(p, before))


def test_adam_first_steps_by_hand():
    cfg = AdamConfig(learning_rate=0.01)
    p = np.array([1.0, 1.0])
    opt = Adam([p], cfg)
    g1, g2 = np.array([2.0, -0.5]), np.array([1.0, 1.0])
    opt.step([g1])
    # Bias correction makes the first step lr * g / (|g| + eps).
    assert np.allclose(p, 1.0 - 0.01 * g1 / (np.abs(g1) + 1e-8))
    opt.step([g2])
    m = (0.1 * 0.9 * g1 + 0.1 * g2) / (1 - 0.9 ** 2)
    v = (0.001 * 0.999 * g1 ** 2 + 0.001 * g2 ** 2) / (1 - 0.999 ** 2)
    assert np.allclose(p, 1.0 - 0.01 * g1 / (np.abs(g1) + 1e-8) - 0.01 * m / (np.sqrt(v) + 1e-8))


def test_adam_config_validation():
    with pytest.raises(ValueError):
        AdamConfig(learning_rate=0.0)


def test_first_update_follows_finite_difference_gradient():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 2, 8, 8))
    t = 5 * rng.standard_normal((4, 8, 8))
    m = np.ones((4, 8, 8))
    w = kink_margin_network(2, x, rng)
    trained, _ = train_network_tensors(x, t, m, w, AdamConfig(learning_rate=1e-7, batch_size=4, epochs=1))
    h = 1e-4
    b = w.biases[2]
    for i in range(len(b)):
        orig = b[i]
        b[i] = orig + h
        lp = masked_mse(network_forward(x, w), t, m)[0]
        b[i] = orig - h
        lm = masked_mse(network_forward(x, w), t, m)[0]
        b[i] = orig
        g = (lp - lm) / (2 * h)
        if abs(g) > 1e-4:
            assert trained.biases[2][i] - orig == pytest.approx(-1e-7 * np.sign(g), rel=1e-3)


def test_bias_only_training_on_zero_targets_is_monotone():
    rng = np.random.default_rng(6)
    x = 30 * rng.standard_normal((8, 2, 8, 8))
    w = NetworkWeights.init(2, rng)
    cfg = AdamConfig(learning_rate=1e-4, batch_size=8, epochs=10)
    trained, log = train_network_tensors(x, np.zeros((8, 8, 8)), np.ones((8, 8, 8)), w, cfg, trainable="biases")
    assert len(log.train_loss) == 10
    assert np.all(np.diff(log.train_loss) <= 1e-12)
    assert all(np.array_equal(a, b) for a, b in zip(trained.kernels, w.kernels))


def test_nan_loss_aborts():
    x = np.full((2, 2, 8, 8), np.nan)
    with pytest.raises(TrainingError):
        train_network_tensors(x, np.zeros((2, 8, 8)), np.ones((2, 8, 8)), NetworkWeights.init(2, np.random.default_rng(0)),
                              AdamConfig(epochs=1))


def _examples(sets, count, seed, n_obs=(5, 30)):
    rng = np.random.default_rng(seed)
    insts = draw_instances(sets, 9.6, count, rng, min_measurements=20)
    return [ex for inst in insts for ex in make_training_examples(inst, GridSpec.for_patch(inst.patch, 1.2), n_obs, 2, rng)]


def test_network_training_reduces_loss_and_is_reproducible(small_sets):
    examples = _examples(small_sets, 50, 0)
    cfg = AdamConfig(learning_rate=3e-3, batch_size=16, epochs=50, seed=1)
    est = NetworkEstimator(NetworkWeights.init(2, np.random.default_rng(1)))
    from radiomap.training import build_tensors
    x, t, m = build_tensors(examples, est)
    initial = loss_and_grad(est.weights, x, t, m)[0]
    w1, log = train_network(examples, est, cfg)
    w2, _ = train_network(examples, est, cfg)
    assert w1.to_bytes() == w2.to_bytes()
    assert min(log.train_loss) <= 0.5 * initial
    assert 1 <= log.best_epoch <= 50
    assert [r[0] for r in log.rows()] == list(range(1, 51))


def test_learning_curve_rows(small_sets):
    cfg = AdamConfig(learning_rate=1e-3, batch_size=16, epochs=2)
    curve = learning_curve(small_sets[:2], small_sets[2:], [1], lambda w: NetworkEstimator(
        w if w is not None else NetworkWeights.init(2, np.random.default_rng(0))), 9.6, 1.2, cfg,
        n_instances=5, copies=2, n_obs_range=(5, 20), test_n_obs=10, iterations=5)
    assert [k for k, _ in curve] == [1]
    curve = learning_curve(small_sets[:2], small_sets[2:], [1, 2], lambda w: NetworkEstimator(
        w if w is not None else NetworkWeights.init(2, np.random.default_rng(0))), 9.6, 1.2, cfg,
        n_instances=5, copies=2, n_obs_range=(5, 20), test_n_obs=10, iterations=5)
    assert len(curve) == 2 and curve[0][1].metric.value == "rmse_grid_all"
    with pytest.raises(ValueError):
        learning_curve(small_sets, small_sets, [2, 1], None, 9.6, 1.2, cfg)
