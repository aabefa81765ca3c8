"""Hyperparameter search for the traditional estimators and Adam training
of the completion networks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .core import EstimationInstance, GridSpec, QuantizedGrid, quantize, split_uniform
from .estimators.base import pairwise_distances, solve_psd
from .estimators.network import NetworkEstimator, NetworkWeights, loss_and_grad, masked_mse, network_forward
from .estimators.traditional import Kernel, KnnParams, KrigingParams, KrrParams, kernel_matrix
from .synth import gudmundson_covariance

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class SearchGrid:
    """Candidate values; the defaults are the grids used for the real-data study."""

    knn_k: list = field(default_factory=lambda: list(range(2, 14)))
    kriging_var: list = field(default_factory=lambda: [round(0.01 + 0.1 * i, 2) ** 2 for i in range(10)])
    kriging_halfdist: list = field(default_factory=lambda: [50.0 * i for i in range(1, 13)])
    kriging_noise: list = field(default_factory=lambda: [1.0])
    krr_reg: list = field(default_factory=lambda: [10.0 ** -e for e in range(12, 0, -1)])
    krr_kernels: list = field(default_factory=lambda: [Kernel.GAUSSIAN, Kernel.LAPLACIAN])
    krr_widths: list = field(default_factory=lambda: [float(w) for w in range(20, 151, 10)])

    def __post_init__(self):
        for name in ("knn_k", "kriging_var", "kriging_halfdist", "kriging_noise", "krr_reg", "krr_kernels", "krr_widths"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"search grid '{name}' is empty")
        self.krr_kernels = [Kernel(k) for k in self.krr_kernels]

    # Enumeration order puts the simplest model first so exact ties keep it:
    # smaller K, longer half-distance, stronger regularization, wider kernel.
    def knn_candidates(self):
        return [KnnParams(int(k)) for k in sorted(self.knn_k)]

    def kriging_candidates(self):
        return [KrigingParams(v, d, n) for d, v, n in product(sorted(self.kriging_halfdist, reverse=True),
                                                             sorted(self.kriging_var),
                                                             sorted(self.kriging_noise, reverse=True))]

    def krr_candidates(self):
        return [KrrParams(r, k, w) for r, k, w in product(sorted(self.krr_reg, reverse=True),
                                                          self.krr_kernels,
                                                          sorted(self.krr_widths, reverse=True))]


@dataclass
class SearchResult:
    best: object
    candidates: list
    objectives: np.ndarray  # sample RMSE per candidate, dB


@dataclass
class _Split:
    obs_locs: np.ndarray
    obs_power: np.ndarray
    query_locs: np.ndarray
    query_power: np.ndarray
    d_oo: np.ndarray
    d_qo: np.ndarray


def uniform_n_obs(lo: int, hi: int) -> Callable[[np.random.Generator], int]:
    def draw(rng):
        return int(rng.integers(lo, hi + 1))
    return draw


def draw_splits(instances: Sequence[EstimationInstance], n_obs_sampler, n_splits: int, rng) -> list:
    """Training splits shared by every candidate (common random numbers)."""
    instances = [inst for inst in instances if len(inst) >= 2]
    if not instances:
        raise ValueError("need at least one training instance with two or more measurements")
    splits = []
    for _ in range(n_splits):
        inst = instances[rng.integers(len(instances))]
        n_obs = min(max(1, n_obs_sampler(rng)), len(inst) - 1)
        sp = split_uniform(len(inst), n_obs, rng)
        ol, op = inst.locations[sp.obs], inst.power[sp.obs]
        ql, qp = inst.locations[sp.nobs], inst.power[sp.nobs]
        splits.append(_Split(ol, op, ql, qp, pairwise_distances(ol, ol), pairwise_distances(ql, ol)))
    return splits


def _rmse(sq_errors_per_split):
    return np.sqrt(np.mean(sq_errors_per_split, axis=0))


def _knn_objectives(cands, splits):
    ks = np.array([c.k for c in cands])
    mse = np.full((len(splits), len(cands)), np.nan)
    for s, sp in enumerate(splits):
        order = np.argsort(sp.d_qo, axis=1, kind="stable")
        csum = np.cumsum(sp.obs_power[order], axis=1)
        kk = np.minimum(ks, len(sp.obs_power))
        est = csum[:, kk - 1] / kk
        mse[s] = np.mean((sp.query_power[:, None] - est) ** 2, axis=0)
    return _rmse(mse)


def _kriging_objectives(cands, splits):
    mse = np.empty((len(splits), len(cands)))
    for s, sp in enumerate(splits):
        mu = sp.obs_power.mean()
        y = sp.obs_power - mu
        for c, p in enumerate(cands):
            cov = gudmundson_covariance(sp.d_oo, p.shadow_variance, p.shadow_half_distance)
            cov[np.diag_indices_from(cov)] += p.noise_variance
            wts = solve_psd(cov, y)
            est = mu + gudmundson_covariance(sp.d_qo, p.shadow_variance, p.shadow_half_distance) @ wts
            mse[s, c] = np.mean((sp.query_power - est) ** 2)
    return _rmse(mse)


def _krr_objectives(cands, splits):
    mse = np.empty((len(splits), len(cands)))
    shapes = {}
    for c, p in enumerate(cands):
        shapes.setdefault((p.kernel, p.width), []).append(c)
    for s, sp in enumerate(splits):
        mu = sp.obs_power.mean()
        y = sp.obs_power - mu
        n = len(y)
        for (kernel, width), idx in shapes.items():
            if kernel is Kernel.GAUSSIAN:
                gram, cross = np.exp(-sp.d_oo ** 2 / width), np.exp(-sp.d_qo ** 2 / width)
            else:
                gram, cross = np.exp(-sp.d_oo / width), np.exp(-sp.d_qo / width)
            ev, q = np.linalg.eigh(gram)
            qty = q.T @ y
            cq = cross @ q
            for c in idx:
                alpha_rot = ev / (ev ** 2 + n * cands[c].reg) * qty
                est = mu + cq @ alpha_rot
                mse[s, c] = np.mean((sp.query_power - est) ** 2)
    return _rmse(mse)


def _search(cands, objective_fn, splits) -> SearchResult:
    obj = objective_fn(cands, splits)
    best = int(np.argmin(obj))  # first minimum = simplest candidate
    return SearchResult(cands[best], cands, obj)


def train_knn(splits, search: SearchGrid) -> SearchResult:
    return _search(search.knn_candidates(), _knn_objectives, splits)


def train_kriging(splits, search: SearchGrid) -> SearchResult:
    return _search(search.kriging_candidates(), _kriging_objectives, splits)


def train_krr(splits, search: SearchGrid) -> SearchResult:
    return _search(search.krr_candidates(), _krr_objectives, splits)


def train_traditional(train_instances, search: SearchGrid | None = None, n_obs_sampler=None,
                      rng: np.random.Generator | None = None, n_splits: int = 200):
    """Exhaustive grid search minimizing the sample RMSE at unobserved
    measurements; returns ``(KnnParams, KrigingParams, KrrParams)``."""
    search = search or SearchGrid()
    n_obs_sampler = n_obs_sampler or uniform_n_obs(10, 100)
    rng = rng if rng is not None else np.random.default_rng(0)
    splits = draw_splits(train_instances, n_obs_sampler, n_splits, rng)
    return (train_knn(splits, search).best, train_kriging(splits, search).best, train_krr(splits, search).best)


# ---------------------------------------------------------------- networks


@dataclass(frozen=True, eq=False)
class TrainingExample:
    """Masked input grid, full target grid and the measurements behind them."""

    input: QuantizedGrid
    target: QuantizedGrid
    instance: EstimationInstance
    observed_cells: np.ndarray

    def observed_measurements(self):
        flat = self.target.spec.flat_index(self.instance.locations)
        chosen = np.isin(flat, self.observed_cells)
        return self.instance.locations[chosen], self.instance.power[chosen]


def make_training_examples(instance: EstimationInstance, spec: GridSpec, n_obs_range, copies: int,
                           rng: np.random.Generator) -> list:
    """``copies`` masked variants of one instance, each keeping
    ``min(U{lo..hi}, #occupied)`` observed grid entries."""
    lo, hi = n_obs_range
    if lo < 1 or hi < lo:
        raise ValueError("n_obs_range must satisfy 1 <= lo <= hi")
    target = quantize(instance, spec)
    occupied = target.occupied
    examples = []
    for child in rng.spawn(copies):
        n = min(int(child.integers(lo, hi + 1)), len(occupied))
        cells = np.sort(child.choice(occupied, size=n, replace=False))
        examples.append(TrainingExample(target.restrict(cells), target, instance, cells))
    return examples


@dataclass
class AdamConfig:
    learning_rate: float = 1e-4
    batch_size: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


class Adam:
    """Adam with bias correction over a list of arrays updated in place."""

    def __init__(self, params, cfg: AdamConfig):
        self.params = params
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        c = self.cfg
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            m_hat = m / (1 - c.beta1 ** self.t)
            v_hat = v / (1 - c.beta2 ** self.t)
            p -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.eps)


@dataclass
class TrainingLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1

    def rows(self):
        return [(e + 1, l) for e, l in enumerate(self.train_loss)]


def build_tensors(examples, estimator: NetworkEstimator):
    """Stack network inputs, offset-relative targets and target masks."""
    xs, ts, ms = [], [], []
    for ex in examples:
        locs, power = ex.observed_measurements()
        x, offset = estimator.network_input(ex.input, locs, power)
        xs.append(x)
        ts.append((ex.target.values - offset) * ex.target.mask)
        ms.append(ex.target.mask)
    return np.stack(xs), np.stack(ts), np.stack(ms)


def _dataset_loss(weights, x, t, m, chunk=256):
    num = den = 0.0
    for s in range(0, len(x), chunk):
        pred = network_forward(x[s:s + chunk], weights)
        den_c = m[s:s + chunk].sum()
        num += masked_mse(pred, t[s:s + chunk], m[s:s + chunk])[0] * den_c
        den += den_c
    return num / den if den else 0.0


def train_network_tensors(x, t, m, weights: NetworkWeights, cfg: AdamConfig,
                          trainable: str = "all") -> tuple[NetworkWeights, TrainingLog]:
    """Minimize the masked MSE with Adam; returns the weights of the epoch
    with the lowest validation loss (training loss without a validation slice)."""
    weights = weights.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(x)
    n_val = int(round(cfg.validation_fraction * n)) if n >= 10 else 0
    perm = rng.permutation(n)
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    if trainable == "all":
        params = weights.params()
    elif trainable == "biases":
        params = list(weights.biases)
    else:
        raise ValueError(f"unknown trainable set {trainable!r}")
    opt = Adam(params, cfg)
    history = TrainingLog()
    best = (np.inf, weights.copy())
    for epoch in range(cfg.epochs):
        order = tr_idx[rng.permutation(len(tr_idx))]
        for s in range(0, len(order), cfg.batch_size):
            b = order[s:s + cfg.batch_size]
            loss, dks, dbs = loss_and_grad(weights, x[b], t[b], m[b])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
            if trainable == "all":
                grads = [g for pair in zip(dks, dbs) for g in pair]
            else:
                grads = dbs
            opt.step(grads)
        train_loss = _dataset_loss(weights, x[tr_idx], t[tr_idx], m[tr_idx])
        if not np.isfinite(train_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch + 1}")
        history.train_loss.append(train_loss)
        score = train_loss
        if n_val:
            score = _dataset_loss(weights, x[val_idx], t[val_idx], m[val_idx])
            history.val_loss.append(score)
        if score < best[0]:
            best = (score, weights.copy())
            history.best_epoch = epoch + 1
        log.debug("epoch %d train %.4f val %.4f", epoch + 1, train_loss, score)
    return best[1], history


def train_network(examples, estimator: NetworkEstimator, cfg: AdamConfig, trainable: str = "all"):
    """Train ``estimator``'s weights on the examples; returns ``(weights, log)``."""
    x, t, m = build_tensors(examples, estimator)
    return train_network_tensors(x, t, m, estimator.weights, cfg, trainable)


def draw_instances(sets, side: float, count: int, rng: np.random.Generator, min_measurements: int = 1):
    """Instances from sets chosen uniformly, patches chosen uniformly."""
    from .core import sample_patch

    out = []
    for _ in range(count):
        i = int(rng.integers(len(sets)))
        out.append(sample_patch(sets[i], side, rng, set_index=i, min_measurements=min_measurements))
    return out


def learning_curve(train_sets, test_sets, k_values, make_estimator, side: float, spacing: float,
                   cfg: AdamConfig, n_instances: int = 100, copies: int = 5, n_obs_range=(10, 100),
                   test_n_obs: int = 30, iterations: int = 100, seed: int = 0):
    """Grid RMSE over all occupied entries versus the number of training sets.

    For each ``k`` the network is trained on instances drawn from the first
    ``k`` training sets, starting from the weights reached at the previous
    ``k``. ``make_estimator(weights)`` wraps weights into an estimator.
    Returns a list of ``(k, MetricReport)``.
    """
    from .evaluation import MetricKind, run_sweep

    if list(k_values) != sorted(k_values) or len(set(k_values)) != len(k_values):
        raise ValueError("k_values must be strictly increasing")
    root = np.random.SeedSequence(seed)
    estimator = None
    curve = []
    for k in k_values:
        rng = np.random.default_rng(root.spawn(1)[0])
        instances = draw_instances(train_sets[:k], side, n_instances, rng)
        examples = []
        for inst in instances:
            examples += make_training_examples(inst, GridSpec.for_patch(inst.patch, spacing), n_obs_range, copies, rng)
        weights = estimator.weights if estimator is not None else None
        estimator = make_estimator(weights)
        trained, _ = train_network(examples, estimator, cfg)
        estimator = make_estimator(trained)
        report = run_sweep(test_sets, estimator, [MetricKind.GRID_ALL], [test_n_obs], side, spacing,
                           iterations, seed=seed)[0]
        curve.append((k, report))
    return curve
