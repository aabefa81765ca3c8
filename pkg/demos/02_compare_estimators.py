"""Grid-agnostic estimation on a synthetic survey.

Fit the three traditional estimators to a few synthetic measurement sets,
then sweep the number of observations on held-out sets and print the RMSE
at unobserved measurement locations. More observations help every method;
Kriging and KRR exploit spatial correlation that K-NN only averages over.
"""

from dataclasses import replace

import numpy as np

from radiomap import MetricKind, PropagationConfig, run_sweep, synthetic_set
from radiomap.estimators import KnnEstimator, KrigingEstimator, KrrEstimator
from radiomap.training import SearchGrid, draw_instances, train_traditional, uniform_n_obs

REGION, SIDE, SPACING = (43.2, 43.2), 19.2, 1.2


def main():
    cfg = PropagationConfig(tx_location=(-30.0, 20.0), shadow_variance=16.0, shadow_half_distance=8.0,
                            fading_enabled=True, noise_std=1.0)
    train_sets = [synthetic_set(REGION, SPACING, replace(cfg, seed=s), along_spacing=0.6) for s in range(4)]
    test_sets = [synthetic_set(REGION, SPACING, replace(cfg, seed=100 + s), along_spacing=0.6) for s in range(2)]
    print(f"{len(train_sets)} training sets, {len(test_sets)} test sets, "
          f"{len(train_sets[0].power)} measurements each")

    rng = np.random.default_rng(0)
    instances = draw_instances(train_sets, SIDE, 60, rng)
    search = SearchGrid(knn_k=[2, 3, 5, 8, 12], kriging_var=[4.0, 16.0, 36.0], kriging_halfdist=[4.0, 8.0, 16.0],
                        kriging_noise=[1.0, 10.0, 30.0], krr_reg=[1e-4, 1e-2, 1.0], krr_widths=[5.0, 10.0, 20.0])
    knn, kriging, krr = train_traditional(instances, search, uniform_n_obs(10, 60), rng=rng, n_splits=100)
    print("selected:", knn, kriging, krr, sep="\n  ")

    n_obs = [15, 30, 60, 120]
    print("\nRMSE [dB] at unobserved locations")
    print("n_obs  " + "  ".join(f"{n:>6d}" for n in n_obs))
    for est in (KnnEstimator(knn), KrigingEstimator(kriging), KrrEstimator(krr)):
        reps = run_sweep(test_sets, est, [MetricKind.RMSE], n_obs, SIDE, SPACING, iterations=100, seed=1)
        print(f"{est.name:<6} " + "  ".join(f"{r.mean_error:6.2f}" for r in reps))


if __name__ == "__main__":
    main()
