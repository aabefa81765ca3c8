"""How hard is a map to estimate?

Two sweeps at fixed normalized measurement density:

* Moving the transmitter away from a line-of-sight region flattens the
  path-loss gradient inside it, so the error drops toward the fading floor.
* Strong, short-range shadowing is harder than smooth shadowing at every
  density, and more observations help both.
"""

from scipy.stats import spearmanr

from radiomap import PropagationConfig
from radiomap.estimators import KrigingEstimator, KrigingParams
from radiomap.evaluation import distance_sweep, scenario_sweep
from radiomap.training import SearchGrid


def main():
    los = PropagationConfig(path_loss_exponent=2.0, fading_enabled=True, noise_std=1.0)
    distances = [30, 40, 55, 75, 100, 140, 200]
    curve = distance_sweep(los, distances, KrigingEstimator(KrigingParams(10.0, 30.0, 30.0)), iterations=200)
    print("transmitter distance [m]  RMSE [dB]")
    for d, rep in curve:
        print(f"{d:>10.0f}              {rep.mean_error:5.2f} +- {rep.std_error:.2f}")
    rho = spearmanr(distances, [r.mean_error for _, r in curve]).statistic
    print(f"Spearman rank correlation {rho:.2f}\n")

    tx = (-200.0, 60.0)
    scenarios = {
        "smooth": PropagationConfig(tx_location=tx, shadow_variance=1.0, shadow_half_distance=100.0,
                                    fading_enabled=True),
        "intense": PropagationConfig(tx_location=tx, shadow_variance=36.0, shadow_half_distance=10.0,
                                     fading_enabled=True),
    }
    grid = SearchGrid(kriging_var=[1.0, 4.0, 9.0, 16.0, 36.0, 64.0], kriging_halfdist=[5.0, 10.0, 20.0, 50.0, 100.0],
                      kriging_noise=[1.0, 10.0, 30.0])
    res = scenario_sweep(scenarios, [0.0005, 0.001, 0.002, 0.004], grid, iterations=150)
    print("scenario  density  n_obs  RMSE [dB]  retrained Kriging")
    for r in res:
        p = r.params
        print(f"{r.scenario:<8} {r.density:7.4f} {r.report.n_obs:6d}  {r.report.mean_error:6.2f}    "
              f"var {p.shadow_variance:g}, half-dist {p.shadow_half_distance:g} m, noise {p.noise_variance:g}")


if __name__ == "__main__":
    main()
