"""Error of the sample-average kernel expectation against the closed form, versus sample count.

Fits a GP to a SinLinForrester or BraninGMM design, then compares the
sample-average robust posterior with the Gaussian closed form on 50 test
points for several sample sizes and seeds.

Usage:
    python3 scripts/ke_convergence.py --problem sinlinforrester
"""

import argparse

import numpy as np

from rmobo.gp import fit_map
from rmobo.problem import Gaussian, get_problem
from rmobo.robust_gp import FixedNoiseSamples, RobustGp


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--problem", default="sinlinforrester", choices=["sinlinforrester", "braningmm"])
    parser.add_argument("--n-train", type=int, default=None)
    parser.add_argument("--noise-std", type=float, default=0.05)
    parser.add_argument("--seeds", type=int, default=10)
    args = parser.parse_args()

    problem = get_problem(args.problem)
    d = problem.d
    rng = np.random.default_rng(0)
    X = problem.space.sample_uniform(args.n_train or 10 * d + 2, rng)
    Y = problem.evaluate(X)
    models = [fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, rng=rng) for i in range(2)]
    noise = Gaussian(np.zeros(d), np.full(d, args.noise_std))
    Xt = problem.space.sample_uniform(50, np.random.default_rng(11))
    mean_a, var_a = RobustGp(models, FixedNoiseSamples.draw(noise, 1, 0), "analytic", noise).posterior(Xt)
    y_std = np.array([m.y_std for m in models])

    print(f"{'N':>7}{'median max mean err':>22}{'median max std err':>21}   (fractions of output std)")
    for n in (250, 500, 1000, 2000, 4000, 8000):
        mean_err, std_err = [], []
        for seed in range(args.seeds):
            mean_s, var_s = RobustGp(models, FixedNoiseSamples.draw(noise, n, seed)).posterior(Xt)
            mean_err.append(np.max(np.abs(mean_s - mean_a) / y_std))
            std_err.append(np.max(np.abs(np.sqrt(var_s) - np.sqrt(var_a)) / y_std))
        print(f"{n:>7}{np.median(mean_err):>22.4f}{np.median(std_err):>21.4f}")


if __name__ == "__main__":
    main()
