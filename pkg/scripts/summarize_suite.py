"""Run (or reuse) a benchmark suite and print final-iteration AVD statistics.

Usage:
    python3 scripts/summarize_suite.py results/acceptance/ordering.cfg
"""

import argparse
import logging

import numpy as np
from scipy.stats import binomtest

from rmobo.suite import SuiteConfig, load_histories, run_suite


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("--no-run", action="store_true", help="only read existing results")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    suite = SuiteConfig.from_file(args.config)
    if not args.no_run:
        run_suite(suite)
    H = load_histories(suite)
    print(f"{'problem':<16}{'method':<16}{'acq':<7}{'median':>9}{'q25':>9}{'q75':>9}{'n':>4}")
    for (problem, method, acq), hist in sorted(H.items()):
        final = hist[:, -1]
        q25, q75 = np.percentile(final, [25, 75])
        print(f"{problem:<16}{method:<16}{acq:<7}{np.median(final):9.4f}{q25:9.4f}{q75:9.4f}{len(final):4d}")
    for problem in suite.problems:
        for acq in suite.acquisitions:
            key_r, key_m = (problem, "rmobo", acq), (problem, "mobo_nonrobust", acq)
            if key_r in H and key_m in H:
                r, m = H[key_r][:, -1], H[key_m][:, -1]
                wins, losses = int(np.sum(r < m)), int(np.sum(r > m))
                p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
                print(f"{problem} {acq}: rmobo better on {wins}, worse on {losses}; one-sided sign test p = {p:.3g}")


if __name__ == "__main__":
    main()
