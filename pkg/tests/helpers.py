"""Stubs and fixtures shared by the acquisition and acceptance tests."""

import numpy as np

from rmobo.pareto import extract_front, reference_point


class FixedPosterior:
    """Model stub with a prescribed independent Gaussian posterior at every input."""

    n_objectives = 2

    def __init__(self, mean, var):
        self.m, self.v = np.asarray(mean, float), np.asarray(var, float)

    def posterior(self, X, full_cov=False):
        n = np.atleast_2d(X).shape[0]
        return np.tile(self.m, (n, 1)), np.tile(self.v, (n, 1))

    def batch_posterior(self, Xb):
        m, q, _ = Xb.shape
        mean = np.tile(self.m, (m, q, 1))
        cov = np.zeros((m, 2, q, q))
        cov[:, :, np.arange(q), np.arange(q)] = self.v[None, :, None]
        return mean, cov


def random_fixture(rng):
    front = extract_front(rng.random((rng.integers(1, 8), 2)))
    ref = reference_point(front.points)
    mean = rng.uniform(-0.2, 1.2, 2)
    std = rng.uniform(0.01, 0.5, 2)
    return front, ref, mean, std
