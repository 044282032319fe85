import numpy as np
import pytest

from rmobo.nsga2 import EaConfig, crowding_distance, nsga2_run
from rmobo.pareto import hypervolume_2d
from rmobo.problem import DesignSpace


def parabolas(X):
    x = X[:, 0]
    return np.stack([-(x - 0.2) ** 2, -(x - 0.8) ** 2], axis=1)


UNIT = DesignSpace([0.0], [1.0])


def test_config_validation():
    with pytest.raises(ValueError):
        EaConfig(population=5)
    with pytest.raises(ValueError):
        EaConfig(population=2)
    with pytest.raises(ValueError):
        EaConfig(generations=0)


def test_crowding_distance_marks_extremes_infinite():
    F = np.array([[0.0, 3.0], [1.0, 2.0], [2.0, 1.0], [3.0, 0.0]])
    d = crowding_distance(F)
    assert np.isinf(d[0]) and np.isinf(d[3])
    np.testing.assert_allclose(d[1:3], [4 / 3, 4 / 3])


def test_two_parabola_front_covers_pareto_set():
    res = nsga2_run(parabolas, UNIT, EaConfig(population=60, generations=100, seed=0))
    x = np.sort(res.front.origin_inputs[:, 0])
    assert x.min() >= 0.2 - 1e-3 and x.max() <= 0.8 + 1e-3
    gaps = np.diff(np.concatenate([[0.2], x, [0.8]]))
    assert gaps.max() < 0.05


def test_identical_objectives_collapse_to_maximizer():
    f = lambda X: np.repeat(-(X[:, :1] - 0.3) ** 2, 2, axis=1)
    res = nsga2_run(f, UNIT, EaConfig(population=20, generations=50, seed=1))
    assert len(res.front) == 1
    assert res.front.origin_inputs[0, 0] == pytest.approx(0.3, abs=1e-3)


def test_same_seed_same_front():
    space = DesignSpace([-1.0, 0.0], [1.0, 2.0])
    f = lambda X: np.stack([-np.sum(X**2, axis=1), -np.sum((X - 1) ** 2, axis=1)], axis=1)
    a = nsga2_run(f, space, EaConfig(population=20, generations=30, seed=4))
    b = nsga2_run(f, space, EaConfig(population=20, generations=30, seed=4))
    np.testing.assert_array_equal(a.front.points, b.front.points)
    np.testing.assert_array_equal(a.population, b.population)
    assert space.contains(a.population).all()


def test_first_front_hypervolume_never_decreases():
    res = nsga2_run(parabolas, UNIT, EaConfig(population=20, generations=60, seed=0), keep_history=True)
    hv = np.array([hypervolume_2d(F, [-1.0, -1.0]) for F in res.front_history])
    assert np.all(np.diff(hv) >= 0)
