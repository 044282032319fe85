import warnings

import numpy as np
import pytest

from rmobo.acquisition import (
    AcquisitionContext,
    OptimizerBudget,
    al_acquisition,
    al_activation,
    al_box,
    draw_base_samples,
    ehvi,
    ehvi_gaussian,
    hvi_batch,
    hvi_points,
    optimize_acquisition,
    qehvi,
)
from rmobo.gp import GpEnsemble, fit_map
from rmobo.pareto import extract_front, hypervolume_2d, reference_point
from rmobo.problem import DesignSpace, NoNoise, get_problem
from rmobo.robust_gp import FixedNoiseSamples, RobustGp

from helpers import FixedPosterior, random_fixture


def brute_hvi(Y, front, ref):
    base = hypervolume_2d(front, ref)
    return hypervolume_2d(np.vstack([front, Y]), ref) - base


def test_ehvi_matches_monte_carlo():
    rng = np.random.default_rng(0)
    for _ in range(5):
        front, ref, mean, std = random_fixture(rng)
        exact = ehvi_gaussian(mean[None], std[None], front.points, ref)[0]
        draws = hvi_points(mean + std * rng.standard_normal((1_000_000, 2)), front.points, ref)
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - exact) <= 3 * se + 1e-12


def test_ehvi_deterministic_limits():
    front = extract_front(np.array([[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]))
    ref = np.zeros(2)
    dominated = ehvi_gaussian([[1.5, 1.5]], [[0.0, 0.0]], front.points, ref)[0]
    on_front = ehvi_gaussian([[2.0, 2.0]], [[0.0, 0.0]], front.points, ref)[0]
    better = ehvi_gaussian([[4.0, 4.0]], [[0.0, 0.0]], front.points, ref)[0]
    assert dominated == 0.0 and on_front == 0.0
    assert better == pytest.approx(16.0 - hypervolume_2d(front, ref), abs=1e-12)


def test_ehvi_is_non_negative():
    rng = np.random.default_rng(1)
    for _ in range(50):
        front, ref, mean, std = random_fixture(rng)
        assert ehvi_gaussian(mean[None], std[None], front.points, ref)[0] >= 0.0


def test_hvi_matches_brute_force():
    rng = np.random.default_rng(2)
    front = extract_front(rng.random((6, 2)))
    ref = reference_point(front.points)
    Y = rng.uniform(-0.2, 1.2, (50, 2))
    np.testing.assert_allclose(hvi_points(Y, front.points, ref), [brute_hvi(y[None], front.points, ref) for y in Y],
                               atol=1e-12)
    B = rng.uniform(-0.2, 1.2, (30, 3, 2))
    np.testing.assert_allclose(hvi_batch(B, front.points, ref), [brute_hvi(b, front.points, ref) for b in B],
                               atol=1e-12)


def test_qehvi_single_point_matches_ehvi(branin_models):
    problem, X, _, models = branin_models
    ens = GpEnsemble(models)
    rng = np.random.default_rng(3)
    ctx = AcquisitionContext.build(ens, X, draw_base_samples(2, 1, rng))
    Xt = problem.space.sample_uniform(10, rng)
    estimate = qehvi(ctx, Xt[:, None, :])
    exact = ehvi(ctx, Xt)
    # standard error of a 512-sample average, from the spread of the improvement over many independent draws
    mean, var = ens.posterior(Xt)
    Z = rng.standard_normal((200_000, 2))
    spread = np.array([hvi_points(m + np.sqrt(v) * Z, ctx.current_front.points, ctx.ref_point).std()
                       for m, v in zip(mean, var)])
    # points with improvement probability below Monte Carlo resolution get a floor tied to the front's scale
    floor = 1e-6 * hypervolume_2d(ctx.current_front, ctx.ref_point)
    assert np.all(np.abs(estimate - exact) <= 3 * spread / np.sqrt(512) + floor)


def test_qehvi_duplicate_deterministic_point():
    front = extract_front(np.array([[1.0, 3.0], [3.0, 1.0]]))
    model = FixedPosterior([2.5, 2.5], [0.0, 0.0])
    ctx1 = AcquisitionContext(model, front, np.zeros(2), draw_base_samples(2, 1, np.random.default_rng(0)))
    ctx2 = AcquisitionContext(model, front, np.zeros(2), draw_base_samples(2, 2, np.random.default_rng(0)))
    x = np.array([[0.5, 0.5]])
    single = qehvi(ctx1, x)[0]
    # the zero covariance is repaired with a 1e-10 nugget, so draws carry a spread of about 1e-5
    assert single == pytest.approx(2.25, abs=1e-4)
    assert qehvi(ctx2, np.vstack([x, x]))[0] == pytest.approx(single, abs=1e-4)


def test_qehvi_grows_with_batch(branin_models):
    problem, X, _, models = branin_models
    ens = GpEnsemble(models)
    rng = np.random.default_rng(4)
    Z = draw_base_samples(2, 3, rng)
    ctx2 = AcquisitionContext.build(ens, X, Z[:, :, :2])
    ctx3 = AcquisitionContext.build(ens, X, Z)
    for _ in range(5):
        B = problem.space.sample_uniform(3, rng)
        assert qehvi(ctx3, B)[0] >= qehvi(ctx2, B[:2])[0] - 1e-12


def test_qehvi_rejects_mismatched_base_samples(branin_models):
    _, X, _, models = branin_models
    ctx = AcquisitionContext.build(GpEnsemble(models), X, draw_base_samples(2, 1, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        qehvi(ctx, X[:2])


def _sinlin_rgp(noise, n_samples=500):
    problem = get_problem("sinlinforrester")
    X = np.array([[0.1], [0.35], [0.6], [0.9]])
    Y = problem.evaluate(X)
    rng = np.random.default_rng(0)
    models = [fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, rng=rng) for i in range(2)]
    return problem, X, RobustGp(models, FixedNoiseSamples.draw(noise, n_samples, 0))


def test_al_vanishes_far_from_pending_point():
    problem, X, rgp = _sinlin_rgp(get_problem("sinlinforrester").noise)
    ls = max(m.kernel.lengthscales[0] * m.x_scale[0] for m in rgp.models)
    x_star = np.array([0.5])
    far = x_star + 10 * ls + 1.0
    assert al_acquisition(rgp, x_star, far[None])[0] < 1e-6


def test_al_is_non_negative():
    problem, X, rgp = _sinlin_rgp(get_problem("sinlinforrester").noise)
    grid = np.linspace(-0.2, 1.2, 300)[:, None]
    for x_star in (np.array([0.0]), np.array([0.47]), np.array([0.6])):
        assert np.all(al_acquisition(rgp, x_star, grid) >= 0.0)


def test_zero_noise_al_peaks_at_pending_point():
    _, _, rgp = _sinlin_rgp(NoNoise(1), 10)
    x_star = np.array([0.47])
    grid = np.round(np.linspace(0.0, 1.0, 1001), 12)[:, None]
    vals = al_acquisition(rgp, x_star, grid)
    assert grid[np.argmax(vals), 0] == pytest.approx(0.47, abs=1e-12)


def test_optimized_al_beats_pending_point():
    problem, X, rgp = _sinlin_rgp(get_problem("sinlinforrester").noise)
    x_star = np.array([0.35])
    lo, hi = al_box(x_star, problem.al_box_halfwidth, problem.enlarged_space)
    states = rgp.al_states(x_star)
    res = optimize_acquisition(lambda Xb: al_acquisition(rgp, x_star, Xb[:, 0, :], states), (lo, hi), 1,
                               OptimizerBudget(raw_per_dim=64), np.random.default_rng(0), candidates=x_star[None, None])
    assert res.value >= al_acquisition(rgp, x_star, x_star[None])[0]
    assert np.all(res.x >= lo) and np.all(res.x <= hi)


def test_activation_examples():
    space = DesignSpace([0.0, 0.0], [1.0, 1.0])
    X = np.array([[0.2, 0.2], [0.8, 0.8]])
    assert al_activation(np.array([0.0, 0.5]), X, space)
    assert al_activation(np.array([0.5, 1.0]), X, space)
    assert al_activation(np.array([0.8, 0.8]), X, space)
    far = np.array([[0.0, 0.5], [1.0, 0.5], [0.5, 0.0], [0.5, 1.0]])
    assert not al_activation(np.array([0.5, 0.5]), far, space, eps=1e-3)
    wide = DesignSpace([-2.0, -2.0], [2.0, 2.0])
    # thresholds apply in unit-cube coordinates
    assert al_activation(np.array([0.0, 0.003]), np.array([[0.0, 0.0]]), wide)
    assert not al_activation(np.array([0.0, 0.005]), np.array([[0.0, 0.0]]), wide)


def test_al_box_clips_to_enlarged_space():
    enlarged = DesignSpace([-0.1], [1.1])
    lo, hi = al_box(np.array([1.05]), np.array([0.1]), enlarged)
    assert lo[0] == pytest.approx(0.95) and hi[0] == pytest.approx(1.1)


def test_optimizer_finds_known_point():
    target = np.array([0.3, -0.7])
    f = lambda Xb: -np.sum((Xb[:, 0, :] - target) ** 2, axis=1)
    bounds = ([-1.0, -1.0], [1.0, 1.0])
    res = optimize_acquisition(f, bounds, 1, OptimizerBudget(raw_per_dim=64), np.random.default_rng(0))
    assert np.max(np.abs(res.x[0] - target)) < 1e-3
    assert res.value >= res.best_raw_value and not res.fallback


def test_optimizer_is_deterministic():
    f = lambda Xb: np.sin(5 * Xb[:, :, 0]).sum(axis=1) * np.cos(3 * Xb[:, :, 1]).sum(axis=1)
    a = optimize_acquisition(f, ([0, 0], [1, 1]), 2, OptimizerBudget(raw_per_dim=32), np.random.default_rng(7))
    b = optimize_acquisition(f, ([0, 0], [1, 1]), 2, OptimizerBudget(raw_per_dim=32), np.random.default_rng(7))
    np.testing.assert_array_equal(a.x, b.x)
    assert a.x.shape == (2, 2)


def test_optimizer_falls_back_when_refinement_fails():
    calls = []

    def f(Xb):
        calls.append(1)
        if len(calls) > 1:
            raise FloatingPointError("boom")
        return -np.sum(Xb[:, 0, :] ** 2, axis=1)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = optimize_acquisition(f, ([-1.0], [1.0]), 1, OptimizerBudget(raw_per_dim=16), np.random.default_rng(0))
    assert res.fallback and res.value == res.best_raw_value
    assert caught


@pytest.mark.slow
def test_qehvi_argmax_stable_under_more_samples(sinlin_models):
    problem, X, _, models = sinlin_models
    ens = GpEnsemble(models)
    shifts = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        locs = []
        for n in (512, 1024):
            ctx = AcquisitionContext.build(ens, X, draw_base_samples(2, 2, np.random.default_rng(seed), n))
            res = optimize_acquisition(lambda Xb: qehvi(ctx, Xb), (problem.space.lower, problem.space.upper), 2,
                                       OptimizerBudget(raw_per_dim=128), np.random.default_rng(100 + seed))
            locs.append(np.sort(res.x[:, 0]))
        shifts.append(np.max(np.abs(locs[0] - locs[1])))
        del rng
    assert np.median(shifts) < 1e-2
