"""Acceptance criteria, one test per criterion, at the pinned tolerances.

Each test records a one-line summary that is printed at the end of the
session under "acceptance criteria".  Criteria 6 to 8 read 30-seed benchmark
suites from ``results/acceptance``; the runs are reused when their cache is
valid and recomputed (several hours on one core) otherwise.
"""

import json
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

from rmobo import driver
from rmobo.acquisition import AcquisitionContext, al_box, draw_base_samples, ehvi_gaussian, hvi_points, qehvi
from rmobo.gp import GpEnsemble, LengthscalePrior, fit_map, kernel_eval, map_objective
from rmobo.pareto import hypervolume_2d
from rmobo.problem import Gaussian, NoNoise, get_problem, stream
from rmobo.robust_gp import FixedNoiseSamples, RobustGp, robust_posterior
from rmobo.suite import SuiteConfig, load_histories, load_records, run_suite

from helpers import FixedPosterior, random_fixture

ROOT = Path(__file__).resolve().parents[1]


def gauss_hermite(dim, order):
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    w = np.prod(np.meshgrid(*([weights / weights.sum()] * dim), indexing="ij"), axis=0).ravel()
    return np.stack([g.ravel() for g in grids], axis=-1), w


def quadrature_error(rgp, model, Xt, noise):
    """Largest gap between the closed-form kernel expectations and Gauss-Hermite quadrature."""
    d = Xt.shape[1]
    mu, sd = noise.mean / model.x_scale, noise.std / model.x_scale
    nodes, w = gauss_hermite(d, 40)
    quad = np.array([[w @ kernel_eval(model.kernel, x + mu + sd * nodes, xj[None])[:, 0] for xj in model.X_train]
                     for x in Xt])
    worst = np.max(np.abs(rgp._analytic_cross(model, Xt) - quad))
    pair, pw = gauss_hermite(2 * d, 40 if d == 1 else 16)
    for a, b in zip(Xt[:-1], Xt[1:]):
        diff = (a + sd * pair[:, :d]) - (b + sd * pair[:, d:])
        dq = model.kernel.variance * (pw @ np.exp(-0.5 * np.sum(diff**2 / model.kernel.lengthscales**2, axis=1)))
        worst = max(worst, abs(rgp._analytic_kj(model, a[None], b[None])[0, 0] - dq))
    return worst


def suite_from(name, monkeypatch) -> SuiteConfig:
    monkeypatch.chdir(ROOT)
    suite = SuiteConfig.from_file(ROOT / "results" / "acceptance" / f"{name}.cfg")
    run_suite(suite)
    return suite


@pytest.mark.criterion(1)
def test_saa_kernel_expectation_matches_closed_form(sinlin_models, branin_models, record_property):
    worst_quad = elapsed = 0.0
    parts, mean_devs, std_devs = [], [], []
    for problem, _, _, models in (sinlin_models, branin_models):
        d = problem.d
        noise = Gaussian(np.zeros(d), np.full(d, 0.05))
        Xt = problem.space.sample_uniform(50, np.random.default_rng(11))
        exact = RobustGp(models, FixedNoiseSamples.draw(noise, 1, 0), "analytic", noise)
        Xn = exact.normalize_x(Xt)
        for m in models:
            worst_quad = max(worst_quad, quadrature_error(exact, m, Xn[:8], noise))
        start = time.perf_counter()
        saa = RobustGp(models, FixedNoiseSamples.draw(noise, 2000, 0))
        mean_s, var_s = robust_posterior(saa, Xt)
        elapsed += time.perf_counter() - start
        mean_a, var_a = robust_posterior(exact, Xt)
        y_std = np.array([m.y_std for m in models])
        mean_devs.append(np.max(np.abs(mean_s - mean_a) / y_std))
        std_devs.append(np.max(np.abs(np.sqrt(var_s) - np.sqrt(var_a)) / y_std))
        # standard error of a 2000-draw average of the surrogate mean, from an independent large sample
        ens = GpEnsemble(models)
        rng = np.random.default_rng(17)
        spread = np.array([ens.mean(x + noise.sample(100_000, rng)).std(axis=0) for x in Xt]) / y_std
        parts.append(f"d={d}: mean {mean_devs[-1]:.4f} (SE up to {spread.max() / np.sqrt(2000):.4f}), "
                     f"std {std_devs[-1]:.4f}")
    record_property("detail", "; ".join(parts) + f"; limits 0.02 / 0.05 of output std; "
                              f"quadrature gap {worst_quad:.1e} (<1e-6); {elapsed:.2f} s (<10 s)")
    assert worst_quad < 1e-6
    assert max(mean_devs) < 0.02 and max(std_devs) < 0.05
    assert elapsed < 10.0


@pytest.mark.criterion(2)
def test_zero_noise_robust_posterior_is_the_gp_posterior(branin_models, record_property):
    problem, _, _, models = branin_models
    Xt = problem.space.sample_uniform(100, np.random.default_rng(12))
    rgp = RobustGp(models, FixedNoiseSamples.draw(NoNoise(2), 500, 0))
    base = GpEnsemble(models)
    mean_r, cov_r = robust_posterior(rgp, Xt, full_cov=True)
    mean_b, cov_b = base.posterior(Xt, full_cov=True)
    var_r, var_b = robust_posterior(rgp, Xt)[1], base.posterior(Xt)[1]
    gap = max(np.max(np.abs(mean_r - mean_b)), np.max(np.abs(cov_r - cov_b)), np.max(np.abs(var_r - var_b)))
    record_property("detail", f"max |difference| {gap:.1e} (<1e-10)")
    assert gap < 1e-10


def _initial_design_variance_ratio(seed):
    problem = get_problem("sinlinforrester")
    X = problem.space.sample_uniform(5, stream(seed, 0))
    Y = problem.evaluate(X)
    rng = stream(seed, 2)
    models = [fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, rng=rng) for i in range(2)]
    rgp = RobustGp(models, FixedNoiseSamples.draw(Gaussian([0.0], [0.05]), 2000, [seed, 1]))
    _, var = rgp.posterior(X)
    floor = np.array([10 * m.jitter * m.y_std**2 for m in models])
    return np.min(var / floor)


@pytest.mark.criterion(3)
def test_bayes_risk_variance_stays_positive_at_training_inputs(record_property):
    ratio = _initial_design_variance_ratio(0)
    # the same property over the first 30 seeds, reported for context
    ratios = np.array([_initial_design_variance_ratio(s) for s in range(30)])
    record_property("detail", f"seed 0 min var / (10 jitter) = {ratio:.1f} (>1); "
                              f"seeds 0-29 passing: {int(np.sum(ratios > 1))}/30")
    assert ratio > 1


@pytest.mark.criterion(4)
def test_ehvi_matches_monte_carlo_and_qehvi(record_property):
    rng = np.random.default_rng(13)
    worst_mc = worst_saa = 0.0
    for _ in range(25):
        front, ref, mean, std = random_fixture(rng)
        exact = ehvi_gaussian(mean[None], std[None], front.points, ref)[0]
        draws = hvi_points(mean + std * rng.standard_normal((1_000_000, 2)), front.points, ref)
        spread = draws.std()
        # with no sampled improvement the spread is zero; gaps below 1e-12 of the front's volume are round-off
        floor = 1e-12 * hypervolume_2d(front, ref)
        worst_mc = max(worst_mc, max(abs(draws.mean() - exact) - floor, 0.0) / max(spread / 1e3, 1e-300))
        ctx = AcquisitionContext(FixedPosterior(mean, std**2), front, ref, draw_base_samples(2, 1, rng, 512))
        estimate = qehvi(ctx, np.zeros((1, 1, 1)))[0]
        worst_saa = max(worst_saa, max(abs(estimate - exact) - floor, 0.0) / max(spread / np.sqrt(512), 1e-300))
    record_property("detail", f"worst |EHVI - MC| {worst_mc:.2f} SE, worst |qEHVI - EHVI| {worst_saa:.2f} SE (<3)")
    assert worst_mc < 3 and worst_saa < 3


@pytest.mark.criterion(5)
def test_hypervolume_matches_rejection_sampling(record_property):
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(20):
        P = rng.random((rng.integers(1, 11), 2))
        exact = hypervolume_2d(P, np.zeros(2))
        hi = P.max(axis=0)
        U = rng.random((1_000_000, 2)) * hi
        covered = np.zeros(U.shape[0], dtype=bool)
        for p in P:
            covered |= np.all(U <= p, axis=1)
        worst = max(worst, abs(covered.mean() * np.prod(hi) - exact) / exact)
    record_property("detail", f"worst relative error {worst:.2e} (<1e-2)")
    assert worst < 0.01


@pytest.mark.slow
@pytest.mark.criterion(6)
def test_query_placement_properties(monkeypatch, record_property):
    suite = suite_from("behaviour", monkeypatch)
    records = load_records(suite)[("sinlinforrester", "rmobo", "ehvi")]
    run_dirs = [Path(c.out) for c in suite.run_configs() if c.method == "rmobo"]
    problem = get_problem("sinlinforrester")
    close_pairs = box_misses = budget_misses = fired = 0
    runtime = 0.0
    for record, run_dir in zip(records, run_dirs, strict=True):
        n0 = record.n_evaluations - len(record.queries)
        relocated = np.zeros(record.n_evaluations, dtype=bool)
        relocated[n0:] = [row.al_fired for row in record.queries]
        U = problem.space.to_unit(record.X)
        dist = np.linalg.norm(U[:, None, :] - U[None, :, :], axis=-1)
        for i, j in zip(*np.triu_indices(len(U), 1)):
            # rows past the initial design map one-to-one onto iterations (q = 1)
            if dist[i, j] < 1e-3 and not (relocated[i] and relocated[j]):
                close_pairs += 1
        for row in record.queries:
            if row.al_fired:
                fired += 1
                lo, hi = al_box(row.pending, problem.al_box_halfwidth, problem.enlarged_space)
                box_misses += int(not np.all((row.final >= lo) & (row.final <= hi)))
        budget_misses += int(record.n_evaluations != 5 * problem.d + record.config.n_iter)
        runtime += sum(json.loads((run_dir / "timings.json").read_text())["wall_times"])
    record_property("detail", f"{len(records)} runs, close pairs {close_pairs}, relocations {fired} "
                              f"(outside box {box_misses}), budget errors {budget_misses}, "
                              f"runtime {runtime / 60:.1f} min (<30)")
    assert len(records) == 30
    assert close_pairs == 0 and box_misses == 0 and budget_misses == 0
    assert runtime < 1800


def _final_avd(suite, problem):
    H = load_histories(suite)
    return H[(problem, "rmobo", "ehvi")][:, -1], H[(problem, "mobo_nonrobust", "ehvi")][:, -1]


@pytest.mark.slow
@pytest.mark.criterion(7)
@pytest.mark.parametrize("problem", ["mdtp3", "braningmm"])
def test_robust_method_beats_standard_on_distinct_fronts(problem, monkeypatch, record_property):
    suite = suite_from("ordering", monkeypatch)
    robust, standard = _final_avd(suite, problem)
    wins, losses = int(np.sum(robust < standard)), int(np.sum(robust > standard))
    p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    record_property("detail", f"median AVD rmobo {np.median(robust):.4f} vs mobo {np.median(standard):.4f}; "
                              f"sign test {wins}-{losses}, p = {p:.2g} (<0.05)")
    assert len(robust) == len(standard) == 30
    assert np.median(robust) < np.median(standard)
    assert p < 0.05


@pytest.mark.slow
@pytest.mark.criterion(8)
def test_methods_agree_when_fronts_coincide(monkeypatch, record_property):
    suite = suite_from("ordering", monkeypatch)
    robust, standard = _final_avd(suite, "vlmop2")
    gap = abs(np.median(robust) - np.median(standard))
    iqr = min(np.subtract(*np.percentile(robust, [75, 25])), np.subtract(*np.percentile(standard, [75, 25])))
    record_property("detail", f"|median difference| {gap:.4f} vs smaller IQR {iqr:.4f}")
    assert gap < iqr


@pytest.mark.criterion(9)
def test_distinct_front_certificates(record_property):
    certified = {name: driver.check_proposition1(get_problem(name)).certified
                 for name in ("mdtp3", "braningmm", "vlmop2")}
    record_property("detail", ", ".join(f"{k} certified={v}" for k, v in certified.items()))
    assert certified == {"mdtp3": True, "braningmm": True, "vlmop2": False}


@pytest.mark.criterion(10)
def test_posterior_cost_grows_at_most_linearly(branin_models, record_property):
    problem, _, _, models = branin_models
    Xt = problem.space.sample_uniform(100, np.random.default_rng(15))
    times = {}
    for n in (1000, 4000):
        rgp = RobustGp(models, FixedNoiseSamples.draw(problem.noise, n, 0))
        robust_posterior(rgp, Xt)
        robust_posterior(rgp, Xt, full_cov=True)
        best = np.inf
        for _ in range(5):
            start = time.perf_counter()
            robust_posterior(rgp, Xt)
            robust_posterior(rgp, Xt, full_cov=True)
            best = min(best, time.perf_counter() - start)
        times[n] = best
    ratio = times[4000] / times[1000]
    record_property("detail", f"N=1000 {times[1000]:.3f} s, N=4000 {times[4000]:.3f} s, ratio {ratio:.2f} (<=5)")
    assert ratio <= 5.0


@pytest.mark.criterion(11)
def test_cli_runs_are_byte_identical(tmp_path, record_property):
    cfg = driver.RunConfig(n_iter=3, n_samples=500, gp_restarts=3, raw_per_dim=64, starts=2, seed=21)
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    exe = shutil.which("rmobo")
    cmd = [exe] if exe else [sys.executable, "-m", "rmobo.cli"]
    for name in ("a", "b"):
        subprocess.run(cmd + ["run", "--config", str(path), "--out", str(tmp_path / name)], check=True,
                       capture_output=True)
    tables = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = [(tmp_path / "a" / t).read_bytes() == (tmp_path / "b" / t).read_bytes() for t in tables]
    record_property("detail", f"{sum(same)}/{len(tables)} CSV files identical ({', '.join(tables)})")
    assert tables and all(same)


@pytest.mark.criterion(12)
def test_gradients_match_central_differences(branin_models, record_property):
    rng = np.random.default_rng(16)
    X = rng.uniform(0, 1, (20, 2))
    y = np.sin(5 * X[:, 0]) * np.cos(3 * X[:, 1])
    yn = (y - y.mean()) / y.std()
    prior = LengthscalePrior()
    h = 1e-5
    worst_map = 0.0
    for _ in range(20):
        theta = np.concatenate([[rng.normal(0, 0.5)], np.log(0.3) + rng.normal(0, 0.4, 2)])
        grad = map_objective(theta, X, yn, prior)[1]
        fd = np.array([(map_objective(theta + h * e, X, yn, prior)[0] - map_objective(theta - h * e, X, yn, prior)[0])
                       / (2 * h) for e in np.eye(3)])
        worst_map = max(worst_map, np.linalg.norm(grad - fd) / np.linalg.norm(grad))
    problem, _, _, models = branin_models
    rgp = RobustGp(models, FixedNoiseSamples.draw(problem.noise, 2000, 1))
    h = 1e-6
    worst_mean = 0.0
    for x in problem.space.sample_uniform(20, rng):
        grad = rgp.mean_gradient(x)
        fd = np.stack([(rgp.mean(x + h * e) - rgp.mean(x - h * e))[0] / (2 * h) for e in np.eye(2)], axis=-1)
        worst_mean = max(worst_mean, np.linalg.norm(grad - fd) / np.linalg.norm(grad))
    record_property("detail", f"worst relative error: MAP {worst_map:.1e}, robust mean {worst_mean:.1e} (<1e-5)")
    assert worst_map < 1e-5 and worst_mean < 1e-5
