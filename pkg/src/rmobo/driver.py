"""Optimization loops, recommendations, scoring and run persistence.

``run_rmobo`` is the two-stage robust loop: a first-stage acquisition on the
robust GP proposes a batch, then every proposal that duplicates data or sits on
the design-space boundary is relocated inside its local box by the
active-learning criterion.  ``run_mobo_nonrobust`` runs the same first stage on
plain GPs of ``f``; ``run_ea_gp_os`` is the one-shot surrogate + NSGA-II baseline.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .acquisition import (
    AcquisitionContext,
    OptimizerBudget,
    al_acquisition,
    al_activation,
    al_box,
    draw_base_samples,
    ehvi,
    optimize_acquisition,
    qehvi,
)
from .gp import FitError, GpEnsemble, fit_map
from .nsga2 import EaConfig, nsga2_run
from .pareto import avd, front_indices, objective_ranges, ParetoFront
from .problem import Problem, bayes_risk_oracle, get_problem, sample_noise, stream
from .robust_gp import FixedNoiseSamples, RobustGp

log = logging.getLogger(__name__)

METHODS = ("rmobo", "mobo_nonrobust", "ea_gp_os")
ACQUISITIONS = ("ehvi", "qehvi")

# indices of the independent random streams derived from the master seed
STREAM_INIT, STREAM_KE, STREAM_GPFIT, STREAM_ACQ, STREAM_AL, STREAM_BASE, STREAM_REFIT = range(7)
SCORE_SEED = 12345
SCORE_MC = 10_000


@dataclass(frozen=True)
class RunConfig:
    """Settings of one optimization run.

    ``n_initial=None`` means ``5 * d``.  Stored on disk as ``key = value`` lines.
    """

    problem: str = "sinlinforrester"
    method: str = "rmobo"
    acquisition: str = "ehvi"
    q: int = 1
    n_iter: int = 40
    n_initial: int | None = None
    seed: int = 0
    n_samples: int = 2000
    eps: float = 1e-3
    gp_restarts: int = 10
    raw_per_dim: int = 1024
    starts: int = 8
    qehvi_samples: int = 512
    out: str | None = None

    def __post_init__(self):
        method = self.method.replace("-", "_")
        if method == "mobo":
            method = "mobo_nonrobust"
        object.__setattr__(self, "method", method)
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.n_iter < 0 or self.q < 1:
            raise ValueError("n_iter must be >= 0 and q >= 1")
        if self.acquisition == "ehvi" and self.q != 1:
            raise ValueError("analytic EHVI proposes one point per iteration (q = 1)")

    def initial_size(self, d: int) -> int:
        return 5 * d if self.n_initial is None else self.n_initial

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "out" or value is None:
                continue
            lines.append(f"{f.name} = {value!r}" if isinstance(value, float) else f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.read_string("[run]\n" + text)
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in parser["run"].items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kind = types[key]
            if "int" in kind:
                kwargs[key] = int(raw)
            elif "float" in kind:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = raw
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


@dataclass
class QueryRow:
    iteration: int
    slot: int
    pending: np.ndarray
    final: np.ndarray
    al_fired: bool
    acq_value: float
    al_value: float


@dataclass
class Recommendation:
    iteration: int
    inputs: np.ndarray
    values: np.ndarray


@dataclass
class RunRecord:
    """Everything a run produced.  ``X``/``Y`` start with the initial design."""

    config: RunConfig
    X: np.ndarray
    Y: np.ndarray
    n_initial: int
    queries: list = field(default_factory=list)
    recommendations: list = field(default_factory=list)
    ref_points: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    completed: bool = True

    @property
    def pool(self) -> np.ndarray:
        """Pre-relocation proposals, in query order."""
        if not self.queries:
            return np.zeros((0, self.X.shape[1]))
        return np.array([row.pending for row in self.queries])

    @property
    def n_evaluations(self) -> int:
        return self.X.shape[0]


class RunAborted(RuntimeError):
    def __init__(self, message, record: RunRecord):
        super().__init__(message)
        self.record = record


# -- model fitting --------------------------------------------------------------

def fit_models(X, Y, problem: Problem, rng, restarts: int = 10) -> list:
    """One MAP-fitted GP per objective; a failed fit is retried once with fresh restarts."""
    models = []
    for i in range(Y.shape[1]):
        try:
            models.append(fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, restarts=restarts, rng=rng))
        except FitError:
            log.warning("GP fit failed for objective %d; retrying with fresh restarts", i)
            models.append(fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, restarts=restarts, rng=rng))
    return models


def in_sample_front(model, X_cand) -> Recommendation:
    values = model.mean(X_cand)
    keep = front_indices(values)
    return Recommendation(-1, X_cand[keep], values[keep])


def _observed_front(X, Y) -> Recommendation:
    keep = front_indices(Y)
    return Recommendation(-1, X[keep], Y[keep])


# -- the optimization loops ------------------------------------------------------

def _bo_loop(cfg: RunConfig, problem: Problem, robust: bool) -> RunRecord:
    seed = cfg.seed
    init_rng = stream(seed, STREAM_INIT)
    fit_rng = stream(seed, STREAM_GPFIT)
    acq_rng = stream(seed, STREAM_ACQ)
    al_rng = stream(seed, STREAM_AL)
    base_rng = stream(seed, STREAM_BASE)
    samples = FixedNoiseSamples.draw(problem.noise, cfg.n_samples, seed=[seed, STREAM_KE])
    budget = OptimizerBudget(raw_per_dim=cfg.raw_per_dim, starts=cfg.starts)

    n0 = cfg.initial_size(problem.d)
    X = problem.space.sample_uniform(n0, init_rng)
    Y = problem.evaluate(X)
    record = RunRecord(cfg, X, Y, n0)
    halfwidth = problem.al_box_halfwidth
    enlarged = problem.enlarged_space

    def build_model():
        try:
            models = fit_models(record.X, record.Y, problem, fit_rng, cfg.gp_restarts)
        except FitError as exc:
            record.completed = False
            raise RunAborted(str(exc), record) from exc
        return RobustGp(models, samples) if robust else GpEnsemble(models)

    def recommend_now(model, t):
        if robust:
            X_cand = np.vstack([record.X, record.pool])
            rec = in_sample_front(model, X_cand)
        else:
            rec = _observed_front(record.X, record.Y)
        rec.iteration = t
        record.recommendations.append(rec)

    for t in range(cfg.n_iter):
        tic = time.perf_counter()
        model = build_model()
        recommend_now(model, t)
        if cfg.acquisition == "qehvi":
            base = draw_base_samples(model.n_objectives, cfg.q, base_rng, cfg.qehvi_samples)
            ctx = AcquisitionContext.build(model, record.X, base)
            objective = lambda Xb: qehvi(ctx, Xb)  # noqa: E731
        else:
            ctx = AcquisitionContext.build(model, record.X)
            objective = lambda Xb: ehvi(ctx, Xb[:, 0, :])  # noqa: E731
        record.ref_points.append(ctx.ref_point)
        result = optimize_acquisition(objective, (problem.space.lower, problem.space.upper), cfg.q, budget, acq_rng)

        finals = []
        for j, x_star in enumerate(result.x):
            x_final, fired, al_value = x_star.copy(), False, 0.0
            if robust and al_activation(x_star, record.X, problem.space, cfg.eps):
                fired = True
                if np.any(halfwidth > 0):
                    states = model.al_states(x_star)
                    al_obj = lambda Xb: al_acquisition(model, x_star, Xb[:, 0, :], states)  # noqa: E731
                    box = al_box(x_star, halfwidth, enlarged)
                    al_res = optimize_acquisition(al_obj, box, 1, budget, al_rng, candidates=x_star[None, None, :])
                    x_final, al_value = al_res.x[0], al_res.value
            finals.append(x_final)
            record.queries.append(QueryRow(t, j, x_star.copy(), x_final, fired, result.value, al_value))
        X_new = np.array(finals)
        record.X = np.vstack([record.X, X_new])
        record.Y = np.vstack([record.Y, problem.evaluate(X_new)])
        record.wall_times.append(time.perf_counter() - tic)
        log.info("iteration %d: acq %.3g, queried %s", t, result.value, X_new.tolist())

    tic = time.perf_counter()
    recommend_now(build_model(), cfg.n_iter)
    record.wall_times.append(time.perf_counter() - tic)
    return record


def run_rmobo(cfg: RunConfig, problem: Problem | None = None) -> RunRecord:
    """Two-stage robust optimization of the Bayes risk."""
    return _bo_loop(cfg, problem or get_problem(cfg.problem), robust=True)


def run_mobo_nonrobust(cfg: RunConfig, problem: Problem | None = None) -> RunRecord:
    """Standard multi-objective BO of ``f`` (no kernel expectations, no relocation)."""
    return _bo_loop(cfg, problem or get_problem(cfg.problem), robust=False)


def gp_mean_bayes_risk(models, samples: np.ndarray):
    """Objective ``X -> mean over samples of the GP posterior mean at X + xi``."""
    ens = GpEnsemble(models)

    def objective(X):
        X = np.atleast_2d(X)
        shifted = (X[:, None, :] + samples[None, :, :]).reshape(-1, X.shape[1])
        return ens.mean(shifted).reshape(X.shape[0], samples.shape[0], -1).mean(axis=1)

    return objective


OS_EA = EaConfig(population=20, generations=200)


def run_ea_gp_os(cfg: RunConfig, problem: Problem | None = None) -> RunRecord:
    """One-shot baseline: uniform design of the whole budget, then NSGA-II on the surrogate's Bayes risk."""
    problem = problem or get_problem(cfg.problem)
    tic = time.perf_counter()
    n0 = cfg.initial_size(problem.d)
    n = n0 + cfg.q * cfg.n_iter
    X = problem.space.sample_uniform(n, stream(cfg.seed, STREAM_INIT))
    Y = problem.evaluate(X)
    record = RunRecord(cfg, X, Y, n)
    try:
        models = fit_models(X, Y, problem, stream(cfg.seed, STREAM_GPFIT), cfg.gp_restarts)
    except FitError as exc:
        record.completed = False
        raise RunAborted(str(exc), record) from exc
    samples = sample_noise(problem.noise, cfg.n_samples, stream(cfg.seed, STREAM_KE))
    ea = EaConfig(OS_EA.population, OS_EA.generations, seed=int(stream(cfg.seed, STREAM_ACQ).integers(2**31)))
    front = nsga2_run(gp_mean_bayes_risk(models, samples), problem.space, ea).front
    record.recommendations.append(Recommendation(cfg.n_iter, front.origin_inputs, front.points))
    record.wall_times.append(time.perf_counter() - tic)
    return record


RUNNERS = {"rmobo": run_rmobo, "mobo_nonrobust": run_mobo_nonrobust, "ea_gp_os": run_ea_gp_os}


def run(cfg: RunConfig, problem: Problem | None = None) -> RunRecord:
    """Dispatch on ``cfg.method``; persists the record (also a partial one) when ``cfg.out`` is set."""
    try:
        record = RUNNERS[cfg.method](cfg, problem)
    except RunAborted as exc:
        if cfg.out:
            save_record(exc.record, cfg.out)
        raise
    if cfg.out:
        save_record(record, cfg.out)
    return record


# -- recommendations and scoring ---------------------------------------------------

def recommend(record: RunRecord, mode: str = "in_sample", problem: Problem | None = None) -> ParetoFront:
    """Final recommended front.

    ``in_sample`` selects among evaluated and proposed inputs by the posterior
    mean of the Bayes risk; ``out_of_sample`` searches that posterior mean with
    NSGA-II (population 20, 200 generations).
    """
    if mode == "in_sample":
        if not record.recommendations:
            raise ValueError("record holds no recommendation")
        rec = record.recommendations[-1]
        return ParetoFront(rec.values, rec.inputs)
    if mode != "out_of_sample":
        raise ValueError("mode must be in_sample or out_of_sample")
    cfg = record.config
    problem = problem or get_problem(cfg.problem)
    models = fit_models(record.X, record.Y, problem, stream(cfg.seed, STREAM_REFIT), cfg.gp_restarts)
    samples = FixedNoiseSamples.draw(problem.noise, cfg.n_samples, seed=[cfg.seed, STREAM_KE])
    rgp = RobustGp(models, samples)
    ea = EaConfig(OS_EA.population, OS_EA.generations, seed=cfg.seed)
    return nsga2_run(rgp.mean, problem.space, ea).front


def scale_for_scoring(Y, F_star):
    """Scale objectives by the reference front's range; objectives with zero range stay unscaled."""
    lo, hi = objective_ranges(F_star)
    span = hi - lo
    lo = np.where(span > 0, lo, 0.0)
    span = np.where(span > 0, span, 1.0)
    return (np.asarray(Y, dtype=float) - lo) / span


def score_front(problem: Problem, inputs, reference: "ReferenceFront", n_mc: int = SCORE_MC,
                seed: int = SCORE_SEED) -> float:
    """AVD between the true Bayes risk at ``inputs`` and the reference front, in scaled space."""
    samples = sample_noise(problem.noise, n_mc, np.random.default_rng(seed))
    J = bayes_risk_oracle(problem, np.atleast_2d(inputs), samples=samples)
    return avd(scale_for_scoring(J, reference.points), scale_for_scoring(reference.points, reference.points))


def score_run(record: RunRecord, reference: "ReferenceFront", problem: Problem | None = None,
              n_mc: int = SCORE_MC) -> np.ndarray:
    """AVD of the recommendation at every iteration (initial design included)."""
    if reference is None:
        raise FileNotFoundError("no reference front; create one with `rmobo reference-front`")
    problem = problem or get_problem(record.config.problem)
    return np.array([score_front(problem, rec.inputs, reference, n_mc) for rec in record.recommendations])


# -- reference fronts -------------------------------------------------------------

REFERENCE_EA = EaConfig(population=60, generations=500)
REFERENCE_MC = 10_000


@dataclass
class ReferenceFront:
    problem: str
    points: np.ndarray
    inputs: np.ndarray
    seed: int
    config_hash: str


def _ea_hash(cfg: EaConfig, n_mc: int) -> str:
    text = json.dumps({**asdict(cfg), "n_mc": n_mc, "version": 1}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def reference_front_path(out_dir, problem: str, seed: int, cfg: EaConfig = REFERENCE_EA,
                         n_mc: int = REFERENCE_MC) -> Path:
    return Path(out_dir) / f"reference_{problem}_s{seed}_{_ea_hash(cfg, n_mc)}.csv"


def compute_reference_front(problem: Problem, seed: int = 0, cfg: EaConfig = REFERENCE_EA,
                            n_mc: int = REFERENCE_MC) -> ReferenceFront:
    """NSGA-II on the Monte Carlo Bayes risk of the true objectives (common random numbers)."""
    samples = sample_noise(problem.noise, n_mc, stream(seed, 0))
    ea = EaConfig(cfg.population, cfg.generations, cfg.crossover_prob, cfg.crossover_eta,
                  cfg.mutation_prob, cfg.mutation_eta, seed)
    front = nsga2_run(lambda X: bayes_risk_oracle(problem, X, samples=samples), problem.space, ea).front
    return ReferenceFront(problem.name, front.points, front.origin_inputs, seed, _ea_hash(cfg, n_mc))


def save_reference_front(ref: ReferenceFront, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M, d = ref.points.shape[1], ref.inputs.shape[1]
    header = ",".join([f"J{i + 1}" for i in range(M)] + [f"x{i + 1}" for i in range(d)])
    np.savetxt(path, np.hstack([ref.points, ref.inputs]), delimiter=",", header=header, comments="", fmt="%.17g")
    meta = {"problem": ref.problem, "seed": ref.seed, "config_hash": ref.config_hash, "format": 1}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_reference_front(path) -> ReferenceFront:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; create it with `rmobo reference-front`")
    header = path.read_text().splitlines()[0].split(",")
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    M = sum(1 for h in header if h.startswith("J"))
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return ReferenceFront(meta.get("problem", ""), data[:, :M], data[:, M:], meta.get("seed", -1),
                          meta.get("config_hash", ""))


def cached_reference_front(problem: str, out_dir, seed: int = 0, cfg: EaConfig = REFERENCE_EA,
                           n_mc: int = REFERENCE_MC) -> ReferenceFront:
    path = reference_front_path(out_dir, problem, seed, cfg, n_mc)
    if path.exists():
        return load_reference_front(path)
    ref = compute_reference_front(get_problem(problem), seed, cfg, n_mc)
    save_reference_front(ref, path)
    return ref


# -- Proposition 1 ---------------------------------------------------------------------

@dataclass
class Prop1Report:
    problem: str
    certified: bool
    objectives: list

    def summary(self) -> str:
        lines = [f"problem {self.problem}: distinct robust front certified = {self.certified}"]
        for o in self.objectives:
            lines.append(
                f"  objective {o['objective'] + 1}: argmax f = {np.round(o['x_f'], 4).tolist()}, "
                f"argmax J = {np.round(o['x_J'], 4).tolist()}, distinct = {o['distinct']}, "
                f"unique = {o['unique']}, f(x_J) dominated = {o['dominated']}"
            )
        return "\n".join(lines)


def _grid(space, points_per_dim: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(space.lower, space.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, space.d)


def check_proposition1(problem: Problem, resolution: float | None = None, n_mc: int | None = None,
                       seed: int = 0) -> Prop1Report:
    """Grid test of the sufficient condition for a robust front distinct from the nominal one.

    For each objective ``i`` the grid points whose Bayes risk ``J_i`` is within
    three standard errors of the best form the near-optimal set ``S``.  Inside
    ``S`` the point with the best remaining ``J`` values (lexicographically) is
    taken as the robust maximizer, which makes it Pareto-optimal under ``J``.
    The condition holds when the nominal maximizer of ``f_i`` lies outside
    ``S`` and ``f`` at the robust maximizer is dominated by ``f`` at some grid
    point.  ``unique`` reports whether ``S`` shrinks to a small neighbourhood.
    """
    d = problem.d
    if resolution is None:
        resolution = 1e-3 if d == 1 else 1e-2
    if n_mc is None:
        n_mc = 10_000 if d == 1 else 2_000
    points = int(round(1.0 / resolution)) + 1
    grid = _grid(problem.space, points)
    unit = problem.space.to_unit(grid)
    samples = sample_noise(problem.noise, n_mc, stream(seed, 0))
    F = problem.evaluate(grid)
    J = np.empty_like(F)
    se = np.empty_like(F)
    rows = max(1, 2_000_000 // (n_mc * d))
    for s in range(0, grid.shape[0], rows):
        vals = problem.evaluate(grid[s : s + rows, None, :] + samples[None])
        J[s : s + rows] = vals.mean(axis=1)
        se[s : s + rows] = vals.std(axis=1) / np.sqrt(n_mc)
    cell = 2.0 * resolution * np.sqrt(d)
    objectives, certified = [], False
    for i in range(problem.n_objectives):
        jf, top = int(np.argmax(F[:, i])), int(np.argmax(J[:, i]))
        near = np.flatnonzero(J[:, i] >= J[top, i] - 3.0 * np.hypot(se[:, i], se[top, i]))
        others = [k for k in range(problem.n_objectives) if k != i]
        keys = [J[near, k] for k in reversed(others)] + [J[near, i]]
        jj = int(near[np.lexsort(keys)[-1]])
        distinct = bool(jf not in near)
        unique = bool(np.max(np.linalg.norm(unit[near] - unit[jj], axis=1)) <= cell)
        fJ = F[jj]
        dominated = bool(np.any(np.all(F >= fJ, axis=1) & np.any(F > fJ + 1e-9, axis=1)))
        holds = distinct and dominated
        certified |= holds
        objectives.append({"objective": i, "x_f": grid[jf], "x_J": grid[jj], "x_J_argmax": grid[top],
                           "distinct": distinct,
                           "unique": unique, "dominated": dominated, "holds": holds})
    return Prop1Report(problem.name, certified, objectives)


# -- persistence -------------------------------------------------------------------------

def _fmt(values) -> str:
    return ",".join("%.17g" % v for v in values)


def package_digest() -> str:
    """Hash of the package sources, used to key cached experiment results."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def save_record(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = record.config
    d, M = record.X.shape[1], record.Y.shape[1]
    (out / "config.txt").write_text(cfg.to_text())

    lines = [",".join(["index", "iteration"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(M)])]
    iters = [-1] * record.n_initial + [row.iteration for row in record.queries]
    iters += [-1] * (record.X.shape[0] - len(iters))
    for k, (x, y) in enumerate(zip(record.X, record.Y)):
        lines.append(f"{k},{iters[k]}," + _fmt(np.concatenate([x, y])))
    (out / "data.csv").write_text("\n".join(lines) + "\n")

    head = ["iteration", "slot"] + [f"pending_x{i + 1}" for i in range(d)] + [f"final_x{i + 1}" for i in range(d)]
    head += ["al_fired", "acq_value", "al_value"] + [f"ref_{i + 1}" for i in range(M)]
    lines = [",".join(head)]
    for row in record.queries:
        ref = record.ref_points[row.iteration] if row.iteration < len(record.ref_points) else np.full(M, np.nan)
        lines.append(f"{row.iteration},{row.slot}," + _fmt(np.concatenate([row.pending, row.final]))
                     + f",{int(row.al_fired)}," + _fmt([row.acq_value, row.al_value]) + "," + _fmt(ref))
    (out / "queries.csv").write_text("\n".join(lines) + "\n")

    head = ["iteration"] + [f"x{i + 1}" for i in range(d)] + [f"mean{i + 1}" for i in range(M)]
    lines = [",".join(head)]
    for rec in record.recommendations:
        for x, v in zip(rec.inputs, rec.values):
            lines.append(f"{rec.iteration}," + _fmt(np.concatenate([x, v])))
    (out / "recommendations.csv").write_text("\n".join(lines) + "\n")

    manifest = {
        "format": 1,
        "config_hash": cfg.digest(),
        "package_digest": package_digest(),
        "completed": record.completed,
        "n_initial": record.n_initial,
        "n_evaluations": record.n_evaluations,
        "seeds": {"master": cfg.seed, "streams": {"init": STREAM_INIT, "ke_samples": STREAM_KE,
                                                  "gp_fit": STREAM_GPFIT, "acquisition": STREAM_ACQ,
                                                  "active_learning": STREAM_AL, "qehvi_base": STREAM_BASE,
                                                  "refit": STREAM_REFIT}},
        "versions": {"rmobo": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "timings.json").write_text(json.dumps({"wall_times": record.wall_times}) + "\n")
    return out


def _read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [np.array([float(v) for v in line.split(",")]) for line in lines[1:] if line]
    return header, (np.array(rows) if rows else np.zeros((0, len(header))))


def load_record(out_dir) -> RunRecord:
    out = Path(out_dir)
    cfg = RunConfig.from_file(out / "config.txt")
    manifest = json.loads((out / "manifest.json").read_text())
    header, data = _read_csv(out / "data.csv")
    d = sum(1 for h in header if h.startswith("x"))
    X, Y = data[:, 2 : 2 + d], data[:, 2 + d :]
    record = RunRecord(cfg, X, Y, manifest["n_initial"], completed=manifest["completed"])
    header, q = _read_csv(out / "queries.csv")
    M = Y.shape[1]
    refs = {}
    for row in q:
        it = int(row[0])
        record.queries.append(QueryRow(it, int(row[1]), row[2 : 2 + d], row[2 + d : 2 + 2 * d],
                                       bool(row[2 + 2 * d]), row[3 + 2 * d], row[4 + 2 * d]))
        refs[it] = row[5 + 2 * d : 5 + 2 * d + M]
    record.ref_points = [refs[k] for k in sorted(refs)]
    _, r = _read_csv(out / "recommendations.csv")
    for it in (np.unique(r[:, 0]) if r.size else []):
        block = r[r[:, 0] == it]
        record.recommendations.append(Recommendation(int(it), block[:, 1 : 1 + d], block[:, 1 + d :]))
    timings = out / "timings.json"
    if timings.exists():
        record.wall_times = json.loads(timings.read_text())["wall_times"]
    return record
