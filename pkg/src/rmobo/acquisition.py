"""Acquisition functions and their optimizer.

First stage: analytic EHVI (two objectives) and Monte Carlo qEHVI on the
posterior of the model (robust or plain GP).  Second stage: the active-learning
criterion, which picks the location whose fantasized observation most reduces
the Bayes-risk variance at a pending query.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import optimize, stats
from scipy.stats import qmc

from .pareto import ParetoFront, extract_front, reference_point
from .problem import DesignSpace
from .robust_gp import nearest_pd

QEHVI_SAMPLES = 512
DEFAULT_EPS = 1e-3


@dataclass
class AcquisitionContext:
    """Everything the first-stage acquisition needs for one BO iteration.

    Attributes:
        model: a ``RobustGp`` or ``GpEnsemble``.
        current_front: front of the posterior mean at the evaluated inputs.
        ref_point: hypervolume reference point.
        base_samples: standard-normal draws ``(S, M, q)`` for qEHVI, or None.
    """

    model: object
    current_front: ParetoFront
    ref_point: np.ndarray
    base_samples: np.ndarray | None = None

    @classmethod
    def build(cls, model, X_train, base_samples=None) -> "AcquisitionContext":
        mean = model.mean(X_train)
        front = extract_front(mean, X_train)
        return cls(model, front, reference_point(front.points), base_samples)


def _strips(front_points, ref):
    """Decompose the non-dominated region above ``ref`` into vertical strips.

    Returns lower/upper edges along objective 1 and the level above which
    objective 2 is non-dominated inside each strip.
    """
    P = np.asarray(front_points, dtype=float).reshape(-1, 2)
    P = P[np.all(P > ref, axis=1)]
    if P.shape[0]:
        P = extract_front(P).points
        P = P[np.argsort(P[:, 0])]
    lows = np.concatenate([[ref[0]], P[:, 0]])
    highs = np.concatenate([P[:, 0], [np.inf]])
    levels = np.concatenate([P[:, 1], [ref[1]]])
    return lows, highs, levels


def _expected_excess(mu, sigma, h):
    """``E[(Y - h)^+]`` for ``Y ~ N(mu, sigma^2)``; the deterministic limit when sigma is 0."""
    mu, sigma, h = np.broadcast_arrays(mu, sigma, h)
    out = np.maximum(mu - h, 0.0)
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos]
        t = (mu[pos] - h[pos]) / s
        out = out.copy()
        out[pos] = s * stats.norm.pdf(t) + (mu[pos] - h[pos]) * stats.norm.cdf(t)
    return out


def ehvi_gaussian(mean, std, front_points, ref) -> np.ndarray:
    """Exact EHVI for independent Gaussian marginals, ``mean``/``std`` of shape ``(m, 2)``."""
    mean = np.atleast_2d(mean)
    std = np.atleast_2d(std)
    lows, highs, levels = _strips(front_points, np.asarray(ref, dtype=float))
    mu1, s1 = mean[:, :1], std[:, :1]
    mu2, s2 = mean[:, 1:], std[:, 1:]
    width = _expected_excess(mu1, s1, lows[None, :])
    finite = np.isfinite(highs)
    width[:, finite] -= _expected_excess(mu1, s1, highs[None, finite])
    height = _expected_excess(mu2, s2, levels[None, :])
    return np.maximum(np.sum(width * height, axis=1), 0.0)


def hvi_points(Y, front_points, ref) -> np.ndarray:
    """Hypervolume improvement of single points ``Y (..., 2)`` over a fixed front."""
    lows, highs, levels = _strips(front_points, np.asarray(ref, dtype=float))
    y1, y2 = Y[..., :1], Y[..., 1:]
    width = np.clip(np.minimum(y1, highs) - lows, 0.0, None)
    return np.sum(width * np.clip(y2 - levels, 0.0, None), axis=-1)


def hvi_batch(Y, front_points, ref) -> np.ndarray:
    """Joint hypervolume improvement of batches ``Y (..., q, 2)`` by inclusion-exclusion."""
    q = Y.shape[-2]
    total = np.zeros(Y.shape[:-2])
    for size in range(1, q + 1):
        sign = 1.0 if size % 2 else -1.0
        for subset in combinations(range(q), size):
            corner = np.min(Y[..., list(subset), :], axis=-2)
            total += sign * hvi_points(corner, front_points, ref)
    return np.maximum(total, 0.0)


def ehvi(ctx: AcquisitionContext, X) -> np.ndarray:
    """EHVI of the model posterior at each row of ``X``."""
    if ctx.model.n_objectives != 2:
        raise ValueError("analytic EHVI is implemented for two objectives")
    mean, var = ctx.model.posterior(np.atleast_2d(X))
    return ehvi_gaussian(mean, np.sqrt(var), ctx.current_front.points, ctx.ref_point)


def draw_base_samples(n_objectives: int, q: int, rng: np.random.Generator, n: int = QEHVI_SAMPLES) -> np.ndarray:
    return rng.standard_normal((n, n_objectives, q))


def qehvi_samples(ctx: AcquisitionContext, Xb) -> np.ndarray:
    """Per-sample hypervolume improvements ``(m, S)`` for batches ``Xb (m, q, d)``."""
    Xb = np.asarray(Xb, dtype=float)
    if Xb.ndim == 2:
        Xb = Xb[None]
    mean, cov = ctx.model.batch_posterior(Xb)
    m, q, M = mean.shape
    Z = ctx.base_samples
    if Z is None or Z.shape[1:] != (M, q):
        raise ValueError("base samples must have shape (S, M, q)")
    L = np.empty_like(cov)
    for r in range(m):
        for o in range(M):
            L[r, o] = np.linalg.cholesky(nearest_pd(cov[r, o]))
    Y = mean[:, None, :, :] + np.einsum("moab,sob->msao", L, Z)
    return hvi_batch(Y, ctx.current_front.points, ctx.ref_point)


def qehvi(ctx: AcquisitionContext, Xb) -> np.ndarray:
    """SAA estimate of batch EHVI for each batch in ``Xb (m, q, d)`` (or one ``(q, d)`` batch)."""
    return qehvi_samples(ctx, Xb).mean(axis=1)


# -- second stage -------------------------------------------------------------

def al_acquisition(rgp, x_star, X, states=None) -> np.ndarray:
    """Half log ratio of the Bayes-risk variance at ``x_star`` before and after
    fantasizing an observation at each row of ``X`` (summed over objectives)."""
    states = states if states is not None else rgp.al_states(x_star)
    before, after = rgp.variance_after(states, np.atleast_2d(X))
    floor = np.array([m.y_std**2 * m.jitter for m in rgp.models])
    after = np.maximum(after, floor)
    before = np.maximum(before, floor)
    return np.maximum(0.5 * np.sum(np.log(before / after), axis=1), 0.0)


def al_activation(x_star, X_train, space: DesignSpace, eps: float = DEFAULT_EPS) -> bool:
    """Whether a pending query duplicates data or sits on the boundary (unit-cube distances)."""
    u = space.to_unit(np.asarray(x_star, dtype=float))
    U = space.to_unit(np.atleast_2d(X_train))
    near_data = U.shape[0] > 0 and np.min(np.linalg.norm(U - u, axis=1)) < eps
    near_lower = np.min(u) < eps
    near_upper = np.min(1.0 - u) < eps
    return bool(near_data or near_lower or near_upper)


def al_box(x_star, halfwidth, enlarged: DesignSpace) -> tuple[np.ndarray, np.ndarray]:
    lo = np.maximum(np.asarray(x_star) - halfwidth, enlarged.lower)
    hi = np.minimum(np.asarray(x_star) + halfwidth, enlarged.upper)
    return lo, hi


# -- optimizer ------------------------------------------------------------------

@dataclass(frozen=True)
class OptimizerBudget:
    raw_per_dim: int = 1024
    starts: int = 8
    maxiter: int = 200
    fd_step: float = 1e-6


@dataclass
class OptimizationResult:
    x: np.ndarray
    value: float
    best_raw_value: float
    fallback: bool = False
    info: dict = field(default_factory=dict)


def optimize_acquisition(objective, bounds, q: int = 1, budget: OptimizerBudget | None = None,
                         rng: np.random.Generator | None = None, candidates=None) -> OptimizationResult:
    """Maximize ``objective(Xb (m, q, d)) -> (m,)`` over a box.

    A scrambled Sobol set of ``raw_per_dim * q * d`` batches (plus any extra
    ``candidates`` of shape ``(c, q, d)``) is scored, the best ``starts`` are
    refined jointly with L-BFGS-B using central finite differences, and the
    best batch overall is returned.
    """
    budget = budget or OptimizerBudget()
    rng = rng if rng is not None else np.random.default_rng(0)
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    d = lower.size
    dim = q * d
    width = upper - lower
    fixed = ~(width > 0)
    width_safe = np.where(fixed, 1.0, width)

    def to_x(U):
        return (lower + U.reshape(-1, q, d) * width_safe).reshape(-1, q, d)

    def score(U):
        vals = np.asarray(objective(to_x(U)), dtype=float)
        return np.where(np.isfinite(vals), vals, -np.inf)

    n_raw = budget.raw_per_dim * dim
    sobol = qmc.Sobol(dim, scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        raw = sobol.random_base2(int(np.ceil(np.log2(n_raw))))[:n_raw]
    raw.reshape(-1, q, d)[:, :, fixed] = 0.0
    if candidates is not None:
        extra = (np.asarray(candidates, dtype=float).reshape(-1, q, d) - lower) / width_safe
        extra[:, :, fixed] = 0.0
        raw = np.vstack([raw, np.clip(extra, 0.0, 1.0).reshape(-1, dim)])
    raw_vals = score(raw)
    order = np.argsort(-raw_vals, kind="stable")
    best_raw = raw[order[0]].copy()
    best_raw_value = float(raw_vals[order[0]])
    k = min(budget.starts, raw.shape[0])
    starts = raw[order[:k]].copy()

    free = np.tile(~fixed, q)
    h = budget.fd_step
    # keeps L-BFGS-B's absolute gradient tolerance meaningful for tiny acquisition values
    scale = abs(best_raw_value) if np.isfinite(best_raw_value) and best_raw_value != 0 else 1.0

    def negative(flat):
        U = flat.reshape(k, dim)
        base = score(U)
        grad = np.zeros_like(U)
        for j in np.flatnonzero(free):
            up, down = U.copy(), U.copy()
            up[:, j] = np.minimum(U[:, j] + h, 1.0)
            down[:, j] = np.maximum(U[:, j] - h, 0.0)
            fu, fd = score(up), score(down)
            grad[:, j] = (fu - fd) / (up[:, j] - down[:, j])
        grad = np.where(np.isfinite(grad), grad, 0.0)
        base = np.where(np.isfinite(base), base, -1e300)
        return -float(np.sum(base)) / scale, -grad.ravel() / scale

    box = [(0.0, 1.0) if f else (0.0, 0.0) for f in free]
    try:
        res = optimize.minimize(negative, starts.ravel(), jac=True, method="L-BFGS-B",
                                bounds=box * k, options={"maxiter": budget.maxiter})
        refined = np.clip(res.x.reshape(k, dim), 0.0, 1.0)
        refined_vals = score(refined)
        i = int(np.argmax(refined_vals))
        if not np.isfinite(refined_vals[i]):
            raise FloatingPointError("refinement produced no finite value")
    except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        warnings.warn(f"acquisition refinement failed ({exc}); using best raw candidate", stacklevel=2)
        return OptimizationResult(to_x(best_raw[None])[0], best_raw_value, best_raw_value, True)
    if refined_vals[i] >= best_raw_value:
        U, value = refined[i], float(refined_vals[i])
    else:
        U, value = best_raw, best_raw_value
    return OptimizationResult(to_x(U[None])[0], value, best_raw_value, False,
                              {"n_raw": n_raw, "starts": k})
