"""NSGA-II with simulated binary crossover and polynomial mutation (maximization)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pareto import ParetoFront, extract_front, non_dominated_sort
from .problem import DesignSpace


@dataclass(frozen=True)
class EaConfig:
    """Evolution settings; ``mutation_prob=None`` means ``1/d``."""

    population: int = 60
    generations: int = 500
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_prob: float | None = None
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and at least 4")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")


def crowding_distance(F: np.ndarray) -> np.ndarray:
    n, M = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(M):
        order = np.argsort(F[:, k], kind="stable")
        col = F[order, k]
        span = col[-1] - col[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def _survivors(F: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices kept by rank then crowding, plus their ranks and crowding distances."""
    ranks = non_dominated_sort(F)
    crowd = np.zeros(F.shape[0])
    for r in np.unique(ranks):
        idx = np.flatnonzero(ranks == r)
        crowd[idx] = crowding_distance(F[idx])
    order = np.lexsort((-crowd, ranks))
    keep = order[:size]
    return keep, ranks[keep], crowd[keep]


def _tournament(ranks, crowd, n, rng):
    a = rng.integers(0, ranks.size, n)
    b = rng.integers(0, ranks.size, n)
    better_a = (ranks[a] < ranks[b]) | ((ranks[a] == ranks[b]) & (crowd[a] >= crowd[b]))
    return np.where(better_a, a, b)


def _sbx(P1, P2, lo, hi, prob, eta, rng):
    """Bounded simulated binary crossover applied per variable with probability 1/2."""
    C1, C2 = P1.copy(), P2.copy()
    n, d = P1.shape
    mate = rng.random(n) < prob
    swap = (rng.random((n, d)) < 0.5) & mate[:, None] & (np.abs(P1 - P2) > 1e-14)
    u = rng.random((n, d))
    y1, y2 = np.minimum(P1, P2), np.maximum(P1, P2)
    delta = np.where(swap, y2 - y1, 1.0)

    def child(beta_bound):
        alpha = 2.0 - beta_bound ** (-(eta + 1.0))
        betaq = np.where(u <= 1.0 / alpha, (u * alpha) ** (1.0 / (eta + 1.0)),
                         (1.0 / np.maximum(2.0 - u * alpha, 1e-300)) ** (1.0 / (eta + 1.0)))
        return betaq

    beta_lo = 1.0 + 2.0 * (y1 - lo) / delta
    beta_hi = 1.0 + 2.0 * (hi - y2) / delta
    c1 = 0.5 * ((y1 + y2) - child(beta_lo) * (y2 - y1))
    c2 = 0.5 * ((y1 + y2) + child(beta_hi) * (y2 - y1))
    c1, c2 = np.clip(c1, lo, hi), np.clip(c2, lo, hi)
    flip = rng.random((n, d)) < 0.5
    a, b = np.where(flip, c2, c1), np.where(flip, c1, c2)
    C1 = np.where(swap, a, C1)
    C2 = np.where(swap, b, C2)
    return C1, C2


def _polynomial_mutation(X, lo, hi, prob, eta, rng):
    n, d = X.shape
    mutate = rng.random((n, d)) < prob
    u = rng.random((n, d))
    span = hi - lo
    d1 = (X - lo) / span
    d2 = (hi - X) / span
    power = 1.0 / (eta + 1.0)
    left = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** power - 1.0
    right = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)) ** power
    delta = np.where(u < 0.5, left, right)
    return np.where(mutate, np.clip(X + delta * span, lo, hi), X)


@dataclass
class EaResult:
    front: ParetoFront
    population: np.ndarray
    objectives: np.ndarray
    front_history: list


def nsga2_run(objective, space: DesignSpace, cfg: EaConfig = EaConfig(), keep_history: bool = False) -> EaResult:
    """Evolve a population towards the Pareto set of ``objective``.

    Args:
        objective: maps an ``(n, d)`` array of inputs to ``(n, M)`` objective values.
        space: box to search.
        cfg: evolution settings.
        keep_history: store the first-front objective vectors of every generation.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    d = space.d
    pm = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / d
    X = space.sample_uniform(cfg.population, rng)
    F = np.asarray(objective(X), dtype=float)
    keep, ranks, crowd = _survivors(F, cfg.population)
    X, F = X[keep], F[keep]
    history = [F[ranks == 0].copy()] if keep_history else []
    half = cfg.population // 2
    for _ in range(cfg.generations):
        parents = _tournament(ranks, crowd, cfg.population, rng)
        P1, P2 = X[parents[:half]], X[parents[half:]]
        C1, C2 = _sbx(P1, P2, lo, hi, cfg.crossover_prob, cfg.crossover_eta, rng)
        children = _polynomial_mutation(np.vstack([C1, C2]), lo, hi, pm, cfg.mutation_eta, rng)
        Fc = np.asarray(objective(children), dtype=float)
        X_all, F_all = np.vstack([X, children]), np.vstack([F, Fc])
        keep, ranks, crowd = _survivors(F_all, cfg.population)
        X, F = X_all[keep], F_all[keep]
        if keep_history:
            history.append(F[ranks == 0].copy())
    first = ranks == 0
    return EaResult(extract_front(F[first], X[first]), X, F, history)
