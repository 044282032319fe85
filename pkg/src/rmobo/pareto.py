"""Pareto dominance, non-dominated sorting, 2-d hypervolume and the AVD metric.

All objectives are maximized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DUPLICATE_TOL = 1e-12


def dominates(a, b) -> bool:
    """True iff ``a`` is at least as good as ``b`` everywhere and better somewhere."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("vectors must have equal length")
    return bool(np.all(a >= b) and np.any(a > b))


def _dominance_matrix(Y: np.ndarray) -> np.ndarray:
    ge = np.all(Y[:, None, :] >= Y[None, :, :], axis=-1)
    gt = np.any(Y[:, None, :] > Y[None, :, :], axis=-1)
    return ge & gt


def non_dominated_sort(Y) -> np.ndarray:
    """Front index of every row (0 is the non-dominated set)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = Y.shape[0]
    D = _dominance_matrix(Y)
    dominated_by = D.sum(axis=0)
    ranks = np.full(n, -1, dtype=int)
    current = np.flatnonzero(dominated_by == 0)
    rank = 0
    while current.size:
        ranks[current] = rank
        dominated_by = dominated_by - D[current].sum(axis=0)
        dominated_by[ranks >= 0] = -1
        current = np.flatnonzero(dominated_by == 0)
        rank += 1
    return ranks


@dataclass(frozen=True)
class ParetoFront:
    """Mutually non-dominated objective vectors and the inputs that produced them."""

    points: np.ndarray
    origin_inputs: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        X = np.atleast_2d(np.asarray(self.origin_inputs, dtype=float))
        if P.shape[0] < 1 or P.shape[0] != X.shape[0]:
            raise ValueError("front needs at least one point and one input per point")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "origin_inputs", X)

    def __len__(self) -> int:
        return self.points.shape[0]


def front_indices(Y) -> np.ndarray:
    """Row indices of the first front, keeping one representative per duplicate group."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    idx = np.flatnonzero(non_dominated_sort(Y) == 0)
    keep = []
    for i in idx:
        if not any(np.all(np.abs(Y[i] - Y[j]) <= DUPLICATE_TOL) for j in keep):
            keep.append(i)
    return np.array(keep, dtype=int)


def extract_front(Y, X=None) -> ParetoFront:
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.zeros((Y.shape[0], 0)) if X is None else np.atleast_2d(np.asarray(X, dtype=float))
    keep = front_indices(Y)
    return ParetoFront(Y[keep], X[keep])


def _points(front) -> np.ndarray:
    P = front.points if isinstance(front, ParetoFront) else front
    return np.asarray(P, dtype=float).reshape(-1, 2)


def hypervolume_2d(front, ref) -> float:
    """Area dominated by ``front`` and dominating ``ref``; points not above ``ref`` are ignored."""
    P = _points(front)
    ref = np.asarray(ref, dtype=float)
    P = P[np.all(P > ref, axis=1)]
    if P.shape[0] == 0:
        return 0.0
    P = P[np.argsort(-P[:, 0], kind="stable")]
    area, best_y2 = 0.0, ref[1]
    for y1, y2 in P:
        if y2 > best_y2:
            area += (y1 - ref[0]) * (y2 - best_y2)
            best_y2 = y2
    return float(area)


def avd(F, F_star, p: int = 2) -> float:
    """Averaged Hausdorff distance ``max(GD_p, IGD_p)`` with Euclidean inner norm."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(F_star, dtype=float))
    if F.size == 0 or G.size == 0:
        raise ValueError("avd needs two non-empty sets")
    dist = np.linalg.norm(F[:, None, :] - G[None, :, :], axis=-1)
    gd = np.mean(dist.min(axis=1) ** p) ** (1.0 / p)
    igd = np.mean(dist.min(axis=0) ** p) ** (1.0 / p)
    return float(max(gd, igd))


def objective_ranges(F_star_raw) -> tuple[np.ndarray, np.ndarray]:
    F = np.atleast_2d(np.asarray(F_star_raw, dtype=float))
    return F.min(axis=0), F.max(axis=0)


def scale_objectives(Y, F_star_raw) -> np.ndarray:
    """Affine map sending the reference front's per-objective range to ``[0, 1]``."""
    lo, hi = objective_ranges(F_star_raw)
    span = hi - lo
    if np.any(span <= 0):
        raise ValueError("reference front has zero range in some objective")
    return (np.asarray(Y, dtype=float) - lo) / span


def reference_point(points, margin: float = 0.1) -> np.ndarray:
    """Per-objective minimum minus ``margin`` times the range (unit fallback for flat ranges)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, np.maximum(np.abs(lo), 1.0))
    return lo - margin * span
