"""Design spaces, input-noise distributions and the bi-objective benchmark suite.

All objectives are returned in maximization form, i.e. as the negation of the
textbook (minimization) expressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats


def as_vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent random stream ``index`` derived from a master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass(frozen=True)
class DesignSpace:
    """Axis-aligned box ``[lower, upper]`` in original units."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = as_vector(self.lower, "lower")
        upper = as_vector(self.upper, "upper")
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if not np.all(lower < upper):
            raise ValueError("lower must be strictly below upper in every dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def from_unit(self, u) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.width

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def enlarged(self, delta) -> "DesignSpace":
        delta = np.broadcast_to(np.asarray(delta, dtype=float), self.lower.shape)
        return DesignSpace(self.lower - delta, self.upper + delta)

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + rng.random((n, self.d)) * self.width


# ---------------------------------------------------------------------------
# Noise distributions (independent across dimensions)
# ---------------------------------------------------------------------------


class NoiseDistribution:
    dim: int

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def al_halfwidth(self) -> np.ndarray:
        """Half-width of the active-learning box implied by the distribution."""
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(NoiseDistribution):
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean, std = as_vector(self.mean, "mean"), as_vector(self.std, "std")
        mean, std = np.broadcast_arrays(mean, std)
        if not np.all(std > 0):
            raise ValueError("Gaussian std must be positive")
        object.__setattr__(self, "mean", as_vector(mean, "mean"))
        object.__setattr__(self, "std", as_vector(std, "std"))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n, rng):
        return self.mean + self.std * rng.standard_normal((n, self.dim))

    def al_halfwidth(self):
        # distance from the mean to the 97.5% marginal quantile
        return stats.norm.ppf(0.975) * self.std


@dataclass(frozen=True)
class StudentT(NoiseDistribution):
    """Location-scale Student-t: ``loc + scale * T(dof)``."""

    dof: float
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        if not self.dof > 0:
            raise ValueError("dof must be positive")
        loc, scale = np.broadcast_arrays(as_vector(self.loc, "loc"), as_vector(self.scale, "scale"))
        if not np.all(scale > 0):
            raise ValueError("StudentT scale must be positive")
        object.__setattr__(self, "loc", as_vector(loc, "loc"))
        object.__setattr__(self, "scale", as_vector(scale, "scale"))

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    def sample(self, n, rng):
        return self.loc + self.scale * rng.standard_t(self.dof, size=(n, self.dim))

    def al_halfwidth(self):
        return stats.t.ppf(0.975, self.dof) * self.scale


@dataclass(frozen=True)
class TruncatedNormal(NoiseDistribution):
    """Normal truncated to ``[lower, upper]``, sampled by per-dimension rejection."""

    mean: np.ndarray
    std: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    max_retries: int = 1000

    def __post_init__(self):
        arrays = np.broadcast_arrays(
            as_vector(self.mean, "mean"),
            as_vector(self.std, "std"),
            as_vector(self.lower, "lower"),
            as_vector(self.upper, "upper"),
        )
        for name, arr in zip(("mean", "std", "lower", "upper"), arrays):
            object.__setattr__(self, name, as_vector(arr, name))
        if not np.all(self.std > 0):
            raise ValueError("TruncatedNormal std must be positive")
        if not np.all(self.lower < self.upper):
            raise ValueError("TruncatedNormal requires lower < upper")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n, rng):
        out = self.mean + self.std * rng.standard_normal((n, self.dim))
        bad = (out < self.lower) | (out > self.upper)
        for _ in range(self.max_retries):
            if not bad.any():
                return out
            rows, cols = np.nonzero(bad)
            out[rows, cols] = self.mean[cols] + self.std[cols] * rng.standard_normal(rows.size)
            bad[rows, cols] = (out[rows, cols] < self.lower[cols]) | (out[rows, cols] > self.upper[cols])
        if bad.any():
            raise RuntimeError(
                f"truncated-normal rejection sampler exhausted {self.max_retries} retries; "
                "the truncation bounds carry too little probability mass"
            )
        return out

    def al_halfwidth(self):
        return np.maximum(np.abs(self.lower), np.abs(self.upper))


@dataclass(frozen=True)
class Uniform(NoiseDistribution):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, upper = np.broadcast_arrays(as_vector(self.lower, "lower"), as_vector(self.upper, "upper"))
        if not np.all(lower < upper):
            raise ValueError("Uniform requires lower < upper")
        object.__setattr__(self, "lower", as_vector(lower, "lower"))
        object.__setattr__(self, "upper", as_vector(upper, "upper"))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def sample(self, n, rng):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def al_halfwidth(self):
        return np.maximum(np.abs(self.lower), np.abs(self.upper))


@dataclass(frozen=True)
class NoNoise(NoiseDistribution):
    """Degenerate distribution at zero (the zero-variance limit)."""

    dim: int

    def sample(self, n, rng):
        return np.zeros((n, self.dim))

    def al_halfwidth(self):
        return np.zeros(self.dim)


def sample_noise(dist: NoiseDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. noise vectors, returned as an ``(n, d)`` matrix."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return dist.sample(int(n), rng)


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """A black-box problem with additive input noise.

    ``raw`` is the vectorized textbook objective (minimization form), mapping
    ``(..., d)`` to ``(..., M)``; ``evaluate`` returns its negation.
    """

    name: str
    space: DesignSpace
    n_objectives: int
    raw: Callable[[np.ndarray], np.ndarray]
    noise: NoiseDistribution
    al_box_halfwidth: np.ndarray = field(default=None)
    problem_type: str = ""

    def __post_init__(self):
        if self.noise.dim != self.space.d:
            raise ValueError("noise dimension does not match the design space")
        halfwidth = self.al_box_halfwidth
        if halfwidth is None:
            halfwidth = self.noise.al_halfwidth()
        halfwidth = as_vector(np.broadcast_to(halfwidth, (self.space.d,)), "al_box_halfwidth")
        object.__setattr__(self, "al_box_halfwidth", halfwidth)

    @property
    def d(self) -> int:
        return self.space.d

    @property
    def enlarged_space(self) -> DesignSpace:
        return self.space.enlarged(self.al_box_halfwidth)

    def evaluate(self, x) -> np.ndarray:
        return -self.raw(np.asarray(x, dtype=float))

    def with_noise(self, noise: NoiseDistribution, al_box_halfwidth=None) -> "Problem":
        return Problem(self.name, self.space, self.n_objectives, self.raw, noise, al_box_halfwidth, self.problem_type)


def evaluate_objectives(problem: Problem, x) -> np.ndarray:
    return problem.evaluate(x)


def bayes_risk_oracle(
    problem: Problem,
    x,
    n_mc: int = 10_000,
    rng: np.random.Generator | None = None,
    samples: np.ndarray | None = None,
    chunk: int = 4_000_000,
) -> np.ndarray:
    """Monte Carlo estimate of ``J(x) = E[f(x + xi)]`` on the true objectives.

    Pass ``samples`` to reuse a fixed noise set (common random numbers) across
    calls; otherwise ``n_mc`` draws are taken from ``rng``.
    """
    if samples is None:
        if rng is None:
            raise ValueError("either rng or samples is required")
        samples = sample_noise(problem.noise, n_mc, rng)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    rows = max(1, chunk // (samples.shape[0] * problem.d))
    out = np.empty((X.shape[0], problem.n_objectives))
    for start in range(0, X.shape[0], rows):
        block = X[start : start + rows]
        vals = problem.evaluate(block[:, None, :] + samples[None, :, :])
        out[start : start + rows] = vals.mean(axis=1)
    return out[0] if single else out


# -- benchmark objectives (minimization form) -------------------------------


def _vlmop2(x):
    c = 1.0 / np.sqrt(2.0)
    y1 = 1.0 - np.exp(-np.sum((x - c) ** 2, axis=-1))
    y2 = 1.0 - np.exp(-np.sum((x + c) ** 2, axis=-1))
    return np.stack([y1, y2], axis=-1)


def _sinlin_forrester(x):
    x = x[..., 0]
    y1 = np.sin(5.0 * np.pi * x**2) + 0.5 * x
    y2 = (6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0)
    return np.stack([y1, y2], axis=-1)


def _mdtp2(x):
    x1, x2 = x[..., 0], x[..., 1]
    y1 = x1
    y2 = (1.0 - x1**2) + (10.0 + x2**2 - 10.0 * np.cos(4.0 * np.pi * x2)) * (1.0 / (0.2 + x1) + 10.0 * x1**2)
    return np.stack([y1, y2], axis=-1)


def _mdtp3(x):
    x1, x2 = x[..., 0], x[..., 1]
    y1 = x1
    y2 = 1.0 - 0.9 * np.exp(-(((x2 - 0.8) / 0.1) ** 2)) - 1.3 * np.exp(-(((x2 - 0.3) / 0.03) ** 2))
    return np.stack([y1, y2], axis=-1)


_GMM_WEIGHTS = np.array([0.04 * np.pi, 0.014 * np.pi, 0.014 * np.pi])
_GMM_MEANS = np.array([[0.2, 0.2], [0.8, 0.2], [0.5, 0.7]])
_GMM_STDS = np.array([0.2, 0.1, 0.1])


def gmm_density(x) -> np.ndarray:
    """Three-component isotropic Gaussian mixture used by BraninGMM."""
    diff = x[..., None, :] - _GMM_MEANS
    sq = np.sum(diff**2, axis=-1)
    dens = np.exp(-0.5 * sq / _GMM_STDS**2) / (2.0 * np.pi * _GMM_STDS**2)
    return dens @ _GMM_WEIGHTS


def rescaled_branin(x) -> np.ndarray:
    # unit-square inputs are mapped onto the classic [-5, 10] x [0, 15] domain
    u = 15.0 * x[..., 0] - 5.0
    v = 15.0 * x[..., 1]
    core = (v - 5.1 * u**2 / (4.0 * np.pi**2) + 5.0 * u / np.pi - 6.0) ** 2
    return (core + (10.0 - 10.0 / (8.0 * np.pi)) * np.cos(u) - 44.81) / 51.95


def _branin_gmm(x):
    return np.stack([rescaled_branin(x), gmm_density(x)], axis=-1)


def vlmop2() -> Problem:
    return Problem(
        "vlmop2",
        DesignSpace([-2.0, -2.0], [2.0, 2.0]),
        2,
        _vlmop2,
        StudentT(200.0, [0.0, 0.0], [0.01, 0.01]),
        np.array([0.0166, 0.0166]),
        "C.1",
    )


def sinlinforrester() -> Problem:
    return Problem(
        "sinlinforrester",
        DesignSpace([0.0], [1.0]),
        2,
        _sinlin_forrester,
        Gaussian([0.0], [0.05]),
        np.array([0.098]),
        "C.2",
    )


def mdtp2() -> Problem:
    return Problem(
        "mdtp2",
        DesignSpace([0.0, -1.0], [1.0, 1.0]),
        2,
        _mdtp2,
        TruncatedNormal([0.0, 0.0], [0.02, 0.04], [-0.05, -0.05], [0.05, 0.05]),
        np.array([0.05, 0.05]),
        "C.3",
    )


def mdtp3() -> Problem:
    return Problem(
        "mdtp3",
        DesignSpace([0.0, 0.0], [1.0, 1.0]),
        2,
        _mdtp3,
        Uniform([-0.02, -0.1], [0.02, 0.1]),
        np.array([0.02, 0.1]),
        "C.4",
    )


def braningmm() -> Problem:
    return Problem(
        "braningmm",
        DesignSpace([0.0, 0.0], [1.0, 1.0]),
        2,
        _branin_gmm,
        Uniform([-0.2, -0.2], [0.2, 0.2]),
        np.array([0.02, 0.02]),
        "C.4",
    )


PROBLEMS: dict[str, Callable[[], Problem]] = {
    "vlmop2": vlmop2,
    "sinlinforrester": sinlinforrester,
    "mdtp2": mdtp2,
    "mdtp3": mdtp3,
    "braningmm": braningmm,
}


def get_problem(name: str) -> Problem:
    try:
        return PROBLEMS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
