"""Robust multi-objective Bayesian optimization under input uncertainty."""

__version__ = "0.1.0"

from .problem import PROBLEMS, DesignSpace, Problem, get_problem  # noqa: E402
from .robust_gp import FixedNoiseSamples, RobustGp, nearest_pd  # noqa: E402
from .driver import RunConfig, RunRecord, run, run_mobo_nonrobust, run_rmobo  # noqa: E402

__all__ = [
    "PROBLEMS",
    "DesignSpace",
    "Problem",
    "get_problem",
    "FixedNoiseSamples",
    "RobustGp",
    "nearest_pd",
    "RunConfig",
    "RunRecord",
    "run",
    "run_rmobo",
    "run_mobo_nonrobust",
]
