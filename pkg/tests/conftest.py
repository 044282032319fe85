import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rmobo.gp import fit_map
from rmobo.problem import get_problem

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def _fit(name, n, seed):
    problem = get_problem(name)
    rng = np.random.default_rng(seed)
    X = problem.space.sample_uniform(n, rng)
    Y = problem.evaluate(X)
    models = [fit_map(X, Y[:, i], problem.space.lower, problem.space.upper, rng=rng) for i in range(2)]
    return problem, X, Y, models


@pytest.fixture(scope="session")
def sinlin_models():
    return _fit("sinlinforrester", 12, 0)


@pytest.fixture(scope="session")
def branin_models():
    return _fit("braningmm", 20, 1)


_CRITERIA: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    line = f"criterion {marker.args[0]:>2}: {status}  {item.name}  {detail}".rstrip()
    _CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
