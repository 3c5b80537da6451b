import numpy as np
import pytest

from ginidrift import GroupSpec, SyntheticSpec, generate_portfolio, kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture(scope="session")
def two_group_spec():
    return SyntheticSpec((GroupSpec("low", 0.5, 0.05, (35, 45)),
                          GroupSpec("high", 0.5, 0.15, (25, 35))), 20_000, seed=2024)


@pytest.fixture(scope="session")
def portfolio(two_group_spec):
    return generate_portfolio(two_group_spec, provenance="holdout-synthetic")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """Record the verdict of an acceptance criterion for the summary."""
    log = request.config.stash[_CRITERIA]

    def record(number, ok, detail):
        log[number] = ("SKIP" if ok is None else "PASS" if ok else "FAIL", detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(_CRITERIA, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        verdict, detail = log[number]
        terminalreporter.write_line(f"{verdict} criterion {number}: {detail}")
