import numpy as np
import pytest

from ktn import kernels


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config._criteria = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None and (rep.when == "call" or rep.failed or rep.skipped):
        number, title = mark.args
        detail = dict(item.user_properties).get("detail", "")
        outcome = "PASS" if rep.passed and rep.when == "call" else "FAIL"
        if rep.skipped:
            outcome = "SKIP"
        prev = item.config._criteria.get(number)
        if prev is None or prev[0] == "PASS":
            item.config._criteria[number] = (outcome, title, detail)
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(crit):
        outcome, title, detail = crit[number]
        extra = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {number:>2}: {outcome}  {title}{extra}")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
