import numpy as np
import pytest

from fastabc.synthetic import make_clusters, make_slabs

_acceptance = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    number, title = marker
    # a criterion may span several tests; any failure marks it failed
    if report.failed:
        _acceptance[number] = (title, "FAIL")
    elif report.when == "call" and _acceptance.get(number, (title, "PASS"))[1] == "PASS":
        _acceptance[number] = (title, "PASS" if report.passed else "SKIP")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report.acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, outcome = _acceptance[number]
        terminalreporter.write_line(f"[{outcome}] criterion {number}: {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def toy60():
    return make_clusters(60, n_classes=3, n_features=4, spread=1.5, seed=3)


@pytest.fixture(scope="session")
def slabs_pair():
    kw = dict(n_classes=3, n_features=4, margin=0.3, direction=(1.0, 0.25))
    return make_slabs(300, seed=1, **kw), make_slabs(300, seed=2, **kw)
