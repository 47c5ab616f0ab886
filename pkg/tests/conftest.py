import numpy as np
import pytest

from playa_inundation import data

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _ACCEPTANCE.append(f"[{status}] {marker.args[0]}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def synth_raw():
    return data.synth_generate(50, 10, 7)


@pytest.fixture(scope="session")
def synth_std(synth_raw):
    stats = data.fit_standardizer(synth_raw)
    return data.standardize_dataset(synth_raw, stats)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)
