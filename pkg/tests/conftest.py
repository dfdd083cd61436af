import numpy as np
import pytest

from idaug.sample import LabeledSample

_CRITERIA: dict[str, tuple[int, str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(item.nodeid)
        if prev is None or report.outcome != "passed":
            _CRITERIA[item.nodeid] = (number, title, report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    by_number: dict[int, list] = {}
    for number, title, outcome, duration in _CRITERIA.values():
        by_number.setdefault(number, []).append((title, outcome, duration))
    for number in sorted(by_number):
        rows = by_number[number]
        ok = all(o == "passed" for _, o, _ in rows)
        secs = sum(d for _, _, d in rows)
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {rows[0][0]}  ({secs:.2f}s)"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_sample(sid, image, mask):
    return LabeledSample.from_arrays(sid, np.asarray(image, np.uint8), np.asarray(mask, np.uint8))


@pytest.fixture
def small_sample(rng):
    image = rng.integers(0, 256, size=(40, 50, 3), dtype=np.uint8)
    mask = np.zeros((40, 50), np.uint8)
    mask[10:25, 5:30] = 255
    return make_sample("obj", image, mask)
