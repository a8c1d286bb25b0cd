import numpy as np
import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, summary): one numbered acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def detail(request):
    """Attach a measured value to the acceptance summary line."""
    return lambda text: request.node.user_properties.append(("detail", text))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, summary = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    if details:
        summary = f"{summary} ({'; '.join(details)})"
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE[number] = ("PASS" if rep.passed else "FAIL", summary)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, summary = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {summary}")
