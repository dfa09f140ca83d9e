import pytest

from helpers import SyntheticFrames
from vidctx.core import QAItem, VideoRef


@pytest.fixture
def frames():
    return SyntheticFrames()


@pytest.fixture
def item():
    return QAItem(
        VideoRef("vid1", "/nonexistent/vid1", 640),
        "What did the white dog do after he looked up?",
        ("hit cans", "yelow toy", "walking", "get up", "smells the black dog"),
        answer_index=3,
        category="Temporal",
        qid="vid1_q0",
    )


_ACCEPTANCE: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for it in items:
        mark = it.get_closest_marker("criterion")
        if mark:
            it.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    names = [v for k, v in report.user_properties if k == "criterion"]
    if not names:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _ACCEPTANCE.setdefault(names[0], []).append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _ACCEPTANCE.items():
        if "FAIL" in outcomes:
            verdict = "FAIL"
        elif all(o == "SKIP" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"{verdict:4s}  {name}")
