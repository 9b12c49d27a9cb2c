import pytest

from helploop.geometry import Pose6DoF
from helploop.scenarios import bundled_corpus
from helploop.state import AgentState, ObjectEntity, SceneState

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    key = (number, item.name)
    if report.failed or report.when == "call":
        _ACCEPTANCE[key] = (title, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    by_number = {}
    for (number, name), (title, verdict) in sorted(_ACCEPTANCE.items()):
        prev = by_number.get(number, (title, "PASS"))
        by_number[number] = (title, "FAIL" if "FAIL" in (prev[1], verdict) else "PASS")
    for number, (title, verdict) in sorted(by_number.items()):
        terminalreporter.write_line(f"criterion {number:>2} {verdict}: {title}")


@pytest.fixture(scope="session")
def corpus():
    return bundled_corpus()


@pytest.fixture(scope="session")
def scenarios(corpus):
    return {s.id: s for s in corpus}


def make_object(id, cls, xyz, geometry=None, rotation=(1.0, 0.0, 0.0, 0.0), **props):
    return ObjectEntity(id, cls, Pose6DoF(tuple(xyz), tuple(rotation)), geometry, dict(props))


def make_state(*objects, base=(0.0, 0.0), heading=0.0, ee=(0.3, 0.0, 0.6), **kwargs):
    agent = AgentState(base=tuple(base), heading=heading, end_effector=Pose6DoF(tuple(ee)))
    return SceneState(objects=tuple(objects), agent=agent, **kwargs).refresh_seen()
