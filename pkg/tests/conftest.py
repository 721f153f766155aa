import numpy as np
import pytest
from hypothesis import strategies as st

from peco.graph import InteractionGraph
from peco.synthetic import toy_t1, toy_t1_clusters


@pytest.fixture
def t1():
    return toy_t1()


@pytest.fixture
def t1_clusters():
    return toy_t1_clusters()


@st.composite
def small_graphs(draw, max_users=12, max_items=12, min_users=1, min_items=1):
    n_users = draw(st.integers(min_users, max_users))
    n_items = draw(st.integers(min_items, max_items))
    rows = draw(st.lists(st.sets(st.integers(0, n_items - 1), max_size=n_items),
                         min_size=n_users, max_size=n_users))
    return InteractionGraph.from_sets([sorted(r) for r in rows], n_items)


def random_graph(rng: np.random.Generator, n_users: int, n_items: int, p: float) -> InteractionGraph:
    mask = rng.random((n_users, n_items)) < p
    u, i = np.nonzero(mask)
    return InteractionGraph.from_edges(u, i, n_users, n_items)


def as_sets(g: InteractionGraph) -> list[set]:
    return [set(g.items_of(u).tolist()) for u in range(g.num_users)]


_criteria: dict[int, tuple[str, str, float, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title, limit = mark.args
    if report.when == "setup" and report.passed:
        return
    outcome = "PASS" if report.passed else "FAIL"
    _criteria[number] = (title, outcome, report.duration, limit)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome, elapsed, limit = _criteria[number]
        terminalreporter.write_line(f"[{outcome}] {number:2d}. {title} ({elapsed:.2f}s, limit {limit:g}s)")
