import numpy as np
import pytest

from oblique_observer.fem import RectDomain, assemble, build_grid

SQUARE = RectDomain((1.0, 1.0))


@pytest.fixture(scope="session")
def square():
    return SQUARE


@pytest.fixture(scope="session")
def space17():
    return assemble(build_grid(SQUARE, 17, "neumann"), 0.1)


@pytest.fixture(scope="session")
def space33():
    return assemble(build_grid(SQUARE, 33, "neumann"), 0.1)


@pytest.fixture(scope="session")
def space17_dirichlet():
    return assemble(build_grid(SQUARE, 17, "dirichlet"), 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting: one line per criterion in the terminal summary ----------

_RESULTS: dict = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    n = mark.args[0]
    ok = call.excinfo is None
    details = [v for k, v in item.user_properties if k == "detail"]
    entry = _RESULTS.setdefault(n, {"ok": True, "parts": []})
    entry["ok"] &= ok
    entry["parts"].append(f"{item.name.removeprefix('test_')}={'ok' if ok else 'FAIL'}"
                          + (f" ({'; '.join(details)})" if details else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if e['ok'] else 'FAIL'}  " + ", ".join(e["parts"]))
