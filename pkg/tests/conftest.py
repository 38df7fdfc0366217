import numpy as np
import pytest

from rgcf.data import InteractionSet, build_dataset


def random_dataset(rng, m, n, density=0.3, test_fraction=0.0):
    """Random bipartite dataset; every user keeps at least one train item."""
    mask = rng.random((m, n)) < density
    mask[np.arange(m), rng.integers(n, size=m)] = True
    users, items = np.nonzero(mask)
    held = rng.random(users.size) < test_fraction
    # never move a user's only pair
    first = np.r_[True, users[1:] != users[:-1]]
    held &= ~first
    train = InteractionSet(users[~held], items[~held])
    test = InteractionSet(users[held], items[held])
    return build_dataset(train, None, test)


def dense_operator(d, lam):
    """Operator assembled directly from the dense adjacency with numpy."""
    m, n = d.num_users, d.num_items
    a = np.zeros((m + n, m + n))
    for u, i in d.train:
        a[u, m + i] = a[m + i, u] = 1.0
    deg = a.sum(axis=1) + lam
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return inv[:, None] * (a + lam * np.eye(m + n)) * inv[None, :]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: one PASS/FAIL line per criterion at session end
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    number, title = marker.args
    if call.excinfo is None:
        status = "PASS"
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        status = "SKIP"
    else:
        status = "FAIL"
    prev = _CRITERIA.get(number)
    if prev is None or prev[1] == "PASS" or status == "FAIL":
        _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}: {title}")
