import itertools

import numpy as np
import pytest
from hypothesis import settings

from plasmode.graph import Graph, NodeTable

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def complete(n):
    return Graph(n, itertools.combinations(range(n), 2))


def path(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n):
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def random_graph(n, p, rng):
    edges = [(i, j) for i, j in itertools.combinations(range(n), 2) if rng.random() < p]
    return Graph(n, edges)


def random_attrs(n, rng, grades=("7", "8", "9")):
    return NodeTable.from_labels(
        {
            "Sex": rng.choice(["F", "M"], n),
            "Grade": rng.choice(list(grades), n),
        },
        levels={"Sex": ("F", "M"), "Grade": grades},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Register (and print) one acceptance-criterion result line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
