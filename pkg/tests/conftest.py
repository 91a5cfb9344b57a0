from __future__ import annotations

import itertools

import pytest
from hypothesis import strategies as st

from owlbench.graph import Graph, new_graph

# adjacency lists printed in the max-flow / shortest-path prompt figures
FIGURE_MAXFLOW_ADJ = {
    0: [1, 2, 3, 4, 5, 6, 8],
    1: [0, 5, 6, 7, 8, 9],
    2: [0, 5],
    3: [0, 5, 7, 8, 9],
    4: [0, 6, 7],
    5: [0, 1, 2, 3, 6, 7, 8],
    6: [0, 1, 4, 5, 9],
    7: [1, 3, 4, 5],
    8: [0, 1, 3, 5, 9],
    9: [1, 3, 6, 8],
}

# adjacency lists printed in the cycle-check prompt figure
FIGURE_CYCLE_ADJ = {
    0: [1, 2, 3, 4, 5, 6, 7, 8, 9],
    1: [0, 7, 8, 9],
    2: [0, 7],
    3: [0, 8, 9],
    4: [0, 7],
    5: [0, 7, 8, 9],
    6: [0, 7, 8],
    7: [0, 1, 2, 4, 5, 6, 8, 9],
    8: [0, 1, 3, 5, 6, 7, 9],
    9: [0, 1, 3, 5, 7, 8],
}

FIGURE_MAXFLOW_GRAPH_BLOCK = """<<GRAPH>>
0: 1, 2, 3, 4, 5, 6, 8.
1: 0, 5, 6, 7, 8, 9.
2: 0, 5.
3: 0, 5, 7, 8, 9.
4: 0, 6, 7.
5: 0, 1, 2, 3, 6, 7, 8.
6: 0, 1, 4, 5, 9.
7: 1, 3, 4, 5.
8: 0, 1, 3, 5, 9.
9: 1, 3, 6, 8."""


def from_adjacency(adj: dict[int, list[int]]) -> Graph:
    return new_graph(len(adj), [(u, v) for u, nbrs in adj.items() for v in nbrs])


def path(n: int) -> Graph:
    return new_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n: int) -> Graph:
    return new_graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete(n: int) -> Graph:
    return new_graph(n, itertools.combinations(range(n), 2))


def star(leaves: int) -> Graph:
    return new_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@pytest.fixture
def maxflow_figure_graph() -> Graph:
    return from_adjacency(FIGURE_MAXFLOW_ADJ)


@pytest.fixture
def cycle_figure_graph() -> Graph:
    return from_adjacency(FIGURE_CYCLE_ADJ)


@st.composite
def graphs(draw, min_n: int = 0, max_n: int = 10) -> Graph:
    n = draw(st.integers(min_n, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return new_graph(n, [e for e, k in zip(pairs, keep) if k])


@st.composite
def trees(draw, min_n: int = 1, max_n: int = 15) -> Graph:
    n = draw(st.integers(min_n, max_n))
    parents = [draw(st.integers(0, v - 1)) for v in range(1, n)]
    return new_graph(n, [(p, v) for v, p in enumerate(parents, start=1)])


@st.composite
def graphs_with_perm(draw, max_n: int = 10) -> tuple[Graph, list[int]]:
    g = draw(graphs(max_n=max_n))
    perm = draw(st.permutations(list(range(g.n))))
    return g, list(perm)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
