"""Undirected simple graphs, seeded generators, BFS distance shells, relabeling."""
from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs, generator parameters or node ids."""


class _Unreachable(enum.Enum):
    UNREACHABLE = "unreachable"

    def __repr__(self) -> str:
        return "UNREACHABLE"


#: Distance assigned to nodes outside the source's component.
UNREACHABLE = _Unreachable.UNREACHABLE

GRAPH_KINDS = ("erdos_renyi", "barabasi_albert", "path")


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    ``edges`` is stored canonically: each pair as ``(min, max)``, the tuple
    sorted lexicographically. Build instances through :func:`new_graph`.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def adj(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(x)) for x in nbrs)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adj]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [[u, v] for u, v in self.edges]}

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        return new_graph(obj["n"], [tuple(e) for e in obj["edges"]])


def new_graph(n: int, edges: Iterable[Sequence[int]]) -> Graph:
    if n < 0:
        raise GraphError(f"node count must be non-negative, got {n}")
    canon = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        if u == v:
            raise GraphError(f"self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
        canon.add((u, v) if u < v else (v, u))
    return Graph(n, tuple(sorted(canon)))


def _check_node(g: Graph, v: int, what: str = "node") -> None:
    if not (0 <= v < g.n):
        raise GraphError(f"{what} {v} out of range for graph with n={g.n}")


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------

def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, *keys)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    instance ``i`` of a dataset gets the same numbers no matter how many
    workers generate the dataset or in which order.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GraphGenParams:
    kind: str
    n: int
    p: float = 0.0
    m_attach: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in GRAPH_KINDS:
            raise GraphError(f"unknown graph kind {self.kind!r}; expected one of {GRAPH_KINDS}")
        if self.n < 0:
            raise GraphError(f"node count must be non-negative, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise GraphError(f"edge probability {self.p} outside [0, 1]")
        if self.kind == "barabasi_albert":
            if self.m_attach < 1:
                raise GraphError("m_attach must be at least 1")
            if self.n <= self.m_attach:
                raise GraphError(f"barabasi_albert needs n > m_attach (n={self.n}, m_attach={self.m_attach})")

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "n": self.n, "seed": self.seed}
        if self.kind == "erdos_renyi":
            out["p"] = self.p
        elif self.kind == "barabasi_albert":
            out["m_attach"] = self.m_attach
        return out


def generate(params: GraphGenParams, rng: np.random.Generator | None = None) -> Graph:
    """Sample a graph. Uses ``derive_rng(params.seed)`` unless ``rng`` is given."""
    if rng is None:
        rng = derive_rng(params.seed)
    n = params.n
    if params.kind == "path":
        return new_graph(n, [(i, i + 1) for i in range(n - 1)])
    if params.kind == "erdos_renyi":
        pairs = list(itertools.combinations(range(n), 2))
        keep = rng.random(len(pairs)) < params.p
        return new_graph(n, [e for e, k in zip(pairs, keep) if k])
    return _barabasi_albert(n, params.m_attach, rng)


def _barabasi_albert(n: int, m: int, rng: np.random.Generator) -> Graph:
    # seed clique on nodes 0..m-1, then each arrival picks m distinct
    # targets with probability proportional to current degree
    edges = list(itertools.combinations(range(m), 2))
    # every node appears once per incident edge; a lone seed node (m == 1)
    # has degree 0 and gets one pseudo-entry so it can be chosen at all
    pool: list[int] = [x for e in edges for x in e] or list(range(m))
    for v in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[int(rng.integers(len(pool)))])
        for u in sorted(targets):
            edges.append((u, v))
            pool.extend((u, v))
    return new_graph(n, edges)


def random_tree(n: int, rng: np.random.Generator) -> Graph:
    """Uniform labelled tree on ``n`` nodes, decoded from a random Prüfer sequence."""
    if n < 1:
        raise GraphError("a tree needs at least one node")
    if n <= 2:
        return new_graph(n, [(0, 1)] if n == 2 else [])
    seq = [int(x) for x in rng.integers(n, size=n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    for x in seq:
        leaf = degree.index(1)
        edges.append((leaf, x))
        degree[leaf] -= 1
        degree[x] -= 1
    u, v = (i for i, d in enumerate(degree) if d == 1)
    edges.append((u, v))
    return new_graph(n, edges)


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------

def bfs_distances(g: Graph, source: int) -> list:
    _check_node(g, source, "source")
    dist: list = [UNREACHABLE] * g.n
    dist[source] = 0
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in g.adj[x]:
            if dist[y] is UNREACHABLE:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


@dataclass(frozen=True)
class DistanceProfile:
    source: int
    dist: tuple
    shells: tuple[int, ...]
    eccentricity: int


def distance_profile(g: Graph, source: int, T: int) -> DistanceProfile:
    """BFS distances from ``source`` with shell counts ``|S_k|`` for ``k = 0..T``."""
    if T < 0:
        raise GraphError(f"shell depth must be non-negative, got {T}")
    dist = bfs_distances(g, source)
    shells = [0] * (T + 1)
    ecc = 0
    for d in dist:
        if d is UNREACHABLE:
            continue
        ecc = max(ecc, d)
        if d <= T:
            shells[d] += 1
    return DistanceProfile(source, tuple(dist), tuple(shells), ecc)


def truncated_connectivity(shells: Sequence[int], alpha: Sequence[float]) -> float:
    """Weighted shell sum ``sum_k alpha[k] * shells[k]``.

    ``alpha`` must be positive and nonincreasing and as long as ``shells``.
    """
    if len(alpha) != len(shells):
        raise GraphError(f"need one weight per shell: {len(alpha)} weights for {len(shells)} shells")
    if any(a <= 0 for a in alpha):
        raise GraphError("connectivity weights must be positive")
    if any(a < b for a, b in zip(alpha, alpha[1:])):
        raise GraphError("connectivity weights must be nonincreasing")
    return float(sum(a * s for a, s in zip(alpha, shells)))


def components(g: Graph) -> list[list[int]]:
    seen = [False] * g.n
    out = []
    for s in range(g.n):
        if seen[s]:
            continue
        comp = [s]
        seen[s] = True
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for y in g.adj[x]:
                if not seen[y]:
                    seen[y] = True
                    comp.append(y)
                    queue.append(y)
        out.append(sorted(comp))
    return out


def is_connected(g: Graph) -> bool:
    return g.n <= 1 or len(components(g)) == 1


def is_forest(g: Graph) -> bool:
    return g.m == g.n - len(components(g))


def is_tree(g: Graph) -> bool:
    return g.n >= 1 and is_connected(g) and g.m == g.n - 1


def diameter(g: Graph) -> int | None:
    """Longest shortest path, or ``None`` (undefined) for a disconnected graph."""
    if not is_connected(g):
        return None
    return max((distance_profile(g, v, 0).eccentricity for v in range(g.n)), default=0)


def eccentricities(g: Graph) -> list[int]:
    """Per-node eccentricity inside the node's own component."""
    return [distance_profile(g, v, 0).eccentricity for v in range(g.n)]


# --------------------------------------------------------------------------
# Relabeling
# --------------------------------------------------------------------------

def _check_perm(n: int, perm: Sequence[int]) -> None:
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise GraphError(f"mapping {list(perm)} is not a bijection on 0..{n - 1}")


def permute(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel node ``v`` as ``perm[v]``."""
    _check_perm(g.n, perm)
    return new_graph(g.n, [(perm[u], perm[v]) for u, v in g.edges])


def inverse_permutation(perm: Sequence[int]) -> list[int]:
    _check_perm(len(perm), perm)
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return inv


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> tuple[Graph, list[int]]:
    """Subgraph on ``nodes``; node ``nodes[i]`` becomes ``i``. Returns the graph and the mapping list."""
    index = {v: i for i, v in enumerate(nodes)}
    if len(index) != len(nodes):
        raise GraphError("duplicate node in induced subgraph selection")
    edges = [(index[u], index[v]) for u, v in g.edges if u in index and v in index]
    return new_graph(len(nodes), edges), list(nodes)
