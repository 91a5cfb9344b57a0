"""Brute-force reference solvers, independent of the task oracles.

Exponential time; meant for graphs with a handful of nodes.
"""
from __future__ import annotations

import itertools

INF = float("inf")


def triangles_by_triples(n, edges):
    es = {frozenset(e) for e in edges}
    return sum(
        1
        for a, b, c in itertools.combinations(range(n), 3)
        if {frozenset((a, b)), frozenset((b, c)), frozenset((a, c))} <= es
    )


def on_cycle_exhaustive(n, edges, v):
    """Search every simple path starting at v for a return edge to v."""
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)

    def extend(p):
        last = p[-1]
        if len(p) >= 3 and v in adj[last]:
            return True
        return any(extend(p + [w]) for w in adj[last] if w not in p)

    return extend([v])


def floyd_warshall(n, edges):
    d = [[0 if i == j else INF for j in range(n)] for i in range(n)]
    for a, b in edges:
        d[a][b] = d[b][a] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return d


def min_edge_cut(n, edges, s, t):
    """Fewest edges separating s from t, by enumerating every s-side node set."""
    others = [v for v in range(n) if v not in (s, t)]
    best = len(edges)
    for r in range(len(others) + 1):
        for extra in itertools.combinations(others, r):
            side = {s, *extra}
            best = min(best, sum(1 for a, b in edges if (a in side) != (b in side)))
    return best


def union_find_connected(n, edges, s, t):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return find(s) == find(t)
