"""Graph tasks, exact solvers, and task-instance sampling."""
from __future__ import annotations

import enum
import json
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .graph import UNREACHABLE, Graph, bfs_distances, derive_rng, diameter

TASK_KINDS = (
    "triangle_count",
    "cycle_check",
    "reachability",
    "shortest_path",
    "max_flow",
    "node_classification",
)
ALGORITHMIC_TASKS = TASK_KINDS[:5]

NODE_TASKS = ("cycle_check", "node_classification")
PAIR_TASKS = ("reachability", "shortest_path", "max_flow")
BOOLEAN_TASKS = ("cycle_check", "reachability")
NUMERIC_TASKS = ("triangle_count", "shortest_path", "max_flow")

#: Source-target distance ranges used for long-range slicing; ``None`` is open-ended.
DISTANCE_BINS: tuple[tuple[int, int | None], ...] = ((10, 15), (16, 25), (26, 40), (41, None))

RETRY_BUDGET = 1000


class TaskError(ValueError):
    pass


class ConstraintError(TaskError):
    """Sampling constraints could not be met within the retry budget."""


class _NoPath(enum.Enum):
    NO_PATH = "inf"

    def __repr__(self) -> str:
        return "NO_PATH"


#: Shortest-path answer for a disconnected pair; serialized as ``"inf"``.
NO_PATH = _NoPath.NO_PATH


def check_kind(kind: str) -> str:
    if kind not in TASK_KINDS:
        raise TaskError(f"unknown task {kind!r}; expected one of {TASK_KINDS}")
    return kind


def bin_label(lo: int, hi: int | None) -> str:
    return f"{lo}+" if hi is None else f"{lo}-{hi}"


def distance_bin(d, bins: Sequence[tuple[int, int | None]] = DISTANCE_BINS) -> str | None:
    if d is None or d is UNREACHABLE:
        return None
    for lo, hi in bins:
        if d >= lo and (hi is None or d <= hi):
            return bin_label(lo, hi)
    return None


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------

def _check_node(g: Graph, v: int) -> None:
    if not (0 <= v < g.n):
        raise TaskError(f"node {v} out of range for graph with n={g.n}")


def _check_pair(g: Graph, s: int, t: int) -> None:
    _check_node(g, s)
    _check_node(g, t)
    if s == t:
        raise TaskError(f"query pair needs two distinct nodes, got ({s}, {t})")


def count_triangles(g: Graph) -> int:
    adj = [set(a) for a in g.adj]
    total = 0
    for u, v in g.edges:
        # count each triangle once, at its two smallest nodes
        total += sum(1 for w in adj[u] & adj[v] if w > v)
    return total


def biconnected_components(g: Graph) -> list[set[int]]:
    """Vertex sets of the biconnected components (Hopcroft-Tarjan, iterative)."""
    disc = [-1] * g.n
    low = [0] * g.n
    timer = 0
    comps: list[set[int]] = []
    edge_stack: list[tuple[int, int]] = []
    for root in range(g.n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(g.adj[root]))]
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for w in it:
                if disc[w] == -1:
                    edge_stack.append((v, w))
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, v, iter(g.adj[w])))
                    advanced = True
                    break
                if w != parent and disc[w] < disc[v]:
                    edge_stack.append((v, w))
                    low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if parent == -1:
                continue
            low[parent] = min(low[parent], low[v])
            if low[v] >= disc[parent]:
                comp: set[int] = set()
                while True:
                    a, b = edge_stack.pop()
                    comp.update((a, b))
                    if (a, b) == (parent, v):
                        break
                comps.append(comp)
    return comps


def node_on_cycle(g: Graph, v: int) -> bool:
    """True iff ``v`` lies on a simple cycle, i.e. in a biconnected block of 3+ nodes."""
    _check_node(g, v)
    return any(len(c) >= 3 and v in c for c in biconnected_components(g))


def reachable(g: Graph, s: int, t: int) -> bool:
    _check_pair(g, s, t)
    return bfs_distances(g, s)[t] is not UNREACHABLE


def shortest_path_len(g: Graph, s: int, t: int):
    """Hop count from ``s`` to ``t``, or :data:`NO_PATH`."""
    _check_pair(g, s, t)
    d = bfs_distances(g, s)[t]
    return NO_PATH if d is UNREACHABLE else d


def max_flow_unit(g: Graph, s: int, t: int) -> int:
    """Max ``s``-``t`` flow with capacity 1 on every undirected edge (Edmonds-Karp).

    Each edge is a pair of antiparallel unit arcs; residual capacities are
    kept on the net flow so pushing along ``u->v`` frees ``v->u``.
    """
    _check_pair(g, s, t)
    residual: dict[tuple[int, int], int] = {}
    for u, v in g.edges:
        residual[(u, v)] = 1
        residual[(v, u)] = 1
    flow = 0
    while True:
        parent = {s: s}
        queue = deque([s])
        while queue and t not in parent:
            x = queue.popleft()
            for y in g.adj[x]:
                if y not in parent and residual[(x, y)] > 0:
                    parent[y] = x
                    queue.append(y)
        if t not in parent:
            return flow
        y = t
        while y != s:
            x = parent[y]
            residual[(x, y)] -= 1
            residual[(y, x)] += 1
            y = x
        flow += 1


def solve(kind: str, g: Graph, query: "Query", node_labels: Sequence | None = None):
    """Ground truth for ``kind`` on ``(g, query)``."""
    check_kind(kind)
    if kind == "triangle_count":
        return count_triangles(g)
    if kind == "cycle_check":
        return node_on_cycle(g, query.node)
    if kind == "node_classification":
        if node_labels is None:
            raise TaskError("node_classification needs node labels")
        return node_labels[query.node]
    s, t = query.pair
    if kind == "reachability":
        return reachable(g, s, t)
    if kind == "shortest_path":
        return shortest_path_len(g, s, t)
    return max_flow_unit(g, s, t)


# --------------------------------------------------------------------------
# Instances
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    node: int | None = None
    pair: tuple[int, int] | None = None

    def to_json(self) -> dict | None:
        if self.node is not None:
            return {"node": self.node}
        if self.pair is not None:
            return {"pair": list(self.pair)}
        return None

    @classmethod
    def from_json(cls, obj: dict | None) -> "Query":
        if obj is None:
            return cls()
        if "node" in obj:
            return cls(node=int(obj["node"]))
        return cls(pair=(int(obj["pair"][0]), int(obj["pair"][1])))


def answer_to_json(value) -> Any:
    return "inf" if value is NO_PATH else value


def answer_from_json(kind: str, value) -> Any:
    if kind == "shortest_path" and value == "inf":
        return NO_PATH
    return value


def answer_type_ok(kind: str, value) -> bool:
    if kind in BOOLEAN_TASKS:
        return isinstance(value, bool)
    if kind == "node_classification":
        return isinstance(value, str)
    if kind == "shortest_path" and value is NO_PATH:
        return True
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


@dataclass
class TaskInstance:
    id: str
    graph: Graph
    kind: str
    query: Query
    truth: Any
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "task": self.kind,
            "graph": self.graph.to_json(),
            "query": self.query.to_json(),
            "truth": answer_to_json(self.truth),
            "meta": self.meta,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict, validate: bool = True) -> "TaskInstance":
        kind = check_kind(obj["task"])
        inst = cls(
            id=obj["id"],
            graph=Graph.from_json(obj["graph"]),
            kind=kind,
            query=Query.from_json(obj["query"]),
            truth=answer_from_json(kind, obj["truth"]),
            meta=dict(obj.get("meta", {})),
        )
        if validate:
            validate_instance(inst)
        return inst


def validate_instance(inst: TaskInstance) -> None:
    """Recompute the ground truth and stored distance; raise on any mismatch."""
    if not answer_type_ok(inst.kind, inst.truth):
        raise TaskError(f"{inst.id}: truth {inst.truth!r} has the wrong type for {inst.kind}")
    if inst.kind == "node_classification":
        labels = inst.meta.get("node_labels")
        if labels is None or labels[inst.query.node] is not None:
            raise TaskError(f"{inst.id}: node labels missing or target label not withheld")
        return
    expected = solve(inst.kind, inst.graph, inst.query)
    if expected != inst.truth or (expected is NO_PATH) != (inst.truth is NO_PATH):
        raise TaskError(f"{inst.id}: stored truth {inst.truth!r} but oracle gives {expected!r}")
    if inst.query.pair is not None and "distance" in inst.meta:
        d = bfs_distances(inst.graph, inst.query.pair[0])[inst.query.pair[1]]
        d = None if d is UNREACHABLE else d
        if d != inst.meta["distance"]:
            raise TaskError(f"{inst.id}: stored distance {inst.meta['distance']} but BFS gives {d}")


@dataclass(frozen=True)
class Constraints:
    """Restrictions on sampled queries.

    ``distance_bins``: pair distance must fall in a bin; instance ``i`` is
    steered to bin ``i % len(bins)`` so bins fill evenly.
    ``min_diameter``: the graph must be connected with diameter >= this.
    ``require_connected_pair``: pair endpoints must be connected.
    """

    distance_bins: tuple[tuple[int, int | None], ...] | None = None
    min_diameter: int | None = None
    require_connected_pair: bool = False

    @classmethod
    def from_json(cls, obj: dict | None) -> "Constraints":
        if not obj:
            return cls()
        bins = obj.get("distance_bins")
        if bins == "default":
            bins = DISTANCE_BINS
        if bins is not None:
            bins = tuple((int(lo), None if hi is None else int(hi)) for lo, hi in bins)
        return cls(bins, obj.get("min_diameter"), bool(obj.get("require_connected_pair", False)))


def _sample_query(kind: str, g: Graph, rng) -> Query:
    if kind == "triangle_count":
        return Query()
    if kind in NODE_TASKS:
        return Query(node=int(rng.integers(g.n)))
    s, t = (int(x) for x in rng.choice(g.n, size=2, replace=False))
    return Query(pair=(s, t))


def make_instances(
    graphs: Sequence[tuple[Graph, dict]],
    kind: str,
    count: int,
    constraints: Constraints | None = None,
    seed: int = 0,
    id_prefix: str | None = None,
) -> list[TaskInstance]:
    """Sample ``count`` instances of ``kind`` from ``graphs`` with exact ground truth.

    Instance ``i`` first tries graph ``i % len(graphs)``, then random graphs,
    with a uniformly random query per attempt. Graph metadata may carry
    ``node_labels`` (required for node classification).
    """
    check_kind(kind)
    if not graphs:
        raise TaskError("no graphs supplied")
    constraints = constraints or Constraints()
    if kind not in PAIR_TASKS and (constraints.distance_bins or constraints.require_connected_pair):
        raise TaskError(f"pair constraints given for {kind}, which has no node pair")
    prefix = id_prefix or kind
    diam_cache: dict[int, int | None] = {}
    out = []
    for i in range(count):
        rng = derive_rng(seed, i)
        target_bin = None
        if constraints.distance_bins:
            target_bin = constraints.distance_bins[i % len(constraints.distance_bins)]
        failures: Counter = Counter()
        for attempt in range(RETRY_BUDGET):
            gi = i % len(graphs) if attempt == 0 else int(rng.integers(len(graphs)))
            g, gmeta = graphs[gi]
            if g.n < (2 if kind in PAIR_TASKS else 1):
                failures["graph too small"] += 1
                continue
            if gi not in diam_cache:
                diam_cache[gi] = diameter(g)
            if constraints.min_diameter is not None:
                dm = diam_cache[gi]
                if dm is None or dm < constraints.min_diameter:
                    failures[f"min_diameter={constraints.min_diameter}"] += 1
                    continue
            query = _sample_query(kind, g, rng)
            dist = None
            if query.pair is not None:
                d = bfs_distances(g, query.pair[0])[query.pair[1]]
                dist = None if d is UNREACHABLE else d
                if constraints.require_connected_pair and dist is None:
                    failures["require_connected_pair"] += 1
                    continue
                if target_bin is not None and distance_bin(dist, [target_bin]) is None:
                    failures[f"distance_bin={bin_label(*target_bin)}"] += 1
                    continue
            break
        else:
            worst = failures.most_common(1)[0][0] if failures else "unknown"
            raise ConstraintError(
                f"instance {i} of {kind}: constraint {worst} unsatisfiable after {RETRY_BUDGET} attempts"
            )
        meta = {k: v for k, v in gmeta.items() if k != "node_labels"}
        meta["graph_index"] = gi
        meta["n"] = g.n
        meta["diameter"] = diam_cache[gi]
        if query.pair is not None:
            meta["distance"] = dist
            meta["distance_bin"] = distance_bin(dist, constraints.distance_bins or DISTANCE_BINS)
        node_labels = gmeta.get("node_labels")
        if kind == "node_classification":
            if node_labels is None:
                raise TaskError("node_classification needs 'node_labels' in graph metadata")
            truth = str(node_labels[query.node])
            shown = [None if v == query.node else str(x) for v, x in enumerate(node_labels)]
            meta["node_labels"] = shown
            meta["label_set"] = sorted({str(x) for x in node_labels})
        else:
            truth = solve(kind, g, query)
        out.append(TaskInstance(f"{prefix}-{i:05d}", g, kind, query, truth, meta))
    return out


def read_instances(lines: Iterable[str], validate: bool = True) -> list[TaskInstance]:
    return [TaskInstance.from_json(json.loads(line), validate) for line in lines if line.strip()]
