"""Ordered 1-WL refinement and checks of its label-ordering claims.

Ordered refinement differs from hashed color refinement only in how new
label ids are issued: all distinct node messages ``(own label, sorted
neighbour labels)`` are sorted lexicographically and message ``i`` in that
order becomes label ``i``. Label magnitude therefore carries meaning, e.g.
after the first round a larger degree always means a larger label.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .graph import Graph, GraphError, distance_profile, is_forest, truncated_connectivity

Partition = tuple[tuple[int, ...], ...]


def partition_of(labels: Sequence) -> Partition:
    """Group node ids by label; classes sorted internally and by smallest member."""
    groups: dict = {}
    for v, lab in enumerate(labels):
        groups.setdefault(lab, []).append(v)
    return tuple(sorted(tuple(c) for c in groups.values()))


@dataclass(frozen=True)
class RefinementTrace:
    history: tuple[tuple[int, ...], ...]
    partitions: tuple[Partition, ...]
    stabilized_at: int | None

    @property
    def final(self) -> tuple[int, ...]:
        return self.history[-1]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    def labels_at(self, t: int) -> tuple[int, ...]:
        if not 0 <= t < len(self.history):
            raise IndexError(f"iteration {t} not in trace (0..{self.iterations})")
        return self.history[t]

    def to_json(self) -> dict:
        return {"history": [list(h) for h in self.history], "stabilized_at": self.stabilized_at}


def _refine_once(g: Graph, labels: Sequence[int]) -> tuple[int, ...]:
    messages = [(labels[v], tuple(sorted(labels[u] for u in g.adj[v]))) for v in range(g.n)]
    # tuple comparison is lexicographic with a proper prefix ranking lower,
    # which is exactly the order the degree argument relies on
    ids = {msg: i for i, msg in enumerate(sorted(set(messages)))}
    return tuple(ids[msg] for msg in messages)


def ordered_wl(g: Graph, max_iters: int | None = None, stop_on_stable: bool = True) -> RefinementTrace:
    """Run ordered refinement from the all-ones labeling.

    Stops at the first round whose partition equals the previous one, or
    after ``max_iters`` rounds (default ``max(n, 1)``). With
    ``stop_on_stable=False`` exactly ``max_iters`` rounds are executed, which
    is what per-iteration comparisons need; ``stabilized_at`` is still set to
    the first stable round seen.
    """
    if max_iters is None:
        max_iters = max(g.n, 1)
    if max_iters < 1:
        raise ValueError(f"max_iters must be positive, got {max_iters}")
    labels: tuple[int, ...] = (1,) * g.n
    history = [labels]
    partitions = [partition_of(labels)]
    stabilized_at = None
    for t in range(1, max_iters + 1):
        labels = _refine_once(g, labels)
        history.append(labels)
        partitions.append(partition_of(labels))
        if stabilized_at is None and partitions[-1] == partitions[-2]:
            stabilized_at = t
            if stop_on_stable:
                break
    return RefinementTrace(tuple(history), tuple(partitions), stabilized_at)


def normalize_labels(labels: Sequence[int]) -> list[float]:
    """Rescale to [0, 1] by ``(L - min) / max(1, max - min)``."""
    if len(labels) == 0:
        raise ValueError("cannot normalize an empty label vector")
    lo, hi = min(labels), max(labels)
    r = max(1, hi - lo)
    return [(x - lo) / r for x in labels]


def classic_wl_partition(g: Graph, max_iters: int | None = None) -> list[Partition]:
    """Plain color refinement with ids handed out in order of first appearance.

    Kept deliberately separate from :func:`ordered_wl` (string signatures, no
    sorting of messages) so it can serve as an independent check of the
    partitions the ordered variant produces.
    """
    if max_iters is None:
        max_iters = max(g.n, 1)
    if max_iters < 1:
        raise ValueError(f"max_iters must be positive, got {max_iters}")
    colors = ["*"] * g.n
    out = [partition_of(colors)]
    for _ in range(max_iters):
        sigs = []
        for v in range(g.n):
            counts: dict[str, int] = {}
            for u in g.adj[v]:
                counts[colors[u]] = counts.get(colors[u], 0) + 1
            sigs.append(colors[v] + "|" + ";".join(f"{c}x{k}" for c, k in sorted(counts.items())))
        palette: dict[str, str] = {}
        colors = [palette.setdefault(s, f"c{len(palette)}") for s in sigs]
        out.append(partition_of(colors))
        if out[-1] == out[-2]:
            break
    return out


# --------------------------------------------------------------------------
# Label-ordering properties
# --------------------------------------------------------------------------

@dataclass
class Theorem1Report:
    """Outcome of :func:`verify_theorem1`.

    Violations are recorded as ``(graph index, v, w)`` where ``v`` was
    expected to outrank ``w``; connectivity violations add the weight index.
    """

    T: int
    graphs: int = 0
    trees: int = 0
    degree_pairs: int = 0
    degree_violations: list[tuple[int, int, int]] = field(default_factory=list)
    dominance_pairs: int = 0
    label_violations: list[tuple[int, int, int]] = field(default_factory=list)
    connectivity_checks: int = 0
    connectivity_violations: list[tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.degree_violations or self.label_violations or self.connectivity_violations)

    def summary(self) -> dict:
        return {
            "T": self.T,
            "graphs": self.graphs,
            "trees": self.trees,
            "degree_pairs": self.degree_pairs,
            "degree_violations": len(self.degree_violations),
            "dominance_pairs": self.dominance_pairs,
            "label_violations": len(self.label_violations),
            "connectivity_checks": self.connectivity_checks,
            "connectivity_violations": len(self.connectivity_violations),
            "ok": self.ok,
        }


def shell_dominates(a: Sequence[int], b: Sequence[int]) -> bool:
    """``a[k] >= b[k]`` for all ``k >= 1`` with at least one strict inequality."""
    pairs = list(zip(a[1:], b[1:]))
    return all(x >= y for x, y in pairs) and any(x > y for x, y in pairs)


def verify_theorem1(graphs: Sequence[Graph], T: int, alphas: Sequence[Sequence[float]]) -> Theorem1Report:
    """Check degree consistency, shell-to-label dominance and shell-to-connectivity dominance.

    Degree consistency is checked on every graph with first-round labels.
    The dominance checks only run on forests, where every depth-``T``
    neighbourhood unfolds without collisions, and compare round-``T`` labels.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    for alpha in alphas:
        if len(alpha) != T + 1:
            raise GraphError(f"weight sequence {list(alpha)} needs {T + 1} entries")
        truncated_connectivity([0] * (T + 1), alpha)  # validates monotone + positive
    report = Theorem1Report(T=T)
    for gi, g in enumerate(graphs):
        report.graphs += 1
        trace = ordered_wl(g, max_iters=max(T, 1), stop_on_stable=False)
        first = trace.labels_at(1)
        deg = g.degrees()
        for v in range(g.n):
            for w in range(g.n):
                if deg[v] > deg[w]:
                    report.degree_pairs += 1
                    if not first[v] > first[w]:
                        report.degree_violations.append((gi, v, w))
        if not is_forest(g):
            continue
        report.trees += 1
        at_t = trace.labels_at(T)
        shells = [distance_profile(g, v, T).shells for v in range(g.n)]
        for v in range(g.n):
            for w in range(g.n):
                if v == w or not shell_dominates(shells[v], shells[w]):
                    continue
                report.dominance_pairs += 1
                if not at_t[v] > at_t[w]:
                    report.label_violations.append((gi, v, w))
                for ai, alpha in enumerate(alphas):
                    report.connectivity_checks += 1
                    if not truncated_connectivity(shells[v], alpha) > truncated_connectivity(shells[w], alpha):
                        report.connectivity_violations.append((gi, v, w, ai))
    return report
