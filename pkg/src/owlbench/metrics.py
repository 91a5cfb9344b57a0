"""Answer parsing, per-instance scoring and stratified reports.

Per-instance error is in [0, 1]: 0/1 for yes/no and class answers, and
``min(1, |pred - truth| / max(truth, 1))`` for numeric answers, with 1 for
anything unparsed. The MAE column is the mean of this error. It is a
reconstruction, because the benchmark being mirrored never defines its MAE.
"""
from __future__ import annotations

import csv
import io
import itertools
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .tasks import (
    BOOLEAN_TASKS,
    DISTANCE_BINS,
    NO_PATH,
    TaskError,
    answer_from_json,
    answer_to_json,
    answer_type_ok,
    bin_label,
    check_kind,
)

ANSWER_MARKER = "<<ANSWER>>"
MAE_NOTE = "MAE: mean per-instance error, 0/1 for yes/no and class answers, min(1, |pred-truth|/max(truth,1)) for numbers, 1 if unparsed (reconstructed definition)"

_STRIP = "*_:.,;!?\"'`()[]{}<>"
_INT = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class ParsedAnswer:
    status: str
    value: Any = None
    raw_tail: str = ""

    @property
    def parsed(self) -> bool:
        return self.status == "parsed"


def _unparsed(tail: str = "") -> ParsedAnswer:
    return ParsedAnswer("unparsed", None, tail)


def parse_answer(text: str | None, kind: str, label_set: Sequence[str] | None = None) -> ParsedAnswer:
    """Read the answer after the last ``<<ANSWER>>`` marker.

    Only the first whitespace-delimited token counts, stripped of surrounding
    markdown and punctuation. Never raises: anything that does not fit the
    task's answer grammar comes back as ``unparsed``.
    """
    if not isinstance(text, str):
        return _unparsed()
    pos = text.rfind(ANSWER_MARKER)
    if pos < 0:
        return _unparsed()
    tail = text[pos + len(ANSWER_MARKER):]
    # a colon or bold markup may sit between marker and answer
    words = tail.lstrip(_STRIP + " \t\r\n").split()
    if not words:
        return _unparsed(tail)
    token = words[0].strip(_STRIP)
    low = token.lower()
    if kind in BOOLEAN_TASKS:
        if low in ("yes", "no"):
            return ParsedAnswer("parsed", low == "yes", tail)
        return _unparsed(tail)
    if kind == "node_classification":
        if not token:
            return _unparsed(tail)
        if label_set is None:
            return ParsedAnswer("parsed", token, tail)
        for label in label_set:
            if label.lower() == low:
                return ParsedAnswer("parsed", label, tail)
        return _unparsed(tail)
    if kind not in ("triangle_count", "shortest_path", "max_flow"):
        return _unparsed(tail)
    if _INT.match(token):
        return ParsedAnswer("parsed", int(token), tail)
    if kind == "shortest_path" and low in ("inf", "infinity"):
        return ParsedAnswer("parsed", NO_PATH, tail)
    return _unparsed(tail)


def score_instance(parsed: ParsedAnswer, truth, kind: str) -> tuple[bool, float]:
    """``(correct, norm_error)`` for one answer."""
    check_kind(kind)
    if not answer_type_ok(kind, truth):
        raise TaskError(f"truth {truth!r} does not match task {kind}")
    if not parsed.parsed:
        return False, 1.0
    pred = parsed.value
    if kind in BOOLEAN_TASKS or kind == "node_classification":
        ok = pred == truth and type(pred) is type(truth)
        return ok, 0.0 if ok else 1.0
    if truth is NO_PATH or pred is NO_PATH:
        ok = pred is truth
        return ok, 0.0 if ok else 1.0
    if pred == truth:
        return True, 0.0
    return False, min(1.0, abs(pred - truth) / max(truth, 1))


@dataclass
class InstanceResult:
    instance_id: str
    task: str
    variant: str
    model: str
    parsed: ParsedAnswer
    truth: Any
    correct: bool
    norm_error: float
    slices: dict = field(default_factory=dict)

    def key(self, dim: str):
        if dim == "task":
            return self.task
        if dim == "variant":
            return self.variant
        if dim == "model":
            return self.model
        return self.slices.get(dim)

    def to_json(self) -> dict:
        return {
            "id": self.instance_id,
            "task": self.task,
            "variant": self.variant,
            "model": self.model,
            "status": self.parsed.status,
            "pred": answer_to_json(self.parsed.value),
            "raw_tail": self.parsed.raw_tail,
            "truth": answer_to_json(self.truth),
            "correct": self.correct,
            "norm_error": self.norm_error,
            "slices": self.slices,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InstanceResult":
        task = obj["task"]
        parsed = ParsedAnswer(obj["status"], answer_from_json(task, obj["pred"]), obj.get("raw_tail", ""))
        return cls(
            obj["id"], task, obj["variant"], obj["model"], parsed,
            answer_from_json(task, obj["truth"]), obj["correct"], obj["norm_error"], dict(obj.get("slices", {})),
        )


def evaluate(instance, text: str, variant: str, model: str) -> InstanceResult:
    """Parse and score one completion against its :class:`TaskInstance`."""
    parsed = parse_answer(text, instance.kind, instance.meta.get("label_set"))
    correct, err = score_instance(parsed, instance.truth, instance.kind)
    slices = {
        "graph_type": instance.meta.get("graph_type"),
        "size": instance.graph.n,
        "distance_bin": instance.meta.get("distance_bin"),
    }
    return InstanceResult(instance.id, instance.kind, variant, model, parsed, instance.truth, correct, err, slices)


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    keys: tuple
    n: int
    accuracy_all: float | None
    accuracy_parsed: float | None
    mae: float | None
    answered_rate: float | None
    f1_macro: float | None

    def metric_cells(self) -> list:
        return [self.n, _fmt(self.accuracy_all, 2), _fmt(self.accuracy_parsed, 2), _fmt(self.mae, 4),
                _fmt(self.answered_rate, 2), _fmt(self.f1_macro, 2)]


METRIC_COLUMNS = ("N", "accuracy_all", "accuracy_parsed", "mae", "answered_rate", "f1_macro")


@dataclass
class Report:
    dims: tuple[str, ...]
    rows: list[ReportRow]

    def row(self, **keys) -> ReportRow:
        want = tuple(keys[d] for d in self.dims)
        for r in self.rows:
            if r.keys == want:
                return r
        raise KeyError(want)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.dims, *METRIC_COLUMNS])
        for r in self.rows:
            w.writerow([*("" if k is None else k for k in r.keys), *r.metric_cells()])
        return buf.getvalue()

    def to_text(self, note: bool = True) -> str:
        header = [*self.dims, "N", "acc(all)", "acc(parsed)", "MAE", "answered", "F1-macro"]
        body = [
            [*("-" if k is None else str(k) for k in r.keys), str(r.n),
             _fmt(r.accuracy_all, 2), _fmt(r.accuracy_parsed, 2), _fmt(r.mae, 3),
             _fmt(r.answered_rate, 1), _fmt(r.f1_macro, 2)]
            for r in self.rows
        ]
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        lines = ["  ".join(x.ljust(w) for x, w in zip(line, widths)).rstrip() for line in [header, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        table = "\n".join(lines) + "\n"
        return table + "\n" + MAE_NOTE + "\n" if note else table


def _fmt(x: float | None, digits: int) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def f1_macro(truths: Sequence, preds: Sequence) -> float:
    """Macro F1 over the classes present in ``truths``; unparsed predictions are ``None``."""
    classes = sorted(set(truths), key=str)
    if not classes:
        raise ValueError("no ground-truth classes")
    scores = []
    for c in classes:
        tp = sum(1 for t, p in zip(truths, preds) if t == c and p == c)
        fp = sum(1 for t, p in zip(truths, preds) if t != c and p == c)
        fn = sum(1 for t, p in zip(truths, preds) if t == c and p != c)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores)


def _sort_key(v):
    return (v is None, type(v).__name__, v if v is not None else 0)


DEFAULT_LEVELS: dict[str, list] = {"distance_bin": [bin_label(lo, hi) for lo, hi in DISTANCE_BINS]}


def aggregate(
    results: Iterable[InstanceResult],
    slicing: Sequence[str] = ("task", "variant"),
    levels: Mapping[str, Sequence] | None = None,
) -> Report:
    """Group results by the ``slicing`` dimensions and compute metrics per group.

    Dimensions listed in ``levels`` always produce rows for the given values,
    even when empty (``N=0`` and null metrics). Distance bins default to the
    four long-range bins.
    """
    results = list(results)
    dims = tuple(slicing)
    fixed = dict(DEFAULT_LEVELS if levels is None else levels)
    groups: dict[tuple, list[InstanceResult]] = {}
    for r in results:
        groups.setdefault(tuple(r.key(d) for d in dims), []).append(r)
    keys = set(groups)
    fixed_idx = [i for i, d in enumerate(dims) if d in fixed]
    if fixed_idx:
        # pad the fixed dimensions, crossed with those observed combinations of
        # the other dimensions that carry a value there (a triangle count has
        # no distance bin, so it gets no empty bin rows)
        free = [i for i, d in enumerate(dims) if d not in fixed]
        combos = {tuple(k[i] for i in free) for k in groups if any(k[i] is not None for i in fixed_idx)}
        if not free:
            combos = {()}
        for combo in combos:
            for fixed_vals in itertools.product(*(list(fixed[dims[i]]) for i in fixed_idx)):
                key, it_free, it_fixed = [], iter(combo), iter(fixed_vals)
                for d in dims:
                    key.append(next(it_fixed) if d in fixed else next(it_free))
                keys.add(tuple(key))
    rows = []
    for key in sorted(keys, key=lambda k: tuple(_sort_key(x) for x in k)):
        rows.append(_row(key, groups.get(key, [])))
    return Report(dims, rows)


def _row(key: tuple, rs: list[InstanceResult]) -> ReportRow:
    n = len(rs)
    if n == 0:
        return ReportRow(key, 0, None, None, None, None, None)
    correct = sum(r.correct for r in rs)
    answered = [r for r in rs if r.parsed.parsed]
    f1 = None
    if all(r.task == "node_classification" for r in rs):
        preds = [r.parsed.value if r.parsed.parsed else None for r in rs]
        f1 = 100.0 * f1_macro([r.truth for r in rs], preds)
    return ReportRow(
        key,
        n,
        100.0 * correct / n,
        100.0 * sum(r.correct for r in answered) / len(answered) if answered else None,
        sum(r.norm_error for r in rs) / n,
        100.0 * len(answered) / n,
        f1,
    )
