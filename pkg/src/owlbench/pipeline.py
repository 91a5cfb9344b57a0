"""Config-driven staged pipeline: generate, prompt, run, parse, report, verify.

Every stage reads and writes plain files in one output directory and records
sha256 digests of its inputs and outputs in ``manifest.json``. A stage whose
recorded digests still match is skipped.
"""
from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import yaml

from . import __version__, bruteforce
from .gateway import ChatRequest, ResponseCache, RetryPolicy, dispatch, make_backend
from .graph import (
    GRAPH_KINDS,
    Graph,
    GraphGenParams,
    components,
    derive_rng,
    generate,
    induced_subgraph,
    is_connected,
    new_graph,
    random_tree,
)
from .metrics import MAE_NOTE, METRIC_COLUMNS, InstanceResult, aggregate, evaluate
from .prompts import VARIANTS, PromptConfig, PromptError, assemble_prompt, build_few_shot
from .refine import classic_wl_partition, ordered_wl, partition_of, verify_theorem1
from .tasks import (
    ALGORITHMIC_TASKS,
    NO_PATH,
    RETRY_BUDGET,
    TASK_KINDS,
    Constraints,
    Query,
    TaskInstance,
    count_triangles,
    make_instances,
    max_flow_unit,
    node_on_cycle,
    reachable,
    read_instances,
    shortest_path_len,
)

log = logging.getLogger(__name__)

STAGES = ("generate", "prompt", "run", "parse", "report", "verify")
MANIFEST = "manifest.json"
INSTANCES = "instances.jsonl"
PROMPTS = "prompts.jsonl"
RESPONSES = "responses.jsonl"
RESULTS = "results.jsonl"
REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"
VERIFY = "verify.json"
CACHE = "cache.jsonl"

REPORT_DIMS = ("task", "variant", "model", "graph_type", "size", "distance_bin")
DEFAULT_SLICINGS = (
    ("task", "variant"),
    ("task", "variant", "graph_type"),
    ("task", "variant", "size"),
    ("task", "variant", "distance_bin"),
)
LIVE_NOTE = (
    "Live endpoint run: decoding parameters of the reference experiments are unknown, "
    "so numbers are not expected to match published tables exactly."
)


class PipelineError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Real graphs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledGraph:
    """A graph with one class label per node.

    ``original_ids[v]`` is the identifier node ``v`` had in the source files.
    """

    name: str
    graph: Graph
    labels: tuple[str, ...]
    original_ids: tuple[str, ...]
    meta: dict = field(default_factory=dict, compare=False)


def _id_key(token: str):
    try:
        return (0, int(token), token)
    except ValueError:
        return (1, 0, token)


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_real_graph(edges_path: str | Path, labels_path: str | Path, name: str | None = None) -> LabeledGraph:
    """Read a whitespace-separated edge list and a ``node label`` file.

    Node ids are remapped to ``0..n-1`` in numeric (then lexical) order of the
    original ids. Duplicate edges and self-loops are dropped. Every node must
    have exactly one label, and every labeled node must occur in the edges.
    """
    edges_path, labels_path = Path(edges_path), Path(labels_path)
    raw_edges = []
    for lineno, line in _data_lines(edges_path):
        parts = line.split()
        if len(parts) != 2:
            raise PipelineError(f"{edges_path}:{lineno}: malformed edge line {line!r}, expected 'u v'")
        raw_edges.append((parts[0], parts[1]))
    if not raw_edges:
        raise PipelineError(f"{edges_path}: edge file is empty")
    ids = sorted({x for e in raw_edges for x in e}, key=_id_key)
    index = {x: i for i, x in enumerate(ids)}
    edges = {tuple(sorted((index[a], index[b]))) for a, b in raw_edges if a != b}
    g = new_graph(len(ids), sorted(edges))

    labels: dict[str, str] = {}
    for lineno, line in _data_lines(labels_path):
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise PipelineError(f"{labels_path}:{lineno}: malformed label line {line!r}, expected 'node label'")
        node, label = parts[0], parts[1].strip()
        if node not in index:
            raise PipelineError(f"{labels_path}:{lineno}: label for unknown node {node}")
        if labels.get(node, label) != label:
            raise PipelineError(f"{labels_path}:{lineno}: conflicting labels for node {node}")
        labels[node] = label
    missing = [x for x in ids if x not in labels]
    if missing:
        raise PipelineError(f"{labels_path}: no label for node {missing[0]} ({len(missing)} unlabeled)")
    return LabeledGraph(name or edges_path.stem, g, tuple(labels[x] for x in ids), tuple(ids))


def sample_subgraph(lg: LabeledGraph, k: int, seed: int, budget: int = RETRY_BUDGET) -> LabeledGraph:
    """Connected ``k``-node subgraph grown by BFS with shuffled neighbour order.

    The start node is uniform over all nodes; starts inside components that
    are too small are retried up to ``budget`` times.
    """
    g = lg.graph
    if k < 1:
        raise PipelineError(f"subgraph size must be positive, got {k}")
    if not any(len(c) >= k for c in components(g)):
        raise PipelineError(f"{lg.name}: no connected component with {k} nodes (n={g.n})")
    rng = derive_rng(seed)
    for _ in range(budget):
        start = int(rng.integers(g.n))
        seen = {start}
        order = [start]
        queue = deque([start])
        while queue and len(order) < k:
            u = queue.popleft()
            nbrs = sorted(g.adj[u])
            rng.shuffle(nbrs)
            for w in nbrs:
                if w not in seen and len(order) < k:
                    seen.add(w)
                    order.append(w)
                    queue.append(w)
        if len(order) == k:
            nodes = sorted(order)
            sub, mapping = induced_subgraph(g, nodes)
            meta = {"sampler": "randomized_frontier_bfs", "source": lg.name, "start": lg.original_ids[start]}
            return LabeledGraph(
                lg.name,
                sub,
                tuple(lg.labels[v] for v in mapping),
                tuple(lg.original_ids[v] for v in mapping),
                meta,
            )
    raise PipelineError(f"{lg.name}: no {k}-node subgraph found after {budget} attempts")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

_DEFAULTS: dict[str, Any] = {
    "output_dir": "runs/latest",
    "variants": list(VARIANTS),
    "prompts": {"template": None, "few_shot": None},
    "backend": {"kind": "mock_oracle", "model": "mock", "temperature": 0.0, "max_tokens": 1024},
    "retry": {"max_attempts": 5, "initial_delay": 1.0, "factor": 2.0, "jitter": 0.1},
    "parallelism": 4,
    "cache": True,
    "report": {"slicings": [list(s) for s in DEFAULT_SLICINGS]},
    "verify": {
        "trees": 200,
        "tree_max_n": 30,
        "T": [2, 3, 4],
        "alpha_bases": [1.0, 0.5],
        "graphs": 500,
        "graph_max_n": 20,
        "oracle_graphs": 500,
        "oracle_max_n": 8,
    },
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunConfig:
    """Resolved run configuration.

    ``data`` holds the YAML document merged over defaults, with relative file
    references resolved against the config file's directory.
    """

    data: dict
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        d = self.data
        if "seed" not in d or not isinstance(d["seed"], int) or isinstance(d["seed"], bool):
            raise PipelineError("config needs an integer 'seed'")
        for v in d["variants"]:
            if v not in VARIANTS:
                raise PipelineError(f"unknown variant {v!r}; expected one of {VARIANTS}")
        if int(d["parallelism"]) < 1:
            raise PipelineError("parallelism must be at least 1")
        for s in self.sets:
            self._check_set(s)
        for slicing in d["report"]["slicings"]:
            for dim in slicing:
                if dim not in REPORT_DIMS:
                    raise PipelineError(f"unknown report dimension {dim!r}; expected one of {REPORT_DIMS}")
        tpl = d["prompts"].get("template")
        if tpl is not None and not Path(tpl).is_file():
            raise PipelineError(f"prompt template {tpl} does not exist")

    def _check_set(self, s: dict) -> None:
        name = s.get("name")
        if not name:
            raise PipelineError("every dataset set needs a 'name'")
        if "real" in s:
            for key in ("edges", "labels"):
                if not Path(s["real"][key]).is_file():
                    raise PipelineError(f"set {name}: {key} file {s['real'][key]} does not exist")
            if not s.get("sizes"):
                raise PipelineError(f"set {name}: real graph sets need 'sizes'")
        else:
            for spec in s.get("graphs", []):
                if spec.get("kind") not in GRAPH_KINDS:
                    raise PipelineError(f"set {name}: unknown graph kind {spec.get('kind')!r}")
                if not spec.get("sizes"):
                    raise PipelineError(f"set {name}: graph entry {spec['kind']} needs 'sizes'")
            if not s.get("graphs"):
                raise PipelineError(f"set {name}: no graphs declared")
        for t in s.get("tasks", []):
            if t not in TASK_KINDS:
                raise PipelineError(f"set {name}: unknown task {t!r}")

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise PipelineError(f"config file {path} does not exist")
        with open(path, encoding="utf-8") as f:
            doc = yaml.safe_load(f) or {}
        return cls.from_dict(doc, path.parent, overrides)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".", overrides: dict | None = None) -> "RunConfig":
        base_dir = Path(base_dir)
        data = _merge(_DEFAULTS, doc)
        if overrides:
            data = _merge(data, overrides)

        def resolve(p):
            return None if p is None else str((base_dir / p).resolve())

        data["prompts"]["template"] = resolve(data["prompts"].get("template"))
        for s in data.get("dataset", {}).get("sets", []):
            if "real" in s:
                s["real"]["edges"] = resolve(s["real"]["edges"])
                s["real"]["labels"] = resolve(s["real"]["labels"])
        data["output_dir"] = resolve(data["output_dir"])
        return cls(data, base_dir)

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def sets(self) -> list[dict]:
        return self.data.get("dataset", {}).get("sets", [])

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])

    @property
    def variants(self) -> list[str]:
        return list(self.data["variants"])

    @property
    def parallelism(self) -> int:
        return int(self.data["parallelism"])

    def prompt_config(self) -> PromptConfig:
        return PromptConfig.load(self.data["prompts"].get("template"))

    @property
    def hash(self) -> str:
        """sha256 over the resolved document plus referenced file contents.

        The output directory is left out so one config can be run into
        several directories.
        """
        doc = {k: v for k, v in self.data.items() if k != "output_dir"}
        files = {}
        tpl = self.data["prompts"].get("template")
        if tpl:
            files["prompt_template"] = file_digest(tpl)
        for s in self.sets:
            if "real" in s:
                files[s["name"] + ".edges"] = file_digest(s["real"]["edges"])
                files[s["name"] + ".labels"] = file_digest(s["real"]["labels"])
        blob = json.dumps({"config": doc, "files": files}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _write_jsonl(path: Path, records: Sequence[dict]) -> None:
    _write_text(path, "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records))


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@dataclass
class Manifest:
    path: Path
    data: dict

    @classmethod
    def open(cls, out_dir: Path, config: RunConfig, override: bool) -> "Manifest":
        path = out_dir / MANIFEST
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("config_hash") != config.hash:
                if not override:
                    raise PipelineError(
                        f"config hash {config.hash[:12]} differs from manifest {str(data.get('config_hash'))[:12]} "
                        f"in {out_dir}; artifacts are stale (use --stage-override to proceed anyway)"
                    )
                log.warning("config hash changed; continuing because of --stage-override")
                data["config_hash"] = config.hash
                data["overridden"] = True
            return cls(path, data)
        data = {
            "config_hash": config.hash,
            "version": __version__,
            "seed": config.seed,
            "created": _now(),
            "updated": None,
            "stages": {},
        }
        return cls(path, data)

    def save(self) -> None:
        self.data["updated"] = _now()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        _write_text(self.path, json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def up_to_date(self, stage: str, inputs: dict[str, str]) -> bool:
        entry = self.data["stages"].get(stage)
        if not entry or entry.get("config_hash") != self.data["config_hash"] or entry["inputs"] != inputs:
            return False
        out_dir = self.path.parent
        return all((out_dir / name).is_file() and file_digest(out_dir / name) == d for name, d in entry["outputs"].items())

    def record(self, stage: str, inputs: dict[str, str], outputs: Sequence[str], stats: dict) -> None:
        out_dir = self.path.parent
        for other, entry in self.data["stages"].items():
            if other != stage and set(entry["outputs"]) & set(outputs):
                raise PipelineError(f"stage {stage} would overwrite outputs of {other}")
        self.data["stages"][stage] = {
            "config_hash": self.data["config_hash"],
            "inputs": inputs,
            "outputs": {name: file_digest(out_dir / name) for name in outputs},
            "stats": stats,
            "finished": _now(),
        }


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: list[str]
    stats: dict
    exit_code: int = 0


def _graph_pool(config: RunConfig, si: int, s: dict) -> list[tuple[Graph, dict]]:
    pool = []
    for ei, spec in enumerate(s["graphs"]):
        count = int(spec.get("count", 1))
        for zi, n in enumerate(spec["sizes"]):
            for j in range(count):
                gseed = int(derive_rng(config.seed, si, ei, zi, j).integers(2**63))
                params = GraphGenParams(spec["kind"], int(n), float(spec.get("p", 0.0)), int(spec.get("m_attach", 4)), gseed)
                meta = {"set": s["name"], "graph_type": spec["kind"], "gen": params.to_json()}
                pool.append((generate(params), meta))
    return pool


def _real_pool(config: RunConfig, si: int, s: dict) -> list[tuple[Graph, dict]]:
    real = s["real"]
    lg = load_real_graph(real["edges"], real["labels"], s["name"])
    pool = []
    per_size = int(s.get("subgraphs_per_size", 1))
    for zi, k in enumerate(s["sizes"]):
        for j in range(per_size):
            sub_seed = int(derive_rng(config.seed, si, zi, j).integers(2**63))
            sub = sample_subgraph(lg, int(k), sub_seed)
            meta = {"set": s["name"], "graph_type": s["name"], "node_labels": list(sub.labels), **sub.meta}
            pool.append((sub.graph, meta))
    return pool


def stage_generate(config: RunConfig, out_dir: Path) -> dict:
    records = []
    per_task: dict[str, int] = {}
    for si, s in enumerate(config.sets):
        pool = _real_pool(config, si, s) if "real" in s else _graph_pool(config, si, s)
        tasks = s.get("tasks") or (["node_classification"] if "real" in s else list(ALGORITHMIC_TASKS))
        constraints = Constraints.from_json(s.get("constraints"))
        for ti, task in enumerate(tasks):
            count = int(s.get("instances_per_task", 200))
            task_constraints = constraints
            if task not in ("reachability", "shortest_path", "max_flow"):
                # pair-only constraints do not apply to node and whole-graph tasks
                task_constraints = Constraints(None, constraints.min_diameter, False)
            tseed = int(derive_rng(config.seed, si, 1000 + ti).integers(2**63))
            insts = make_instances(pool, task, count, task_constraints, tseed, f"{s['name']}-{task}")
            records.extend(i.to_json() for i in insts)
            per_task[task] = per_task.get(task, 0) + len(insts)
    _write_jsonl(out_dir / INSTANCES, records)
    return {"instances": len(records), "per_task": per_task}


def _load_instances(out_dir: Path) -> list[TaskInstance]:
    with open(out_dir / INSTANCES, encoding="utf-8") as f:
        return read_instances(f, validate=True)


def stage_prompt(config: RunConfig, out_dir: Path) -> dict:
    instances = _load_instances(out_dir)
    pconf = config.prompt_config()
    k = config.data["prompts"].get("few_shot")
    k = int(pconf["few_shot_count"] if k is None else k)
    limit = len(pconf.names)
    pools: dict[tuple, list[TaskInstance]] = {}
    for inst in instances:
        pools.setdefault((inst.meta.get("set"), inst.kind), []).append(inst)

    jobs = []
    skipped = 0
    for inst in instances:
        for variant in config.variants:
            if variant == "tlg_f" and inst.graph.n > limit:
                skipped += 1
                continue
            jobs.append((inst, variant))
    if skipped:
        log.warning("skipped %d tlg_f prompts for graphs with more than %d nodes", skipped, limit)

    def render(job):
        inst, variant = job
        shots = ()
        if k:
            pool = pools[(inst.meta.get("set"), inst.kind)]
            if variant == "tlg_f":
                pool = [p for p in pool if p.graph.n <= limit]
            shots = build_few_shot(pool, k, inst.id, config.seed, variant, pconf)
        bundle = assemble_prompt(inst, variant, pconf, shots)
        return {**bundle.to_json(), "task": inst.kind}

    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        try:
            records = list(pool.map(render, jobs))
        except PromptError as exc:
            raise PipelineError(f"prompt rendering failed: {exc}") from None
    _write_jsonl(out_dir / PROMPTS, records)
    return {"prompts": len(records), "skipped_tlg_f": skipped}


def stage_run(config: RunConfig, out_dir: Path) -> dict:
    prompts = _read_jsonl(out_dir / PROMPTS)
    instances = _load_instances(out_dir)
    profile = config.data["backend"]
    model = str(profile.get("model", profile["kind"]))
    backend = make_backend(profile, instances)
    requests = [
        ChatRequest(
            model,
            (("system", p["system"]), ("user", p["user"])),
            float(profile.get("temperature", 0.0)),
            int(profile.get("max_tokens", 1024)),
            p["id"],
        )
        for p in prompts
    ]
    retry = config.data["retry"]
    policy = RetryPolicy(
        int(retry["max_attempts"]), float(retry["initial_delay"]), float(retry["factor"]), float(retry["jitter"])
    )
    cache = ResponseCache(out_dir / CACHE if config.data["cache"] else None)
    responses, stats = dispatch(requests, backend, cache, policy, config.parallelism)
    records = [
        {
            "id": p["id"],
            "variant": p["variant"],
            "task": p["task"],
            "model": model,
            "backend": r.backend,
            "text": r.text,
            "token_usage": r.token_usage,
        }
        for p, r in zip(prompts, responses)
    ]
    _write_jsonl(out_dir / RESPONSES, records)
    return {"responses": len(records), "cache_hits": stats.hits, "cache_misses": stats.misses,
            "cache_skipped": cache.skipped}


def stage_parse(config: RunConfig, out_dir: Path) -> dict:
    by_id = {i.id: i for i in _load_instances(out_dir)}
    responses = _read_jsonl(out_dir / RESPONSES)
    missing = [r["id"] for r in responses if r["id"] not in by_id]
    if missing:
        raise PipelineError(f"responses reference unknown instances, e.g. {missing[0]}")

    def score(r):
        return evaluate(by_id[r["id"]], r["text"], r["variant"], r["model"]).to_json()

    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        records = list(pool.map(score, responses))
    _write_jsonl(out_dir / RESULTS, records)
    parsed = sum(r["status"] == "parsed" for r in records)
    return {"results": len(records), "parsed": parsed}


def build_report(results: Sequence[InstanceResult], slicings: Sequence[Sequence[str]], live: bool = False) -> tuple[str, str]:
    """CSV with one block of rows per slicing (unused dimension columns left blank) and a text rendering."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slicing", *REPORT_DIMS, *METRIC_COLUMNS])
    tables = []
    for slicing in slicings:
        report = aggregate(results, slicing)
        for row in report.rows:
            keys = dict(zip(slicing, row.keys))
            cells = ["" if keys.get(d) is None else keys[d] for d in REPORT_DIMS]
            w.writerow(["+".join(slicing), *cells, *row.metric_cells()])
        tables.append(f"## by {', '.join(slicing)}\n\n" + report.to_text(note=False))
    notes = [MAE_NOTE] + ([LIVE_NOTE] if live else [])
    return buf.getvalue(), "\n".join(tables) + "\n" + "\n".join(notes) + "\n"


def stage_report(config: RunConfig, out_dir: Path) -> dict:
    results = [InstanceResult.from_json(r) for r in _read_jsonl(out_dir / RESULTS)]
    live = config.data["backend"]["kind"] == "http_chat"
    csv_text, text = build_report(results, config.data["report"]["slicings"], live)
    _write_text(out_dir / REPORT_CSV, csv_text)
    _write_text(out_dir / REPORT_TXT, text)
    return {"rows": csv_text.count("\n") - 1}


def _random_connected(n: int, rng) -> Graph:
    p = float(rng.uniform(0.2, 0.8))
    for _ in range(RETRY_BUDGET):
        g = generate(GraphGenParams("erdos_renyi", n, p), rng)
        if is_connected(g):
            return g
    return new_graph(n, [(i, i + 1) for i in range(n - 1)])


def oracle_mismatches(g: Graph, rng) -> list[str]:
    """Compare every algorithmic oracle with its brute-force counterpart on ``g``."""
    bad = []
    edges = list(g.edges)
    if count_triangles(g) != bruteforce.triangles_by_triples(g.n, edges):
        bad.append("triangle_count")
    v = int(rng.integers(g.n))
    if node_on_cycle(g, v) != bruteforce.on_cycle_exhaustive(g.n, edges, v):
        bad.append(f"cycle_check@{v}")
    if g.n >= 2:
        s, t = (int(x) for x in rng.choice(g.n, size=2, replace=False))
        fw = bruteforce.floyd_warshall(g.n, edges)[s][t]
        sp = shortest_path_len(g, s, t)
        if (sp is NO_PATH) != (fw == bruteforce.INF) or (sp is not NO_PATH and sp != fw):
            bad.append(f"shortest_path@{s},{t}")
        if max_flow_unit(g, s, t) != bruteforce.min_edge_cut(g.n, edges, s, t):
            bad.append(f"max_flow@{s},{t}")
        if reachable(g, s, t) != bruteforce.union_find_connected(g.n, edges, s, t):
            bad.append(f"reachability@{s},{t}")
    return bad


def stage_verify(config: RunConfig, out_dir: Path) -> dict:
    vc = config.data["verify"]
    seed = config.seed
    sections: dict[str, dict] = {}

    # first-round degree consistency and WL partition equivalence on random graphs
    graphs = []
    for i in range(int(vc["graphs"])):
        rng = derive_rng(seed, 1, i)
        n = int(rng.integers(1, int(vc["graph_max_n"]) + 1))
        graphs.append(generate(GraphGenParams("erdos_renyi", n, float(rng.choice([0.2, 0.5]))), rng))
    deg = verify_theorem1(graphs, 1, [])
    sections["degree_consistency"] = {"graphs": len(graphs), "pairs": deg.degree_pairs,
                                      "violations": len(deg.degree_violations), "ok": not deg.degree_violations}
    wl_bad = 0
    for g in graphs:
        trace = ordered_wl(g)
        classic = classic_wl_partition(g, trace.iterations)
        if [partition_of(h) for h in trace.history] != classic:
            wl_bad += 1
    sections["wl_equivalence"] = {"graphs": len(graphs), "violations": wl_bad, "ok": wl_bad == 0}

    # shell dominance on random trees, per depth
    trees = []
    for i in range(int(vc["trees"])):
        rng = derive_rng(seed, 2, i)
        trees.append(random_tree(int(rng.integers(1, int(vc["tree_max_n"]) + 1)), rng))
    for T in vc["T"]:
        alphas = [[float(b) ** k for k in range(int(T) + 1)] for b in vc["alpha_bases"]]
        rep = verify_theorem1(trees, int(T), alphas)
        sections[f"tree_dominance_T{T}"] = {
            "trees": rep.trees,
            "dominating_pairs": rep.dominance_pairs,
            "label_violations": len(rep.label_violations),
            "connectivity_checks": rep.connectivity_checks,
            "connectivity_violations": len(rep.connectivity_violations),
            "first_label_violations": [list(x) for x in rep.label_violations[:5]],
            "ok": not (rep.label_violations or rep.connectivity_violations),
        }

    # oracle equivalence on small connected graphs
    bad = []
    for i in range(int(vc["oracle_graphs"])):
        rng = derive_rng(seed, 3, i)
        g = _random_connected(int(rng.integers(2, int(vc["oracle_max_n"]) + 1)), rng)
        bad.extend(f"graph {i}: {m}" for m in oracle_mismatches(g, rng))
    sections["oracle_equivalence"] = {"graphs": int(vc["oracle_graphs"]), "violations": len(bad),
                                      "examples": bad[:5], "ok": not bad}

    ok = all(s["ok"] for s in sections.values())
    _write_text(out_dir / VERIFY, json.dumps({"ok": ok, "sections": sections}, indent=2, sort_keys=True) + "\n")
    for name, s in sections.items():
        log.info("verify %s: %s", name, "ok" if s["ok"] else "VIOLATED")
    return {"ok": ok, "failed": [k for k, s in sections.items() if not s["ok"]]}


_STAGES: dict[str, tuple[Callable, tuple[str, ...], tuple[str, ...]]] = {
    "generate": (stage_generate, (), (INSTANCES,)),
    "prompt": (stage_prompt, (INSTANCES,), (PROMPTS,)),
    "run": (stage_run, (INSTANCES, PROMPTS), (RESPONSES,)),
    "parse": (stage_parse, (INSTANCES, RESPONSES), (RESULTS,)),
    "report": (stage_report, (RESULTS,), (REPORT_CSV, REPORT_TXT)),
    "verify": (stage_verify, (), (VERIFY,)),
}


def run_stage(stage: str, config: RunConfig, out_dir: str | Path | None = None, override: bool = False) -> StageResult:
    """Run one stage, or skip it when the manifest shows identical inputs and outputs."""
    if stage not in _STAGES:
        raise PipelineError(f"unknown stage {stage!r}; expected one of {STAGES}")
    fn, inputs, outputs = _STAGES[stage]
    out = Path(out_dir) if out_dir is not None else config.output_dir
    for name in inputs:
        if not (out / name).is_file():
            raise PipelineError(f"stage {stage} needs {out / name}; run the upstream stage first")
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest.open(out, config, override)
    digests = {name: file_digest(out / name) for name in inputs}
    if manifest.up_to_date(stage, digests):
        log.info("%s: inputs unchanged, nothing to do", stage)
        stats = manifest.data["stages"][stage]["stats"]
        return StageResult(stage, True, list(outputs), stats, _exit_code(stage, stats))
    log.info("%s: running", stage)
    random.seed(config.seed)  # retry jitter
    stats = fn(config, out)
    manifest.record(stage, digests, outputs, stats)
    manifest.save()
    return StageResult(stage, False, list(outputs), stats, _exit_code(stage, stats))


def _exit_code(stage: str, stats: dict) -> int:
    return 1 if stage == "verify" and not stats.get("ok", False) else 0
