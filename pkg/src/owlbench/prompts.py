"""Graph-to-text encoders and prompt assembly for the five encoding variants.

``tlg_a`` and ``tlg_f`` render a node list plus edge tuples (integer ids or
character names). ``l_owl``, ``c_owl`` and ``cl_owl`` render adjacency lists
followed by WL labels, color words, or both.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import yaml

from .colors import DEFAULT_PALETTE, ColorAssignment, Palette, assign_colors
from .graph import Graph, derive_rng
from .refine import ordered_wl
from .tasks import NO_PATH, TaskInstance

VARIANTS = ("tlg_a", "tlg_f", "l_owl", "c_owl", "cl_owl")
WL_VARIANTS = ("l_owl", "cl_owl")
COLOR_VARIANTS = ("c_owl", "cl_owl")

PLACEHOLDERS = (
    "TASK_INSTRUCTION",
    "FEW_SHOT",
    "GRAPH",
    "WL_LABELS",
    "COLORS",
    "NODE_LABELS",
    "TARGET",
    "ANSWER_INSTRUCTION",
)
_PLACEHOLDER = re.compile(r"^\{([A-Z_]+)\}$")


class PromptError(ValueError):
    pass


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise PromptError(f"unknown encoding variant {variant!r}; expected one of {VARIANTS}")
    return variant


@dataclass(frozen=True)
class PromptConfig:
    """Resolved prompt template document (see ``configs/prompts.yaml``)."""

    data: dict

    def __post_init__(self) -> None:
        markers = self.data["markers"]
        if len(set(markers.values())) != len(markers):
            raise PromptError("marker strings must be pairwise distinct")
        for item in self.data["block_order"]:
            m = _PLACEHOLDER.match(item)
            if not m or m.group(1) not in PLACEHOLDERS:
                raise PromptError(f"unknown block placeholder {item!r}; expected one of {PLACEHOLDERS}")
        if "default" not in self.data["system_text"]:
            raise PromptError("system_text needs a 'default' entry")
        if "{ANSWER_FORMAT}" not in self.data["answer_instruction"]:
            raise PromptError("answer_instruction must reference {ANSWER_FORMAT}")

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "PromptConfig":
        base = yaml.safe_load(resources.files("owlbench").joinpath("configs/prompts.yaml").read_text())
        if path is not None:
            with open(path) as f:
                base = _merge(base, yaml.safe_load(f) or {})
        if overrides:
            base = _merge(base, overrides)
        return cls(base)

    def __getitem__(self, key: str) -> Any:
        return self.data[key]

    @property
    def markers(self) -> dict[str, str]:
        return self.data["markers"]

    @property
    def names(self) -> list[str]:
        return list(self.data["tlg"]["names"])

    @property
    def block_order(self) -> list[str]:
        return [_PLACEHOLDER.match(item).group(1) for item in self.data["block_order"]]

    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def palette(self) -> Palette:
        spec = self.data.get("palette")
        if spec is None:
            return DEFAULT_PALETTE
        if isinstance(spec, str):
            return Palette.load(spec)
        return Palette.from_json(spec)


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


_DEFAULT: PromptConfig | None = None


def default_config() -> PromptConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = PromptConfig.load()
    return _DEFAULT


# --------------------------------------------------------------------------
# Encoders
# --------------------------------------------------------------------------

def node_namer(variant: str, n: int, config: PromptConfig):
    if variant != "tlg_f":
        return str
    names = config.names
    if n > len(names):
        raise PromptError(f"tlg_f can name at most {len(names)} nodes, graph has n={n}")
    return lambda v: names[v]


def encode_graph(g: Graph, variant: str, config: PromptConfig | None = None) -> str:
    """Text for the ``<<GRAPH>>`` block, without the marker line."""
    config = config or default_config()
    check_variant(variant)
    if variant in ("tlg_a", "tlg_f"):
        name = node_namer(variant, g.n, config)
        tlg = config["tlg"]
        nodes = ", ".join(name(v) for v in range(g.n))
        edges = ", ".join(f"({name(u)}, {name(v)})" for u, v in g.edges) or tlg["no_edges"]
        return tlg["nodes_line"].format(nodes=nodes) + "\n" + tlg["edges_line"].format(edges=edges)
    end = config["adjacency_terminator"]
    lines = []
    for v in range(g.n):
        nbrs = ", ".join(str(u) for u in g.adj[v]) or config["isolated_token"]
        lines.append(f"{v}: {nbrs}{end}")
    return "\n".join(lines)


def _wrap_items(items: Sequence[str], per_line: int) -> str:
    if not items:
        return ""
    rows = [", ".join(items[i:i + per_line]) for i in range(0, len(items), per_line)]
    return ",\n".join(rows)


def wl_block(labels: Sequence[int], config: PromptConfig | None = None) -> str:
    config = config or default_config()
    body = _wrap_items([f"WL({v}):{x}" for v, x in enumerate(labels)], config["items_per_line"])
    return f"{config.markers['wl_labels']}\n{body}"


def color_block(names: Sequence[str], config: PromptConfig | None = None) -> str:
    config = config or default_config()
    body = _wrap_items([f"Color({v}):{c}" for v, c in enumerate(names)], config["items_per_line"])
    return f"{config.markers['colors']}\n{body}"


def structural_blocks(
    labels: Sequence[int], colors: ColorAssignment, variant: str, config: PromptConfig | None = None
) -> str:
    """WL and/or color blocks as the variant dictates; empty for ``tlg_*``."""
    check_variant(variant)
    if len(labels) != len(colors.names):
        raise PromptError(f"{len(labels)} labels but {len(colors.names)} colors")
    parts = []
    if variant in WL_VARIANTS:
        parts.append(wl_block(labels, config))
    if variant in COLOR_VARIANTS:
        parts.append(color_block(colors.names, config))
    sep = (config or default_config())["block_separator"]
    return sep.join(parts)


def structural_annotations(g: Graph, config: PromptConfig | None = None) -> tuple[tuple[int, ...], ColorAssignment]:
    config = config or default_config()
    t = config["wl_iteration"]
    if g.n == 0:
        return (), ColorAssignment((), ())
    if t is None:
        labels = ordered_wl(g).final
    else:
        labels = ordered_wl(g, max_iters=max(int(t), 1), stop_on_stable=False).labels_at(int(t))
    return labels, assign_colors(labels, config.palette())


def render_answer(value) -> str:
    if value is NO_PATH:
        return "inf"
    if isinstance(value, bool):
        return "Yes" if value else "No"
    return str(value)


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------

def _blocks(inst: TaskInstance, variant: str, config: PromptConfig) -> dict[str, str]:
    """Per-instance blocks: GRAPH, WL_LABELS, COLORS, NODE_LABELS, TARGET."""
    markers = config.markers
    name = node_namer(variant, inst.graph.n, config)
    out = {"GRAPH": f"{markers['graph']}\n{encode_graph(inst.graph, variant, config)}"}
    out["WL_LABELS"] = out["COLORS"] = ""
    if variant in WL_VARIANTS + COLOR_VARIANTS:
        labels, colors = structural_annotations(inst.graph, config)
        if variant in WL_VARIANTS:
            out["WL_LABELS"] = wl_block(labels, config)
        if variant in COLOR_VARIANTS:
            out["COLORS"] = color_block(colors.names, config)
    out["NODE_LABELS"] = ""
    if inst.kind == "node_classification":
        shown = inst.meta["node_labels"]
        items = [f"Label({name(v)}):{c}" for v, c in enumerate(shown) if c is not None]
        body = _wrap_items(items, config["items_per_line"])
        classes = ", ".join(inst.meta.get("label_set", []))
        out["NODE_LABELS"] = f"{markers['node_labels']}\n{body}" + (f"\nClasses: {classes}" if classes else "")
    if inst.query.node is not None:
        out["TARGET"] = f"{markers['target_node']} {name(inst.query.node)}"
    elif inst.query.pair is not None:
        s, t = inst.query.pair
        out["TARGET"] = f"{markers['target_pair']} {name(s)},{name(t)}"
    else:
        out["TARGET"] = ""
    return out


@dataclass(frozen=True)
class FewShotExample:
    instance: TaskInstance
    rendered: str


def render_example(inst: TaskInstance, variant: str, config: PromptConfig, index: int = 1) -> str:
    blocks = _blocks(inst, variant, config)
    parts = [config["few_shot_item_header"].format(i=index)]
    parts += [blocks[k] for k in ("GRAPH", "WL_LABELS", "COLORS", "NODE_LABELS", "TARGET") if blocks[k]]
    return "\n".join(parts) + f"\n{config.markers['answer']} {render_answer(inst.truth)}"


def build_few_shot(
    pool: Sequence[TaskInstance],
    k: int,
    exclude: str | None,
    seed: int,
    variant: str = "cl_owl",
    config: PromptConfig | None = None,
) -> list[FewShotExample]:
    """Sample ``k`` worked examples from ``pool`` (never the instance ``exclude``)."""
    config = config or default_config()
    candidates = sorted((p for p in pool if p.id != exclude), key=lambda p: p.id)
    if k < 0:
        raise PromptError("few-shot count must be non-negative")
    if k == 0:
        return []
    if len(candidates) < k:
        raise PromptError(f"few-shot pool has {len(candidates)} usable instances, need {k}")
    rng = derive_rng(seed, zlib.crc32((exclude or "").encode()))
    picks = sorted(int(i) for i in rng.choice(len(candidates), size=k, replace=False))
    return [
        FewShotExample(candidates[i], render_example(candidates[i], variant, config, j + 1))
        for j, i in enumerate(picks)
    ]


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    variant: str
    instance_id: str
    config_hash: str
    marker_index: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.instance_id,
            "variant": self.variant,
            "system": self.system_text,
            "user": self.user_text,
            "config_hash": self.config_hash,
        }

    def block(self, name: str) -> str:
        start, end = self.marker_index[name]
        return self.user_text.encode()[start:end].decode()


def task_instruction(kind: str, variant: str, config: PromptConfig) -> str:
    tasks = config["tasks"]
    notes = config["variant_notes"]
    if kind not in tasks or variant not in notes:
        raise PromptError(f"no prompt template for task {kind!r} under variant {variant!r}")
    return "\n".join([tasks[kind]["instruction"], *notes[variant]])


def assemble_prompt(
    instance: TaskInstance,
    variant: str,
    config: PromptConfig | None = None,
    few_shot: Sequence[FewShotExample] = (),
) -> PromptBundle:
    """Concatenate the configured blocks into system and user messages.

    ``marker_index`` maps each non-empty block name to its byte span in
    ``user_text``.
    """
    config = config or default_config()
    check_variant(variant)
    if any(ex.instance.id == instance.id for ex in few_shot):
        raise PromptError(f"few-shot examples include the evaluated instance {instance.id}")
    blocks = _blocks(instance, variant, config)
    blocks["TASK_INSTRUCTION"] = task_instruction(instance.kind, variant, config)
    blocks["FEW_SHOT"] = ""
    if few_shot:
        blocks["FEW_SHOT"] = "\n\n".join([config["few_shot_header"], *(ex.rendered for ex in few_shot)])
    answer_format = config["tasks"][instance.kind]["answer_format"]
    blocks["ANSWER_INSTRUCTION"] = config["answer_instruction"].replace("{ANSWER_FORMAT}", answer_format)

    sep = config["block_separator"]
    pieces: list[str] = []
    index: dict[str, tuple[int, int]] = {}
    offset = 0
    for name in config.block_order:
        text = blocks[name]
        if not text:
            continue
        if pieces:
            pieces.append(sep)
            offset += len(sep.encode())
        size = len(text.encode())
        index[name] = (offset, offset + size)
        pieces.append(text)
        offset += size
    system = config["system_text"].get(variant, config["system_text"]["default"])
    return PromptBundle(system, "".join(pieces), variant, instance.id, config.hash, index)
