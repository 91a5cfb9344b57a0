"""Hue-path mapping from WL labels to natural-language color words."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .refine import normalize_labels


class PaletteError(ValueError):
    pass


@dataclass(frozen=True)
class Palette:
    """Ordered ``(name, hue)`` anchors; hues in degrees, strictly increasing."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if len(self.entries) < 2:
            raise PaletteError("a palette needs at least two anchors")
        names = [name for name, _ in self.entries]
        hues = [hue for _, hue in self.entries]
        if len(set(names)) != len(names):
            raise PaletteError("palette names must be unique")
        for name in names:
            if not name or name != name.lower() or len(name.split()) > 2 or name != " ".join(name.split()):
                raise PaletteError(f"bad color word {name!r}: use lowercase one- or two-word names")
        if any(b <= a for a, b in zip(hues, hues[1:])):
            raise PaletteError("palette hues must be strictly increasing")

    @property
    def h_min(self) -> float:
        return self.entries[0][1]

    @property
    def h_max(self) -> float:
        return self.entries[-1][1]

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    @classmethod
    def from_json(cls, data: list[dict]) -> "Palette":
        try:
            return cls(tuple((str(d["name"]), float(d["hue"])) for d in data))
        except (KeyError, TypeError) as exc:
            raise PaletteError(f"palette entries must be objects with 'name' and 'hue': {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "Palette":
        with open(path) as f:
            return cls.from_json(json.load(f))

    def to_json(self) -> list[dict]:
        return [{"name": name, "hue": hue} for name, hue in self.entries]


DEFAULT_PALETTE = Palette(
    (
        ("red", 0.0),
        ("crimson", 20.0),
        ("orange", 40.0),
        ("gold", 60.0),
        ("yellow", 80.0),
        ("lime", 100.0),
        ("green", 120.0),
        ("spring green", 140.0),
        ("teal", 160.0),
        ("cyan", 180.0),
    )
)


@dataclass(frozen=True)
class ColorAssignment:
    names: tuple[str, ...]
    hues: tuple[float, ...]


def hue_of(x: float, h_min: float = 0.0, h_max: float = 180.0) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"normalized label {x} outside [0, 1]")
    if not h_min < h_max:
        raise ValueError(f"empty hue interval [{h_min}, {h_max}]")
    return h_min + (h_max - h_min) * x


def hue_to_name(h: float, palette: Palette = DEFAULT_PALETTE) -> str:
    """Name of the nearest anchor; an exact tie goes to the lower anchor."""
    if not palette.h_min <= h <= palette.h_max:
        raise ValueError(f"hue {h} outside palette range [{palette.h_min}, {palette.h_max}]")
    best_name, best_gap = palette.entries[0][0], abs(h - palette.entries[0][1])
    for name, anchor in palette.entries[1:]:
        gap = abs(h - anchor)
        if gap < best_gap:
            best_name, best_gap = name, gap
    return best_name


def assign_colors(labels: Sequence[int], palette: Palette = DEFAULT_PALETTE) -> ColorAssignment:
    hues = tuple(hue_of(x, palette.h_min, palette.h_max) for x in normalize_labels(labels))
    return ColorAssignment(tuple(hue_to_name(h, palette) for h in hues), hues)
