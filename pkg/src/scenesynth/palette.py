"""Category palette: 62 object categories plus reserved structural ids.

Ids are stable across the package: 0..5 are reserved for {void, wall, door,
window, floor, ceiling}, object categories occupy 6..67. Everything fits in a
uint8 so semantic maps serialize as 8-bit indexed PNGs with this palette.

The default object list follows the common ADE20K indoor subset; a custom
palette can be loaded from JSON (same id layout rules are enforced).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

__all__ = [
    "CategoryPalette",
    "default_palette",
    "load_palette",
    "save_palette",
    "VOID_ID",
    "WALL_ID",
    "DOOR_ID",
    "WINDOW_ID",
    "FLOOR_ID",
    "CEILING_ID",
]

VOID_ID = 0
WALL_ID = 1
DOOR_ID = 2
WINDOW_ID = 3
FLOOR_ID = 4
CEILING_ID = 5

RESERVED: List[Tuple[str, Tuple[int, int, int]]] = [
    ("void", (0, 0, 0)),
    ("wall", (120, 120, 120)),
    ("door", (8, 255, 51)),
    ("window", (230, 230, 230)),
    ("floor", (80, 50, 50)),
    ("ceiling", (120, 120, 80)),
]

# 62 object categories (ADE20K-style indoor labels and colors).
DEFAULT_OBJECTS: List[Tuple[str, Tuple[int, int, int]]] = [
    ("bed", (204, 5, 255)),
    ("nightstand", (146, 111, 194)),
    ("wardrobe", (7, 255, 255)),
    ("chest of drawers", (6, 51, 255)),
    ("sofa", (11, 102, 255)),
    ("coffee table", (0, 255, 112)),
    ("cabinet", (224, 5, 255)),
    ("swivel chair", (10, 0, 255)),
    ("desk", (10, 255, 71)),
    ("crt screen", (122, 0, 255)),
    ("traffic light", (41, 0, 255)),
    ("screen door", (0, 173, 255)),
    ("painting", (255, 6, 51)),
    ("curtain", (255, 51, 7)),
    ("rug", (255, 9, 92)),
    ("mirror", (220, 220, 220)),
    ("column", (255, 8, 41)),
    ("counter", (255, 112, 0)),
    ("bench", (194, 255, 0)),
    ("stool", (0, 214, 255)),
    ("shelf", (255, 7, 71)),
    ("exhaust hood", (0, 153, 255)),
    ("street lamp", (0, 71, 255)),
    ("chandelier", (0, 31, 255)),
    ("sconce", (0, 41, 255)),
    ("shower", (0, 133, 255)),
    ("toilet", (0, 255, 133)),
    ("sink", (0, 163, 255)),
    ("tub", (102, 8, 255)),
    ("refrigerator", (20, 255, 0)),
    ("armchair", (8, 255, 214)),
    ("dishwasher", (214, 255, 0)),
    ("stairs", (255, 224, 0)),
    ("kitchen island", (0, 255, 41)),
    ("person", (150, 5, 61)),
    ("plant", (204, 255, 4)),
    ("pedestal", (255, 122, 8)),
    ("fireplace", (250, 10, 15)),
    ("tv", (0, 255, 194)),
    ("computer", (0, 255, 173)),
    ("stove", (51, 255, 0)),
    ("seat", (7, 255, 224)),
    ("cushion", (255, 194, 7)),
    ("toy", (255, 0, 31)),
    ("radiator", (255, 214, 0)),
    ("fan", (0, 245, 255)),
    ("signboard", (255, 5, 153)),
    ("building", (180, 120, 120)),
    ("clock", (102, 255, 0)),
    ("bannister", (0, 122, 255)),
    ("basket", (92, 255, 0)),
    ("dirt track", (0, 10, 255)),
    ("trash can", (173, 0, 255)),
    ("countertop", (0, 143, 255)),
    ("book", (255, 163, 0)),
    ("fence", (255, 184, 6)),
    ("bulletin board", (184, 255, 0)),
    ("table", (255, 6, 82)),
    ("lamp", (224, 255, 8)),
    ("pillow", (0, 234, 255)),
    ("vase", (0, 255, 20)),
    ("other", (100, 85, 144)),
]

N_OBJECT_CATEGORIES = 62
N_RESERVED = len(RESERVED)


@dataclass(frozen=True)
class CategoryPalette:
    """Immutable id -> (name, rgb) table.

    names[i] / colors[i] describe category id i; ids 0..5 are the reserved
    structural categories in fixed order, object ids start at 6.
    """

    names: Tuple[str, ...]
    colors: Tuple[Tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.names) != len(self.colors):
            raise ValueError("palette names/colors length mismatch")
        if len(self.names) != N_RESERVED + N_OBJECT_CATEGORIES:
            raise ValueError(
                f"palette must define {N_RESERVED + N_OBJECT_CATEGORIES} ids, got {len(self.names)}"
            )
        for i, (name, _) in enumerate(RESERVED):
            if self.names[i] != name:
                raise ValueError(f"palette id {i} must be reserved '{name}', got '{self.names[i]}'")
        if len(set(self.names)) != len(self.names):
            raise ValueError("palette names must be unique")
        for rgb in self.colors:
            if len(rgb) != 3 or any(not (0 <= v <= 255) for v in rgb):
                raise ValueError(f"bad palette color {rgb}")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def object_ids(self) -> range:
        return range(N_RESERVED, len(self.names))

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown category '{name}'") from None

    def color_array(self) -> np.ndarray:
        """(n, 3) uint8 color table."""
        return np.asarray(self.colors, dtype=np.uint8)

    def albedo(self) -> np.ndarray:
        """(n, 3) float64 colors in [0, 1] (shading albedo)."""
        return self.color_array().astype(np.float64) / 255.0

    def is_object(self, cat_id: int) -> bool:
        return N_RESERVED <= cat_id < len(self.names)


def default_palette() -> CategoryPalette:
    entries = RESERVED + DEFAULT_OBJECTS
    return CategoryPalette(
        names=tuple(n for n, _ in entries),
        colors=tuple(tuple(c) for _, c in entries),
    )


def save_palette(palette: CategoryPalette, path: str) -> None:
    doc = {
        "version": 1,
        "categories": [
            {"id": i, "name": n, "color": list(c)}
            for i, (n, c) in enumerate(zip(palette.names, palette.colors))
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def load_palette(path: str) -> CategoryPalette:
    with open(path) as f:
        doc = json.load(f)
    cats = sorted(doc["categories"], key=lambda c: c["id"])
    ids = [c["id"] for c in cats]
    if ids != list(range(len(ids))):
        raise ValueError("palette ids must be contiguous from 0")
    return CategoryPalette(
        names=tuple(c["name"] for c in cats),
        colors=tuple(tuple(c["color"]) for c in cats),
    )
