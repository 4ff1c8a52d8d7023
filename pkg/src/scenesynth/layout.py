"""Scene layouts: rooms, oriented semantic boxes, architectural quads.

A layout is the conditioning input of the whole pipeline. Rooms are prism
volumes (simple 2D polygon + floor/ceiling heights, +Z up), objects are
yaw-oriented boxes tagged with a palette category, and arch elements
(wall / door / window) are planar quads, doors and windows coplanar with
the wall they cut into.

JSON schema (version 1):
    {
      "version": 1,
      "room_type": "bedroom",
      "rooms": [{"vertices": [[x, y], ...], "floor_z": 0.0, "ceiling_z": 2.7}],
      "boxes": [{"id": 0, "center": [3], "size": [3], "yaw": 0.0, "category": 9}],
      "arch":  [{"kind": "door", "corners": [[3], [3], [3], [3]]}],
      "lighting": {...}   # optional extension block (synthetic scenes)
    }

Schema violations raise LayoutSchemaError naming the offending field path;
invariant violations raise LayoutInvariantError naming the entity id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from shapely.geometry import Point, Polygon

from scenesynth import palette as palette_mod

__all__ = [
    "LayoutSchemaError",
    "LayoutInvariantError",
    "RoomPolygon",
    "SemanticBox",
    "ArchQuad",
    "SceneLayout",
    "CurationDecision",
    "load_layout",
    "layout_from_dict",
    "layout_to_dict",
    "save_layout",
    "box_corners",
    "box_footprint",
    "normalize_yaw",
    "room_of",
    "filter_objects",
    "curate",
    "MIN_EDGE",
    "MAX_EDGE",
]

ARCH_KINDS = ("wall", "door", "window")
COPLANAR_TOL = 1e-6

# Object retention bounds: boxes with any edge shorter/longer are discarded.
MIN_EDGE = 0.1
MAX_EDGE = 1.8

# Curation thresholds (strict inequalities).
SCENE_MIN_AREA = 20.0
SCENE_MIN_OBJECTS = 35
ROOM_MIN_AREA = 8.0
ROOM_MIN_OBJECTS = 3


class LayoutSchemaError(ValueError):
    """Layout JSON does not match the schema (message carries a field path)."""


class LayoutInvariantError(ValueError):
    """Structurally valid JSON violating a semantic invariant."""


def normalize_yaw(yaw: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((yaw + math.pi) % (2.0 * math.pi) - math.pi)


@dataclass
class RoomPolygon:
    """Simple CCW polygon footprint extruded from floor_z to ceiling_z."""

    vertices: np.ndarray  # (n, 2) float64, CCW
    floor_z: float
    ceiling_z: float

    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def polygon(self) -> Polygon:
        return Polygon(self.vertices)

    def centroid(self) -> np.ndarray:
        c = self.polygon().centroid
        return np.array([c.x, c.y], dtype=np.float64)


@dataclass
class SemanticBox:
    """Oriented object box: yaw is CCW about +Z applied to the size-aligned frame."""

    id: int
    center: np.ndarray  # (3,)
    size: np.ndarray  # (3,) full extents, all > 0
    yaw: float  # normalized to [-pi, pi)
    category: int


@dataclass
class ArchQuad:
    """Planar architectural quad; corners (4, 3), coplanar, consistent winding."""

    kind: str
    corners: np.ndarray  # (4, 3)

    def normal(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[1] - c[0], c[3] - c[0])
        norm = np.linalg.norm(n)
        if norm == 0:
            raise LayoutInvariantError(f"degenerate {self.kind} quad")
        return n / norm


@dataclass
class SceneLayout:
    rooms: List[RoomPolygon]
    boxes: List[SemanticBox]
    arch: List[ArchQuad]
    room_type: str = "unknown"
    lighting: Optional[Dict[str, Any]] = None

    def bounds(self) -> np.ndarray:
        """(2, 3) min/max over room volumes (and boxes, if any poke out)."""
        pts = []
        for r in self.rooms:
            v = r.vertices
            pts.append(np.column_stack([v, np.full(len(v), r.floor_z)]))
            pts.append(np.column_stack([v, np.full(len(v), r.ceiling_z)]))
        for b in self.boxes:
            pts.append(box_corners(b))
        for a in self.arch:
            pts.append(a.corners)
        allp = np.concatenate(pts, axis=0)
        return np.stack([allp.min(axis=0), allp.max(axis=0)])


def box_corners(box: SemanticBox) -> np.ndarray:
    """(8, 3) world corners; bottom face first, CCW seen from above, then top."""
    sx, sy, sz = box.size / 2.0
    local = np.array(
        [
            [-sx, -sy, -sz],
            [+sx, -sy, -sz],
            [+sx, +sy, -sz],
            [-sx, +sy, -sz],
            [-sx, -sy, +sz],
            [+sx, -sy, +sz],
            [+sx, +sy, +sz],
            [-sx, +sy, +sz],
        ],
        dtype=np.float64,
    )
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + np.asarray(box.center, dtype=np.float64)


def box_footprint(box: SemanticBox) -> np.ndarray:
    """(4, 2) footprint corners in the ground plane."""
    return box_corners(box)[:4, :2]


def room_of(layout: SceneLayout, box: SemanticBox) -> Optional[int]:
    """Index of the room whose polygon contains the box footprint centroid.

    Returns None when no room contains it. Containment is strict (a centroid
    exactly on a shared boundary belongs to no room).
    """
    center = Point(float(box.center[0]), float(box.center[1]))
    for i, room in enumerate(layout.rooms):
        if room.polygon().contains(center):
            return i
    return None


# ---------------------------------------------------------------------------
# schema parsing


def _expect(cond: bool, path: str, msg: str):
    if not cond:
        raise LayoutSchemaError(f"{path}: {msg}")


def _float_list(val, path: str, n: int) -> np.ndarray:
    _expect(isinstance(val, (list, tuple)) and len(val) == n, path, f"expected {n} numbers")
    out = np.empty(n, dtype=np.float64)
    for i, v in enumerate(val):
        _expect(isinstance(v, (int, float)) and not isinstance(v, bool), f"{path}[{i}]", "expected a number")
        out[i] = float(v)
    _expect(bool(np.all(np.isfinite(out))), path, "values must be finite")
    return out


def layout_from_dict(doc: Dict[str, Any]) -> SceneLayout:
    _expect(isinstance(doc, dict), "$", "layout must be a JSON object")
    _expect("version" in doc, "version", "missing")
    _expect(doc["version"] == 1, "version", f"unsupported version {doc['version']!r}")

    rooms_doc = doc.get("rooms")
    _expect(isinstance(rooms_doc, list) and len(rooms_doc) > 0, "rooms", "expected a non-empty list")
    rooms: List[RoomPolygon] = []
    for ri, rd in enumerate(rooms_doc):
        path = f"rooms[{ri}]"
        _expect(isinstance(rd, dict), path, "expected an object")
        verts_doc = rd.get("vertices")
        _expect(isinstance(verts_doc, list) and len(verts_doc) >= 3, f"{path}.vertices", "expected >= 3 vertices")
        verts = np.stack([_float_list(v, f"{path}.vertices[{i}]", 2) for i, v in enumerate(verts_doc)])
        for key in ("floor_z", "ceiling_z"):
            _expect(key in rd and isinstance(rd[key], (int, float)) and not isinstance(rd[key], bool),
                    f"{path}.{key}", "expected a number")
        room = RoomPolygon(vertices=verts, floor_z=float(rd["floor_z"]), ceiling_z=float(rd["ceiling_z"]))
        _validate_room(room, ri)
        rooms.append(room)

    boxes_doc = doc.get("boxes", [])
    _expect(isinstance(boxes_doc, list), "boxes", "expected a list")
    boxes: List[SemanticBox] = []
    for bi, bd in enumerate(boxes_doc):
        path = f"boxes[{bi}]"
        _expect(isinstance(bd, dict), path, "expected an object")
        _expect("id" in bd and isinstance(bd["id"], int) and not isinstance(bd["id"], bool),
                f"{path}.id", "expected an integer")
        center = _float_list(bd.get("center"), f"{path}.center", 3)
        size = _float_list(bd.get("size"), f"{path}.size", 3)
        _expect("yaw" in bd and isinstance(bd["yaw"], (int, float)) and not isinstance(bd["yaw"], bool),
                f"{path}.yaw", "expected a number")
        _expect(math.isfinite(float(bd["yaw"])), f"{path}.yaw", "must be finite")
        _expect("category" in bd and isinstance(bd["category"], int) and not isinstance(bd["category"], bool),
                f"{path}.category", "expected an integer")
        boxes.append(
            SemanticBox(
                id=int(bd["id"]),
                center=center,
                size=size,
                yaw=normalize_yaw(float(bd["yaw"])),
                category=int(bd["category"]),
            )
        )

    arch_doc = doc.get("arch", [])
    _expect(isinstance(arch_doc, list), "arch", "expected a list")
    arch: List[ArchQuad] = []
    for ai, ad in enumerate(arch_doc):
        path = f"arch[{ai}]"
        _expect(isinstance(ad, dict), path, "expected an object")
        _expect(ad.get("kind") in ARCH_KINDS, f"{path}.kind", f"expected one of {ARCH_KINDS}")
        corners_doc = ad.get("corners")
        _expect(isinstance(corners_doc, list) and len(corners_doc) == 4, f"{path}.corners", "expected 4 corners")
        corners = np.stack([_float_list(c, f"{path}.corners[{i}]", 3) for i, c in enumerate(corners_doc)])
        arch.append(ArchQuad(kind=ad["kind"], corners=corners))

    room_type = doc.get("room_type", "unknown")
    _expect(isinstance(room_type, str), "room_type", "expected a string")
    lighting = doc.get("lighting")
    _expect(lighting is None or isinstance(lighting, dict), "lighting", "expected an object")

    layout = SceneLayout(rooms=rooms, boxes=boxes, arch=arch, room_type=room_type, lighting=lighting)
    _validate_layout(layout)
    return layout


def _validate_room(room: RoomPolygon, index: int):
    if room.ceiling_z <= room.floor_z:
        raise LayoutInvariantError(f"room {index}: ceiling_z must exceed floor_z")
    poly = Polygon(room.vertices)
    if not poly.is_valid or poly.area <= 0:
        raise LayoutInvariantError(f"room {index}: polygon must be simple with positive area")
    # Normalize winding to CCW so wall construction is orientation-stable.
    if room.area() < 0:
        room.vertices = room.vertices[::-1].copy()


def _validate_layout(layout: SceneLayout):
    n_cats = palette_mod.N_RESERVED + palette_mod.N_OBJECT_CATEGORIES
    seen_ids = set()
    for box in layout.boxes:
        if box.id in seen_ids:
            raise LayoutInvariantError(f"box id {box.id}: duplicate id")
        seen_ids.add(box.id)
        if not np.all(box.size > 0):
            raise LayoutInvariantError(f"box id {box.id}: size components must be > 0")
        if not (palette_mod.N_RESERVED <= box.category < n_cats):
            raise LayoutInvariantError(
                f"box id {box.id}: category {box.category} is not an object palette id"
            )
        # Exactly-one-room holds for curated layouts; at load we reject only
        # the ambiguous case (filter_objects drops the unassigned case).
        hits = [i for i, room in enumerate(layout.rooms)
                if room.polygon().contains(Point(float(box.center[0]), float(box.center[1])))]
        if len(hits) > 1:
            raise LayoutInvariantError(f"box id {box.id}: centroid lies in {len(hits)} rooms")
    for ai, quad in enumerate(layout.arch):
        n = quad.normal()
        d = (quad.corners - quad.corners[0]) @ n
        if np.max(np.abs(d)) > COPLANAR_TOL:
            raise LayoutInvariantError(f"arch quad {ai} ({quad.kind}): corners not coplanar")


def layout_to_dict(layout: SceneLayout) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "version": 1,
        "room_type": layout.room_type,
        "rooms": [
            {
                "vertices": [[float(x), float(y)] for x, y in r.vertices],
                "floor_z": r.floor_z,
                "ceiling_z": r.ceiling_z,
            }
            for r in layout.rooms
        ],
        "boxes": [
            {
                "id": b.id,
                "center": [float(v) for v in b.center],
                "size": [float(v) for v in b.size],
                "yaw": b.yaw,
                "category": b.category,
            }
            for b in layout.boxes
        ],
        "arch": [
            {"kind": a.kind, "corners": [[float(v) for v in c] for c in a.corners]}
            for a in layout.arch
        ],
    }
    if layout.lighting is not None:
        doc["lighting"] = layout.lighting
    return doc


def load_layout(path: str) -> SceneLayout:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise LayoutSchemaError(f"$: not valid JSON ({e})") from e
    return layout_from_dict(doc)


def save_layout(layout: SceneLayout, path: str) -> None:
    with open(path, "w") as f:
        json.dump(layout_to_dict(layout), f, indent=2)
        f.write("\n")


# ---------------------------------------------------------------------------
# object filtering and dataset curation


def filter_objects(layout: SceneLayout, min_edge: float = MIN_EDGE, max_edge: float = MAX_EDGE) -> SceneLayout:
    """Drop boxes with out-of-range edges or centroids outside every room.

    Retention: all three size components within [min_edge, max_edge] AND the
    footprint centroid strictly inside some room polygon. Order preserved;
    idempotent.
    """
    kept = [
        b
        for b in layout.boxes
        if float(np.min(b.size)) >= min_edge
        and float(np.max(b.size)) <= max_edge
        and room_of(layout, b) is not None
    ]
    return replace(layout, boxes=list(kept))


@dataclass
class CurationDecision:
    accept: bool
    reasons: List[str]
    retained_rooms: List[int]
    total_area: float
    total_objects: int
    room_stats: List[Dict[str, Any]]
    panorama_count: int = 0


def curate(layout: SceneLayout, panorama_count: int = 0) -> CurationDecision:
    """Scene/room curation: strict area and object-count thresholds.

    Scene passes iff total floor area > 20 m^2 AND > 35 objects. Rooms are
    retained individually iff room area > 8 m^2 AND > 3 assigned objects.
    panorama_count is carried into the report but has no threshold.
    """
    areas = [abs(r.area()) for r in layout.rooms]
    total_area = float(sum(areas))
    total_objects = len(layout.boxes)

    per_room_counts = [0] * len(layout.rooms)
    for box in layout.boxes:
        ri = room_of(layout, box)
        if ri is not None:
            per_room_counts[ri] += 1

    reasons: List[str] = []
    if not total_area > SCENE_MIN_AREA:
        reasons.append(f"scene area {total_area:.3f} m^2 not > {SCENE_MIN_AREA} m^2")
    if not total_objects > SCENE_MIN_OBJECTS:
        reasons.append(f"scene objects {total_objects} not > {SCENE_MIN_OBJECTS}")

    retained: List[int] = []
    room_stats: List[Dict[str, Any]] = []
    for ri, (area, count) in enumerate(zip(areas, per_room_counts)):
        ok_area = area > ROOM_MIN_AREA
        ok_count = count > ROOM_MIN_OBJECTS
        room_stats.append(
            {"room": ri, "area": area, "objects": count, "retained": bool(ok_area and ok_count)}
        )
        if ok_area and ok_count:
            retained.append(ri)
        else:
            if not ok_area:
                reasons.append(f"room {ri} area {area:.3f} m^2 not > {ROOM_MIN_AREA} m^2")
            if not ok_count:
                reasons.append(f"room {ri} objects {count} not > {ROOM_MIN_OBJECTS}")

    accept = total_area > SCENE_MIN_AREA and total_objects > SCENE_MIN_OBJECTS
    return CurationDecision(
        accept=accept,
        reasons=reasons,
        retained_rooms=retained,
        total_area=total_area,
        total_objects=total_objects,
        room_stats=room_stats,
        panorama_count=panorama_count,
    )
