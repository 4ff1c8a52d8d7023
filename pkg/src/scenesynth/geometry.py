"""Layout -> triangle soup shared by the rasterizer and the ray-cast renderer.

Both renderers must see byte-identical geometry; what differs between them is
the visibility algorithm. Each triangle carries a palette category, a
tie-break priority (door > window > object > structural) and a unit normal
oriented for shading: room shells point inward (floor up, ceiling down, walls
toward the interior), box faces point outward, arch quads follow the wall
they cut into.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from scenesynth import palette as palette_mod
from scenesynth.layout import ArchQuad, SceneLayout, SemanticBox, box_corners

__all__ = ["TriangleSoup", "layout_triangles", "triangulate_polygon", "PRIORITY"]

# Tie-break priority for coplanar surfaces (higher wins at equal depth).
PRIORITY = {"door": 3, "window": 2, "object": 1, "structural": 0}


@dataclass
class TriangleSoup:
    vertices: np.ndarray  # (T, 3, 3) float64
    category: np.ndarray  # (T,) int32 palette ids
    priority: np.ndarray  # (T,) int32
    normal: np.ndarray  # (T, 3) float64 unit, shading orientation

    def __len__(self) -> int:
        return len(self.vertices)


def triangulate_polygon(vertices: np.ndarray) -> np.ndarray:
    """Ear-clip a simple CCW polygon; returns (m, 3) vertex indices."""
    n = len(vertices)
    if n < 3:
        raise ValueError("polygon needs >= 3 vertices")
    idx = list(range(n))
    tris: List[Tuple[int, int, int]] = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def point_in_tri(p, a, b, c):
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return d1 >= -1e-12 and d2 >= -1e-12 and d3 >= -1e-12

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("polygon triangulation failed (not simple?)")
        clipped = False
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = vertices[i0], vertices[i1], vertices[i2]
            if cross(a, b, c) <= 1e-12:
                continue  # reflex or collinear corner
            if any(
                point_in_tri(vertices[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            # Degenerate leftovers (collinear runs): drop a collinear corner.
            for k in range(len(idx)):
                i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
                if abs(cross(vertices[i0], vertices[i1], vertices[i2])) <= 1e-12:
                    idx.pop(k)
                    clipped = True
                    break
            if not clipped:
                raise ValueError("polygon triangulation failed (not simple?)")
    tris.append((idx[0], idx[1], idx[2]))
    return np.asarray(tris, dtype=np.int64)


def _quad_tris(corners: np.ndarray, want_normal: np.ndarray) -> List[np.ndarray]:
    """Split a planar quad (4, 3) into 2 triangles wound to match want_normal."""
    c = corners
    out = []
    for tri in (np.stack([c[0], c[1], c[2]]), np.stack([c[0], c[2], c[3]])):
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        if np.dot(n, want_normal) < 0:
            tri = tri[::-1].copy()
        out.append(tri)
    return out


def _tri_normal(tri: np.ndarray) -> np.ndarray:
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValueError("degenerate triangle")
    return n / norm


def layout_triangles(layout: SceneLayout) -> TriangleSoup:
    tris: List[np.ndarray] = []
    cats: List[int] = []
    prios: List[int] = []
    normals: List[np.ndarray] = []

    def emit(tri: np.ndarray, cat: int, prio: int, normal=None):
        tris.append(np.asarray(tri, dtype=np.float64))
        cats.append(cat)
        prios.append(prio)
        normals.append(_tri_normal(tri) if normal is None else normal)

    for room in layout.rooms:
        verts = room.vertices
        n = len(verts)
        faces = triangulate_polygon(verts)
        floor3 = np.column_stack([verts, np.full(n, room.floor_z)])
        ceil3 = np.column_stack([verts, np.full(n, room.ceiling_z)])
        up = np.array([0.0, 0.0, 1.0])
        for f in faces:
            emit(floor3[f], palette_mod.FLOOR_ID, PRIORITY["structural"], up)
            emit(ceil3[f][::-1], palette_mod.CEILING_ID, PRIORITY["structural"], -up)
        for i in range(n):
            a2, b2 = verts[i], verts[(i + 1) % n]
            edge = b2 - a2
            inward = np.array([-edge[1], edge[0], 0.0])  # interior is left of a CCW edge
            inward /= np.linalg.norm(inward)
            quad = np.array(
                [
                    [a2[0], a2[1], room.floor_z],
                    [b2[0], b2[1], room.floor_z],
                    [b2[0], b2[1], room.ceiling_z],
                    [a2[0], a2[1], room.ceiling_z],
                ]
            )
            for tri in _quad_tris(quad, inward):
                emit(tri, palette_mod.WALL_ID, PRIORITY["structural"], inward)

    for box in layout.boxes:
        c = box_corners(box)
        # faces as corner index quads; outward directions derived per face
        center = np.asarray(box.center, dtype=np.float64)
        faces = [
            (0, 1, 2, 3),  # bottom
            (4, 5, 6, 7),  # top
            (0, 1, 5, 4),
            (1, 2, 6, 5),
            (2, 3, 7, 6),
            (3, 0, 4, 7),
        ]
        for quad_idx in faces:
            quad = c[list(quad_idx)]
            outward = quad.mean(axis=0) - center
            for tri in _quad_tris(quad, outward):
                emit(tri, box.category, PRIORITY["object"])

    for quad in layout.arch:
        cat = {"wall": palette_mod.WALL_ID, "door": palette_mod.DOOR_ID, "window": palette_mod.WINDOW_ID}[quad.kind]
        prio = PRIORITY["door"] if quad.kind == "door" else (
            PRIORITY["window"] if quad.kind == "window" else PRIORITY["structural"]
        )
        n = quad.normal()
        for tri in _quad_tris(quad.corners, n):
            emit(tri, cat, prio, n)

    return TriangleSoup(
        vertices=np.stack(tris),
        category=np.asarray(cats, dtype=np.int32),
        priority=np.asarray(prios, dtype=np.int32),
        normal=np.stack(normals),
    )
