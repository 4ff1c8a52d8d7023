"""Synthetic scenes with exact ground truth.

gen_scene builds a seeded rectangular room with non-overlapping furniture
boxes, a door and a window cut coplanar into walls, and a directional light
(stored in the layout's lighting block). render_gt ray-casts the scene per
pixel: it shares the triangle soup with the rasterizer but resolves
visibility with an entirely different algorithm, which makes it the
reference renderer for conditioning rasters.

Shading: color = albedo * (0.3 + 0.7 * intensity * max(0, n . L)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon

from scenesynth import parallel, rng as rng_mod
from scenesynth import palette as palette_mod
from scenesynth.camera import CameraView, PlacementError, Trajectory, gen_trajectory, ray_grid
from scenesynth.geometry import TriangleSoup, layout_triangles
from scenesynth.layout import ArchQuad, RoomPolygon, SceneLayout, SemanticBox, box_footprint
from scenesynth.raster import NEAR_CLIP, DEPTH_TIE_EPS, SCM, ViewMaps, depth_to_scm

__all__ = [
    "gen_scene",
    "render_gt",
    "default_views",
    "surface_samples",
    "DIFFICULTIES",
]

DIFFICULTIES = ("empty", "sparse", "cluttered")
_BOX_COUNTS = {"empty": (0, 0), "sparse": (3, 5), "cluttered": (8, 15)}


def gen_scene(
    seed: int,
    difficulty: str = "sparse",
    room_size: Optional[float] = None,
) -> SceneLayout:
    """Seeded single-room scene; all boxes pass filter_objects unchanged."""
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"difficulty must be one of {DIFFICULTIES}")
    gen = rng_mod.substream(seed, 1)
    if room_size is not None:
        w = l = float(room_size)
    else:
        w = float(gen.uniform(3.0, 6.0))
        l = float(gen.uniform(3.0, 6.0))
    ceiling = float(gen.uniform(2.4, 3.0))
    room = RoomPolygon(
        vertices=np.array([[0.0, 0.0], [w, 0.0], [w, l], [0.0, l]]),
        floor_z=0.0,
        ceiling_z=ceiling,
    )

    lo, hi = _BOX_COUNTS[difficulty]
    n_boxes = 0 if hi == 0 else int(gen.integers(lo, hi + 1))
    boxes: List[SemanticBox] = []
    placed: List[Polygon] = []
    room_poly = Polygon(room.vertices).buffer(-0.05)
    object_ids = list(palette_mod.default_palette().object_ids)
    for bi in range(n_boxes):
        for attempt in range(500):
            # Shrink sizes as attempts grow so dense rooms stay placeable.
            shrink = 1.0 - 0.5 * min(attempt / 200.0, 1.0)
            size = gen.uniform(0.15, 0.15 + (1.7 - 0.15) * shrink, size=3)
            yaw = float(gen.uniform(-math.pi, math.pi))
            half_diag = math.hypot(size[0], size[1]) / 2.0
            cx = float(gen.uniform(half_diag + 0.1, w - half_diag - 0.1)) if w > 2 * (half_diag + 0.1) else None
            cy = float(gen.uniform(half_diag + 0.1, l - half_diag - 0.1)) if l > 2 * (half_diag + 0.1) else None
            if cx is None or cy is None:
                continue
            box = SemanticBox(
                id=bi,
                center=np.array([cx, cy, size[2] / 2.0]),
                size=np.asarray(size, dtype=np.float64),
                yaw=yaw,
                category=int(gen.choice(object_ids)),
            )
            fp = Polygon(box_footprint(box))
            if not room_poly.contains(fp):
                continue
            if any(fp.distance(other) < 0.02 for other in placed):
                continue
            boxes.append(box)
            placed.append(fp)
            break
        else:
            raise PlacementError(f"could not place box {bi} in {w:.1f}x{l:.1f} room")

    arch: List[ArchQuad] = []
    walls = [  # (corner a, corner b) in wall order, CCW
        (np.array([0.0, 0.0]), np.array([w, 0.0])),
        (np.array([w, 0.0]), np.array([w, l])),
        (np.array([w, l]), np.array([0.0, l])),
        (np.array([0.0, l]), np.array([0.0, 0.0])),
    ]
    door_wall = int(gen.integers(0, 4))
    window_wall = int((door_wall + 1 + gen.integers(0, 3)) % 4)

    def wall_quad(wi: int, width_m: float, z0: float, z1: float) -> Optional[ArchQuad]:
        a, b = walls[wi]
        edge = b - a
        length = float(np.linalg.norm(edge))
        if length < width_m + 0.4:
            return None
        t0 = float(gen.uniform(0.2, length - width_m - 0.2)) / length
        t1 = t0 + width_m / length
        p0 = a + t0 * edge
        p1 = a + t1 * edge
        corners = np.array(
            [
                [p0[0], p0[1], z0],
                [p1[0], p1[1], z0],
                [p1[0], p1[1], z1],
                [p0[0], p0[1], z1],
            ]
        )
        return corners

    q = wall_quad(door_wall, 0.9, 0.0, 2.0)
    if q is not None:
        arch.append(ArchQuad(kind="door", corners=q))
    q = wall_quad(window_wall, 1.2, 0.9, min(1.9, ceiling - 0.3))
    if q is not None:
        arch.append(ArchQuad(kind="window", corners=q))

    light = gen.normal(size=3)
    light[2] = abs(light[2]) + 0.5  # keep it overhead-ish
    light /= np.linalg.norm(light)
    lighting = {"direction": [float(v) for v in light], "intensity": 1.0}

    return SceneLayout(
        rooms=[room],
        boxes=boxes,
        arch=arch,
        room_type="synthetic",
        lighting=lighting,
    )


def render_gt(
    layout: SceneLayout,
    view: CameraView,
    palette: Optional[palette_mod.CategoryPalette] = None,
    soup: Optional[TriangleSoup] = None,
) -> ViewMaps:
    """Per-pixel ray-cast reference render: color, semantic, depth, SCM."""
    if layout.lighting is None:
        raise ValueError("layout has no lighting block; ground truth needs one")
    palette = palette or palette_mod.default_palette()
    soup = soup if soup is not None else layout_triangles(layout)
    light = np.asarray(layout.lighting["direction"], dtype=np.float64)
    light = light / np.linalg.norm(light)
    intensity = float(layout.lighting.get("intensity", 1.0))
    albedo = palette.albedo()

    h, w = view.height, view.width
    t_count = len(soup)
    cam_v = (soup.vertices.reshape(-1, 3) - view.center) @ view.pose.rotation
    cam_v = cam_v.reshape(t_count, 3, 3)
    v0 = cam_v[:, 0]
    e1 = cam_v[:, 1] - v0
    e2 = cam_v[:, 2] - v0
    q_pre = np.cross(-v0, e1)  # s x e1 with ray origin at 0
    e2q = np.einsum("td,td->t", e2, q_pre)
    shade = 0.3 + 0.7 * intensity * np.maximum(0.0, soup.normal @ light)
    tri_color = albedo[soup.category] * shade[:, None]

    rays = ray_grid(view).reshape(-1, 3)  # camera frame, z = 1
    color = np.zeros((h * w, 3))
    semantic = np.full(h * w, palette_mod.VOID_ID, dtype=np.int32)
    depth = np.zeros(h * w)

    prio64 = soup.priority.astype(np.int64)
    key_base = prio64 * (t_count + 1) + (t_count - 1 - np.arange(t_count, dtype=np.int64))

    def _rows(lo: int, hi: int):
        for c0 in range(lo * w, hi * w, 4 * w):
            c1 = min(c0 + 4 * w, hi * w)
            r = rays[c0:c1]  # (p, 3)
            hvec = np.cross(r[:, None, :], e2[None, :, :])  # (p, t, 3)
            a = np.einsum("td,ptd->pt", e1, hvec)
            with np.errstate(divide="ignore", invalid="ignore"):
                f = 1.0 / a
                u = f * np.einsum("td,ptd->pt", -v0, hvec)
                v = f * (r @ q_pre.T)
                t = f * e2q[None, :]
            ok = (
                (np.abs(a) > 1e-12)
                & (u >= 0.0)
                & (v >= 0.0)
                & (u + v <= 1.0)
                & (t > NEAR_CLIP)
                & np.isfinite(t)
            )
            z = np.where(ok, t, np.inf)
            zmin = z.min(axis=1)
            hit = np.isfinite(zmin)
            cand = ok & (z <= zmin[:, None] + DEPTH_TIE_EPS)
            key = np.where(cand, key_base[None, :], -1)
            winner = np.argmax(key, axis=1)
            rows = np.arange(c0, c1)
            semantic[rows[hit]] = soup.category[winner[hit]]
            depth[rows[hit]] = z[np.arange(len(r)), winner][hit]
            color[rows[hit]] = tri_color[winner[hit]]

    parallel.run_blocks(_rows, h)
    color = color.reshape(h, w, 3)
    semantic = semantic.reshape(h, w)
    depth = depth.reshape(h, w)
    scm = depth_to_scm(depth, view)
    return ViewMaps(color=color, semantic=semantic, depth=depth, scm=scm)


def default_views(
    layout: SceneLayout,
    count: int,
    seed: int,
    width: int = 32,
    height: int = 32,
    fov_deg: float = 90.0,
) -> Trajectory:
    """Robust seeded camera placement: try orbit patterns, then random walk."""
    last: Optional[Exception] = None
    for pattern in ("inward_orbit", "outward_orbit", "random_walk"):
        try:
            return gen_trajectory(
                layout, pattern, count, seed, width=width, height=height, fov_deg=fov_deg
            )
        except PlacementError as e:
            last = e
    raise PlacementError(f"no pattern placeable: {last}")


def surface_samples(layout: SceneLayout, n: int, seed: int) -> np.ndarray:
    """Area-weighted uniform samples on the scene's surfaces, (n, 3)."""
    soup = layout_triangles(layout)
    a = soup.vertices[:, 0]
    b = soup.vertices[:, 1]
    c = soup.vertices[:, 2]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    gen = rng_mod.substream(seed, 7)
    pick = gen.choice(len(soup), size=n, p=areas / areas.sum())
    r1 = np.sqrt(gen.uniform(size=n))
    r2 = gen.uniform(size=n)
    return (
        (1.0 - r1)[:, None] * a[pick]
        + (r1 * (1.0 - r2))[:, None] * b[pick]
        + (r1 * r2)[:, None] * c[pick]
    )
