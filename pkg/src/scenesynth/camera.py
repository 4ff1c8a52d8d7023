"""Pinhole cameras, trajectories over layouts, equirectangular crops.

Conventions (used by every module):
    world: right-handed, +Z up
    camera: +x right, +y down, +z forward (camera-to-world pose stored)
    pixels: pixel (u, v) covers the unit square with center (u + 0.5, v + 0.5)
            in continuous image coordinates; depth is camera-frame z, not ray
            length.

Trajectory patterns: forward (collinear, constant heading), inward_orbit
(circle looking at the room centroid), outward_orbit (fixed position, evenly
spaced yaw), random_walk (seeded steps). All generated positions lie inside
the room polygon with a clearance margin from walls and box footprints;
PlacementError is raised when a pattern cannot be placed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Point, Polygon

from scenesynth import rng as rng_mod
from scenesynth.layout import SceneLayout, box_footprint

__all__ = [
    "Intrinsics",
    "Pose",
    "CameraView",
    "PlacementError",
    "intrinsics_from_fov",
    "look_at_rotation",
    "unproject",
    "project",
    "ray_grid",
    "plucker_map",
    "Trajectory",
    "gen_trajectory",
    "save_trajectory",
    "load_trajectory",
    "trajectory_from_dict",
    "trajectory_to_dict",
    "pano_to_persp",
    "DEFAULT_SPACING",
    "DEFAULT_CAMERA_HEIGHT",
    "DEFAULT_FOV_DEG",
    "DEFAULT_CLEARANCE",
]

DEFAULT_SPACING = 0.5
DEFAULT_CAMERA_HEIGHT = 1.2
DEFAULT_FOV_DEG = 90.0
DEFAULT_CLEARANCE = 0.3

TRAJECTORY_PATTERNS = ("forward", "inward_orbit", "outward_orbit", "random_walk")


class PlacementError(RuntimeError):
    """A trajectory pattern could not be placed in the room."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rotation (3, 3) and camera center (3,)."""

    rotation: np.ndarray
    translation: np.ndarray

    def world_to_cam(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.rotation

    def cam_to_world(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class CameraView:
    intrinsics: Intrinsics
    pose: Pose

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @property
    def center(self) -> np.ndarray:
        return self.pose.translation


def intrinsics_from_fov(width: int, height: int, fov_deg: float = DEFAULT_FOV_DEG) -> Intrinsics:
    """Square-pixel intrinsics from a horizontal field of view."""
    f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def look_at_rotation(forward: np.ndarray, up: Sequence[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation looking along `forward` (+y down, +z forward)."""
    z = np.asarray(forward, dtype=np.float64)
    nz = np.linalg.norm(z)
    if nz == 0:
        raise ValueError("forward vector must be nonzero")
    z = z / nz
    upv = np.asarray(up, dtype=np.float64)
    x = np.cross(z, upv)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        # Gaze parallel to up: fall back to a fixed horizontal right vector.
        x = np.cross(z, np.array([1.0, 0.0, 0.0]))
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def unproject(view: CameraView, pixels: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Pixel coords (..., 2) + camera-z depth (...) -> world points (..., 3)."""
    px = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    intr = view.intrinsics
    x = (px[..., 0] + 0.5 - intr.cx) / intr.fx
    y = (px[..., 1] + 0.5 - intr.cy) / intr.fy
    cam = np.stack([x * d, y * d, d], axis=-1)
    return view.pose.cam_to_world(cam)


def project(view: CameraView, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """World points (..., 3) -> (pixel coords (..., 2), camera-z depth (...)).

    Inverse of unproject: project(unproject(p, d)) == (p, d). Points behind
    the camera report nonpositive depth; their pixel coords are meaningless.
    """
    cam = view.pose.world_to_cam(np.asarray(points, dtype=np.float64))
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = view.intrinsics.fx * cam[..., 0] / z + view.intrinsics.cx - 0.5
        v = view.intrinsics.fy * cam[..., 1] / z + view.intrinsics.cy - 0.5
    return np.stack([u, v], axis=-1), z


def ray_grid(view: CameraView) -> np.ndarray:
    """(H, W, 3) camera-frame rays with unit z through every pixel center."""
    intr = view.intrinsics
    u = (np.arange(intr.width, dtype=np.float64) + 0.5 - intr.cx) / intr.fx
    v = (np.arange(intr.height, dtype=np.float64) + 0.5 - intr.cy) / intr.fy
    xx, yy = np.meshgrid(u, v)
    return np.stack([xx, yy, np.ones_like(xx)], axis=-1)


def plucker_map(view: CameraView, stride: int = 1) -> np.ndarray:
    """Per-pixel Plucker ray coordinates (H, W, 6): unit direction d, moment o x d.

    A camera at the world origin has zero moment everywhere. With stride > 1
    rays go through the centers of stride x stride pixel blocks (token grids).
    """
    intr = view.intrinsics
    us = (np.arange(intr.width // stride, dtype=np.float64) * stride + stride / 2.0 - intr.cx) / intr.fx
    vs = (np.arange(intr.height // stride, dtype=np.float64) * stride + stride / 2.0 - intr.cy) / intr.fy
    xx, yy = np.meshgrid(us, vs)
    cam = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    world_dir = cam @ view.pose.rotation.T
    world_dir = world_dir / np.linalg.norm(world_dir, axis=-1, keepdims=True)
    moment = np.cross(np.broadcast_to(view.center, world_dir.shape), world_dir)
    return np.concatenate([world_dir, moment], axis=-1)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    pattern: str
    views: List[CameraView]

    def __len__(self) -> int:
        return len(self.views)


def _clearance_ok(
    poly: Polygon,
    footprints: List[Polygon],
    xy: np.ndarray,
    clearance: float,
) -> bool:
    pt = Point(float(xy[0]), float(xy[1]))
    if not poly.contains(pt):
        return False
    if poly.boundary.distance(pt) < clearance:
        return False
    for fp in footprints:
        if fp.distance(pt) < clearance:
            return False
    return True


def _heading_view(
    position: np.ndarray, heading_xy: np.ndarray, intr: Intrinsics
) -> CameraView:
    fwd = np.array([heading_xy[0], heading_xy[1], 0.0])
    rot = look_at_rotation(fwd)
    return CameraView(intrinsics=intr, pose=Pose(rotation=rot, translation=position.copy()))


def gen_trajectory(
    layout: SceneLayout,
    pattern: str,
    count: int,
    seed: int,
    spacing: float = DEFAULT_SPACING,
    camera_height: float = DEFAULT_CAMERA_HEIGHT,
    fov_deg: float = DEFAULT_FOV_DEG,
    clearance: float = DEFAULT_CLEARANCE,
    width: int = 32,
    height: int = 32,
    room_index: int = 0,
) -> Trajectory:
    """Seed-deterministic camera trajectory inside one room of the layout."""
    if pattern not in TRAJECTORY_PATTERNS:
        raise ValueError(f"unknown trajectory pattern '{pattern}'")
    if count < 1:
        raise ValueError("count must be >= 1")
    room = layout.rooms[room_index]
    z = room.floor_z + camera_height
    if not (room.floor_z < z < room.ceiling_z):
        raise PlacementError(f"camera height {camera_height} outside room vertical extent")
    poly = room.polygon()
    footprints = [Polygon(box_footprint(b)) for b in layout.boxes]
    intr = intrinsics_from_fov(width, height, fov_deg)
    gen = rng_mod.substream(seed, 11)
    centroid = room.centroid()

    def ok(xy: np.ndarray) -> bool:
        return _clearance_ok(poly, footprints, xy, clearance)

    views: List[CameraView] = []

    if pattern == "forward":
        bb = np.asarray(poly.bounds)  # (minx, miny, maxx, maxy)
        base_angle = 0.0 if (bb[2] - bb[0]) >= (bb[3] - bb[1]) else math.pi / 2.0
        span = (count - 1) * spacing
        for attempt in range(400):
            if attempt == 0:
                angle, center = base_angle, centroid
            else:
                angle = float(gen.uniform(0.0, 2.0 * math.pi))
                off = gen.uniform(-0.25, 0.25, size=2) * np.array([bb[2] - bb[0], bb[3] - bb[1]])
                center = centroid + off
            h = np.array([math.cos(angle), math.sin(angle)])
            pts = [center + (i * spacing - span / 2.0) * h for i in range(count)]
            if all(ok(p) for p in pts):
                views = [_heading_view(np.array([p[0], p[1], z]), h, intr) for p in pts]
                break
        else:
            raise PlacementError("forward: no collinear placement satisfies clearance")

    elif pattern == "inward_orbit":
        pt = Point(float(centroid[0]), float(centroid[1]))
        r_max = poly.boundary.distance(pt) - clearance
        if r_max <= 0:
            raise PlacementError("inward_orbit: room too small for clearance")
        phase = float(gen.uniform(0.0, 2.0 * math.pi))
        angles = phase + 2.0 * math.pi * np.arange(count) / count
        placed = False
        for frac in np.linspace(0.95, 0.05, 19):
            r = r_max * float(frac)
            pts = [centroid + r * np.array([math.cos(a), math.sin(a)]) for a in angles]
            if all(ok(p) for p in pts):
                target = np.array([centroid[0], centroid[1], z])
                for p in pts:
                    pos = np.array([p[0], p[1], z])
                    rot = look_at_rotation(target - pos)
                    views.append(CameraView(intrinsics=intr, pose=Pose(rotation=rot, translation=pos)))
                placed = True
                break
        if not placed:
            raise PlacementError("inward_orbit: no radius satisfies clearance")

    elif pattern == "outward_orbit":
        pos_xy = None
        for attempt in range(200):
            cand = centroid if attempt == 0 else centroid + gen.uniform(-0.5, 0.5, size=2)
            if ok(cand):
                pos_xy = cand
                break
        if pos_xy is None:
            raise PlacementError("outward_orbit: no clear pivot position")
        pos = np.array([pos_xy[0], pos_xy[1], z])
        for i in range(count):
            yaw = 2.0 * math.pi * i / count
            h = np.array([math.cos(yaw), math.sin(yaw)])
            views.append(_heading_view(pos, h, intr))

    elif pattern == "random_walk":
        start = None
        bb = np.asarray(poly.bounds)
        for attempt in range(400):
            cand = centroid if attempt == 0 else np.array(
                [gen.uniform(bb[0], bb[2]), gen.uniform(bb[1], bb[3])]
            )
            if ok(cand):
                start = cand
                break
        if start is None:
            raise PlacementError("random_walk: no clear start position")
        cur = start
        heading = float(gen.uniform(0.0, 2.0 * math.pi))
        h = np.array([math.cos(heading), math.sin(heading)])
        views.append(_heading_view(np.array([cur[0], cur[1], z]), h, intr))
        for _ in range(count - 1):
            for attempt in range(200):
                ang = float(gen.uniform(0.0, 2.0 * math.pi))
                step = float(gen.uniform(0.5, 1.0)) * spacing
                nxt = cur + step * np.array([math.cos(ang), math.sin(ang)])
                if ok(nxt):
                    h = (nxt - cur) / np.linalg.norm(nxt - cur)
                    cur = nxt
                    views.append(_heading_view(np.array([cur[0], cur[1], z]), h, intr))
                    break
            else:
                raise PlacementError("random_walk: stuck, no clear step found")

    # Contract check: every generated position is inside with clearance.
    for i, view in enumerate(views):
        if not ok(view.center[:2]):
            raise PlacementError(f"{pattern}: generated view {i} violates clearance")
    return Trajectory(pattern=pattern, views=views)


# ---------------------------------------------------------------------------
# trajectory JSON


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "pattern": traj.pattern,
        "views": [
            {
                "fx": v.intrinsics.fx,
                "fy": v.intrinsics.fy,
                "cx": v.intrinsics.cx,
                "cy": v.intrinsics.cy,
                "width": v.intrinsics.width,
                "height": v.intrinsics.height,
                "rotation": [float(x) for x in v.pose.rotation.reshape(-1)],
                "translation": [float(x) for x in v.pose.translation],
            }
            for v in traj.views
        ],
    }


def trajectory_from_dict(doc: dict) -> Trajectory:
    if not isinstance(doc, dict) or "views" not in doc:
        raise ValueError("trajectory document must contain 'views'")
    views = []
    for i, vd in enumerate(doc["views"]):
        rot = np.asarray(vd["rotation"], dtype=np.float64).reshape(3, 3)
        err = np.max(np.abs(rot @ rot.T - np.eye(3)))
        if err > 1e-6 or np.linalg.det(rot) < 0:
            raise ValueError(f"views[{i}].rotation: not a proper rotation (err {err:.2e})")
        views.append(
            CameraView(
                intrinsics=Intrinsics(
                    fx=float(vd["fx"]),
                    fy=float(vd["fy"]),
                    cx=float(vd["cx"]),
                    cy=float(vd["cy"]),
                    width=int(vd["width"]),
                    height=int(vd["height"]),
                ),
                pose=Pose(rotation=rot, translation=np.asarray(vd["translation"], dtype=np.float64)),
            )
        )
    return Trajectory(pattern=doc.get("pattern", "unknown"), views=views)


def save_trajectory(traj: Trajectory, path: str) -> None:
    with open(path, "w") as f:
        json.dump(trajectory_to_dict(traj), f, indent=2)
        f.write("\n")


def load_trajectory(path: str) -> Trajectory:
    with open(path) as f:
        return trajectory_from_dict(json.load(f))


# ---------------------------------------------------------------------------
# equirectangular -> perspective


def pano_to_persp(
    pano: np.ndarray,
    yaw: float,
    pitch: float,
    fov_deg: float = DEFAULT_FOV_DEG,
    out_size: Tuple[int, int] = (32, 32),
) -> np.ndarray:
    """Perspective crop from an equirectangular panorama.

    Pano frame: +X forward (longitude 0, image center column), +Z up.
    Longitude wraps horizontally; latitude clamps at the poles. Bilinear
    sampling in the incremental a + t*(b - a) form, exact for constant
    images. Pano width must be 2x height.
    """
    pano = np.asarray(pano, dtype=np.float64)
    ph, pw = pano.shape[:2]
    if pw != 2 * ph:
        raise ValueError(f"equirectangular raster must have width = 2 x height, got {pw}x{ph}")
    oh, ow = out_size
    f = (ow / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    u = (np.arange(ow, dtype=np.float64) + 0.5 - ow / 2.0) / f
    v = (np.arange(oh, dtype=np.float64) + 0.5 - oh / 2.0) / f
    xx, yy = np.meshgrid(u, v)
    d_cam = np.stack([xx, yy, np.ones_like(xx)], axis=-1)
    d_cam /= np.linalg.norm(d_cam, axis=-1, keepdims=True)

    # camera frame -> pano frame (z_cam -> +X, x_cam -> -Y, y_cam -> -Z)
    r0 = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    cp, sp = math.cos(pitch), math.sin(pitch)
    r_pitch = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])  # Ry(-pitch)
    cy_, sy_ = math.cos(yaw), math.sin(yaw)
    r_yaw = np.array([[cy_, -sy_, 0.0], [sy_, cy_, 0.0], [0.0, 0.0, 1.0]])
    d = d_cam @ (r_yaw @ r_pitch @ r0).T

    lon = np.arctan2(d[..., 1], d[..., 0])
    lat = np.arcsin(np.clip(d[..., 2], -1.0, 1.0))
    su = (lon + math.pi) / (2.0 * math.pi) * pw - 0.5
    sv = (0.5 - lat / math.pi) * ph - 0.5

    i0 = np.floor(su).astype(np.int64)
    j0 = np.floor(sv).astype(np.int64)
    fu = su - i0
    fv = sv - j0
    i0w = np.mod(i0, pw)
    i1w = np.mod(i0 + 1, pw)
    j0c = np.clip(j0, 0, ph - 1)
    j1c = np.clip(j0 + 1, 0, ph - 1)

    if pano.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    c00 = pano[j0c, i0w]
    c10 = pano[j0c, i1w]
    c01 = pano[j1c, i0w]
    c11 = pano[j1c, i1w]
    top = c00 + fu * (c10 - c00)
    bot = c01 + fu * (c11 - c01)
    return top + fv * (bot - top)
