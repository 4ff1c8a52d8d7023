"""Layout condition rasterizer and scene-coordinate conversions.

rasterize_layout draws the triangle soup of a layout with a z-buffer and
yields the per-view conditioning rasters (semantic categories + depth).
Coplanar surfaces (a door cut into a wall) resolve by a fixed rule shared
with the ray-cast reference renderer: among triangles within DEPTH_TIE_EPS
of the per-pixel minimum depth, the highest priority wins, then the lowest
triangle index. Depth is camera-frame z evaluated at pixel centers.

Scene coordinate maps (SCM) are world-space positions per pixel; conversion
to and from depth goes through the camera of the view.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from scenesynth import parallel
from scenesynth.camera import CameraView, ray_grid, unproject, project
from scenesynth.geometry import TriangleSoup, layout_triangles
from scenesynth.layout import SceneLayout
from scenesynth.palette import VOID_ID

__all__ = [
    "SCM",
    "ViewMaps",
    "rasterize_layout",
    "rasterize_soup",
    "depth_to_scm",
    "scm_to_depth",
    "DEPTH_TIE_EPS",
    "NEAR_CLIP",
]

DEPTH_TIE_EPS = 1e-5
NEAR_CLIP = 1e-6


@dataclass
class SCM:
    """World-coordinate map (h, w, 3) with a per-pixel validity mask."""

    values: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape[:2]


@dataclass
class ViewMaps:
    """Per-view raster bundle; any field may be absent."""

    color: Optional[np.ndarray] = None  # (h, w, 3) float in [0, 1]
    semantic: Optional[np.ndarray] = None  # (h, w) int32 palette ids
    depth: Optional[np.ndarray] = None  # (h, w) float64, 0 = invalid
    scm: Optional[SCM] = None
    confidence: Optional[np.ndarray] = None  # (h, w) float64
    warp_coverage: Optional[np.ndarray] = None  # (h, w) bool


def _clip_near(tri_cam: np.ndarray, near: float) -> Optional[np.ndarray]:
    """Sutherland-Hodgman clip of a camera-space triangle against z > near."""
    z = tri_cam[:, 2]
    if np.all(z > near):
        return tri_cam
    if np.all(z <= near):
        return None
    out: List[np.ndarray] = []
    n = len(tri_cam)
    for i in range(n):
        a, b = tri_cam[i], tri_cam[(i + 1) % n]
        a_in, b_in = a[2] > near, b[2] > near
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (near - a[2]) / (b[2] - a[2])
            out.append(a + t * (b - a))
    if len(out) < 3:
        return None
    return np.stack(out)


def rasterize_layout(layout: SceneLayout, view: CameraView) -> ViewMaps:
    return rasterize_soup(layout_triangles(layout), view)


def rasterize_soup(soup: TriangleSoup, view: CameraView) -> ViewMaps:
    intr = view.intrinsics
    h, w = intr.height, intr.width
    cam_tris = [(tri - view.center) @ view.pose.rotation for tri in soup.vertices]

    # Per-triangle screen coverage polygons + camera-space plane coefficients.
    polys: List[Optional[Tuple[np.ndarray, np.ndarray, float]]] = []
    for tri_cam in cam_tris:
        clipped = _clip_near(tri_cam, NEAR_CLIP)
        if clipped is None:
            polys.append(None)
            continue
        u = intr.fx * clipped[:, 0] / clipped[:, 2] + intr.cx
        v = intr.fy * clipped[:, 1] / clipped[:, 2] + intr.cy
        pts = np.column_stack([u, v])
        area2 = 0.0
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            area2 += a[0] * b[1] - b[0] * a[1]
        if area2 == 0.0:
            polys.append(None)
            continue
        if area2 < 0:
            pts = pts[::-1].copy()
        n_cam = np.cross(tri_cam[1] - tri_cam[0], tri_cam[2] - tri_cam[0])
        c_plane = float(np.dot(n_cam, tri_cam[0]))
        polys.append((pts, n_cam, c_plane))

    semantic = np.full((h, w), VOID_ID, dtype=np.int32)
    depth = np.zeros((h, w), dtype=np.float64)
    zbuf = np.full((h, w), np.inf)
    prio = np.full((h, w), -1, dtype=np.int64)

    def _coverage(pts: np.ndarray, lo: int, hi: int):
        """Pixel-center coverage of a convex CCW screen polygon within rows [lo, hi)."""
        x0 = max(0, int(np.ceil(pts[:, 0].min() - 0.5)))
        x1 = min(w - 1, int(np.floor(pts[:, 0].max() - 0.5)))
        y0 = max(lo, int(np.ceil(pts[:, 1].min() - 0.5)))
        y1 = min(hi - 1, int(np.floor(pts[:, 1].max() - 0.5)))
        if x0 > x1 or y0 > y1:
            return None
        xs = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
        px, py = np.meshgrid(xs, ys)
        inside = np.ones(px.shape, dtype=bool)
        for i in range(len(pts)):
            ax, ay = pts[i]
            bx, by = pts[(i + 1) % len(pts)]
            inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= 0.0
        return x0, y0, px, py, inside

    def _depth_at(n_cam, c_plane, px, py):
        rx = (px - intr.cx) / intr.fx
        ry = (py - intr.cy) / intr.fy
        denom = n_cam[0] * rx + n_cam[1] * ry + n_cam[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = c_plane / denom
        return z

    def _rows(lo: int, hi: int):
        for entry in polys:
            if entry is None:
                continue
            pts, n_cam, c_plane = entry
            cov = _coverage(pts, lo, hi)
            if cov is None:
                continue
            x0, y0, px, py, inside = cov
            z = _depth_at(n_cam, c_plane, px, py)
            ok = inside & np.isfinite(z) & (z > NEAR_CLIP)
            if not ok.any():
                continue
            sl = (slice(y0, y0 + px.shape[0]), slice(x0, x0 + px.shape[1]))
            np.minimum(zbuf[sl], np.where(ok, z, np.inf), out=zbuf[sl])
        for ti, entry in enumerate(polys):
            if entry is None:
                continue
            pts, n_cam, c_plane = entry
            cov = _coverage(pts, lo, hi)
            if cov is None:
                continue
            x0, y0, px, py, inside = cov
            z = _depth_at(n_cam, c_plane, px, py)
            sl = (slice(y0, y0 + px.shape[0]), slice(x0, x0 + px.shape[1]))
            ok = (
                inside
                & np.isfinite(z)
                & (z > NEAR_CLIP)
                & (z <= zbuf[sl] + DEPTH_TIE_EPS)
                & (soup.priority[ti] > prio[sl])
            )
            if not ok.any():
                continue
            prio[sl][ok] = soup.priority[ti]
            semantic[sl][ok] = soup.category[ti]
            depth[sl][ok] = z[ok]

    parallel.run_blocks(_rows, h)
    return ViewMaps(semantic=semantic, depth=depth, scm=depth_to_scm(depth, view))


def depth_to_scm(depth: np.ndarray, view: CameraView) -> SCM:
    """Depth map -> world-coordinate map; pixels with depth <= 0 are invalid."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = depth > 0
    rays = ray_grid(view)  # camera frame, unit z
    cam = rays * depth[..., None]
    world = view.pose.cam_to_world(cam)
    world = np.where(valid[..., None], world, 0.0)
    return SCM(values=world, valid=valid)


def scm_to_depth(scm: SCM, view: CameraView) -> Tuple[np.ndarray, int]:
    """SCM -> camera-z depth map + count of geometrically inconsistent pixels.

    A valid pixel is inconsistent when its world point reprojects more than
    0.5 px (infinity norm) away from its own pixel center, or lands behind
    the camera. Inconsistent-behind pixels get depth 0.
    """
    h, w = scm.shape
    uv, z = project(view, scm.values.reshape(-1, 3))
    uv = uv.reshape(h, w, 2)
    z = z.reshape(h, w)
    jj, ii = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    behind = z <= 0
    off = np.maximum(np.abs(uv[..., 0] - ii), np.abs(uv[..., 1] - jj))
    inconsistent = scm.valid & (behind | (off > 0.5) | ~np.isfinite(off))
    depth = np.where(scm.valid & ~behind, z, 0.0)
    return depth, int(np.count_nonzero(inconsistent))
