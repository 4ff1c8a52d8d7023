"""Colored global point cloud and cross-view splatting.

The iterative pipeline accumulates every generated pixel as a world-space
point (position from the SCM, color/semantic/confidence from the view that
produced it). Warping into a new view is nearest-depth square splatting:
a point covers all pixels whose centers lie within radius_px of its
projection in the infinity norm; the smallest camera depth wins and depth
ties within 1e-9 go to the lowest point index, so results are independent
of traversal order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from scenesynth.camera import CameraView, project
from scenesynth.palette import VOID_ID
from scenesynth.raster import SCM, ViewMaps

__all__ = ["GlobalPointCloud", "empty_cloud", "insert_scm", "filter_by_confidence", "splat", "DEPTH_TIE"]

DEPTH_TIE = 1e-9
DEFAULT_TAU = 1.5


@dataclass
class GlobalPointCloud:
    """Struct-of-arrays colored point cloud."""

    positions: np.ndarray  # (n, 3) float64
    colors: np.ndarray  # (n, 3) float64 in [0, 1]
    semantics: np.ndarray  # (n,) int32
    confidence: np.ndarray  # (n,) float64
    source_view: np.ndarray  # (n,) int32

    def __len__(self) -> int:
        return len(self.positions)

    def take(self, index: np.ndarray) -> "GlobalPointCloud":
        return GlobalPointCloud(
            positions=self.positions[index],
            colors=self.colors[index],
            semantics=self.semantics[index],
            confidence=self.confidence[index],
            source_view=self.source_view[index],
        )

    def extend(self, other: "GlobalPointCloud") -> "GlobalPointCloud":
        return GlobalPointCloud(
            positions=np.concatenate([self.positions, other.positions]),
            colors=np.concatenate([self.colors, other.colors]),
            semantics=np.concatenate([self.semantics, other.semantics]),
            confidence=np.concatenate([self.confidence, other.confidence]),
            source_view=np.concatenate([self.source_view, other.source_view]),
        )


def empty_cloud() -> GlobalPointCloud:
    return GlobalPointCloud(
        positions=np.zeros((0, 3)),
        colors=np.zeros((0, 3)),
        semantics=np.zeros(0, dtype=np.int32),
        confidence=np.zeros(0),
        source_view=np.zeros(0, dtype=np.int32),
    )


def insert_scm(cloud: GlobalPointCloud, maps: ViewMaps, view_index: int) -> GlobalPointCloud:
    """Append the valid SCM pixels of a view (row-major order) as points."""
    if maps.scm is None or maps.color is None:
        raise ValueError("insert_scm needs scm and color maps")
    valid = maps.scm.valid
    pos = maps.scm.values[valid]
    colors = maps.color[valid]
    sem = (
        maps.semantic[valid].astype(np.int32)
        if maps.semantic is not None
        else np.full(len(pos), VOID_ID, dtype=np.int32)
    )
    conf = (
        maps.confidence[valid].astype(np.float64)
        if maps.confidence is not None
        else np.ones(len(pos))
    )
    new = GlobalPointCloud(
        positions=pos.astype(np.float64),
        colors=colors.astype(np.float64),
        semantics=sem,
        confidence=conf,
        source_view=np.full(len(pos), view_index, dtype=np.int32),
    )
    return cloud.extend(new)


def filter_by_confidence(cloud: GlobalPointCloud, tau: float = DEFAULT_TAU) -> GlobalPointCloud:
    """Keep points with confidence >= tau."""
    return cloud.take(cloud.confidence >= tau)


def splat(cloud: GlobalPointCloud, view: CameraView, radius_px: float = 1.0) -> ViewMaps:
    """Warp the cloud into a view with nearest-depth square splats.

    Returns color / semantic / depth maps plus the boolean coverage mask.
    Equivalent to the per-pixel rule: among points with positive depth whose
    projection lies within radius_px (infinity norm) of the pixel center,
    the nearest depth wins; ties within DEPTH_TIE pick the lowest index.
    """
    h, w = view.height, view.width
    color = np.zeros((h, w, 3))
    semantic = np.full((h, w), VOID_ID, dtype=np.int32)
    depth = np.zeros((h, w))
    coverage = np.zeros((h, w), dtype=bool)
    out = ViewMaps(color=color, semantic=semantic, depth=depth, warp_coverage=coverage)
    if len(cloud) == 0:
        return out

    uv, z = project(view, cloud.positions)
    front = z > DEPTH_TIE
    if not front.any():
        return out
    idx_all = np.nonzero(front)[0]
    uv = uv[front]
    z = z[front]

    # Candidate pixel window per point: i in [ceil(u - r), floor(u + r)].
    span = int(np.floor(2.0 * radius_px)) + 1
    base_u = np.ceil(uv[:, 0] - radius_px).astype(np.int64)
    base_v = np.ceil(uv[:, 1] - radius_px).astype(np.int64)
    offs = np.arange(span, dtype=np.int64)
    grid = (len(uv), span, span)
    pi = np.broadcast_to(base_u[:, None, None] + offs[None, None, :], grid)  # column
    pj = np.broadcast_to(base_v[:, None, None] + offs[None, :, None], grid)  # row
    inside = (
        (pi >= 0)
        & (pi < w)
        & (pj >= 0)
        & (pj < h)
        & (np.abs(pi - uv[:, 0, None, None]) <= radius_px)
        & (np.abs(pj - uv[:, 1, None, None]) <= radius_px)
    )
    pt = np.broadcast_to(np.arange(len(uv))[:, None, None], grid)[inside]
    flat = (pj[inside] * w + pi[inside]).astype(np.int64)

    zflat = z[pt]
    zmin = np.full(h * w, np.inf)
    np.minimum.at(zmin, flat, zflat)
    tie = zflat <= zmin[flat] + DEPTH_TIE
    winner = np.full(h * w, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(winner, flat[tie], pt[tie])

    covered = np.isfinite(zmin)
    win = winner[covered]
    src = idx_all[win]
    color.reshape(-1, 3)[covered] = cloud.colors[src]
    semantic.reshape(-1)[covered] = cloud.semantics[src]
    depth.reshape(-1)[covered] = z[win]
    coverage.reshape(-1)[covered] = True
    return out
