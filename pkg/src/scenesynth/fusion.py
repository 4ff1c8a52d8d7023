"""Point fusion and reconstruction / image metrics.

fuse() deduplicates a global cloud on a voxel grid keeping the highest
confidence sample per cell (ties -> lowest point index), which makes it
idempotent. chamfer() is the symmetric mean nearest-neighbor distance:
max over both directions of the mean NN distance, each direction optionally
subsampled (seeded) on the query side while always searching the full other
cloud. Grid and brute-force modes agree to 1e-9 by construction (the grid
search is an exact NN search).

psnr/ssim operate on float images in [0, 1]; SSIM uses an 11x11 Gaussian
window (sigma 1.5, k1 0.01, k2 0.03) on Rec.601 luma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from scenesynth import rng as rng_mod
from scenesynth.warp import GlobalPointCloud

__all__ = ["FusedScene", "fuse", "chamfer", "psnr", "ssim"]


@dataclass
class FusedScene:
    cloud: GlobalPointCloud
    voxel: float
    provenance: Dict[int, int]  # source view -> surviving point count


def fuse(cloud: GlobalPointCloud, voxel: float = 0.05) -> FusedScene:
    """Voxel dedup: keep the highest-confidence point per cell (ties: lowest index)."""
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        return FusedScene(cloud=cloud, voxel=voxel, provenance={})
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    order = np.lexsort(
        (np.arange(len(cloud)), -cloud.confidence, keys[:, 2], keys[:, 1], keys[:, 0])
    )
    sk = keys[order]
    first = np.ones(len(cloud), dtype=bool)
    first[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    keep = np.sort(order[first])
    out = cloud.take(keep)
    views, counts = np.unique(out.source_view, return_counts=True)
    return FusedScene(
        cloud=out, voxel=voxel, provenance={int(v): int(c) for v, c in zip(views, counts)}
    )


# ---------------------------------------------------------------------------
# chamfer


def _nn_dists_brute(queries: np.ndarray, target: np.ndarray) -> np.ndarray:
    out = np.empty(len(queries))
    step = max(1, int(2e7) // max(len(target), 1))
    for lo in range(0, len(queries), step):
        q = queries[lo : lo + step]
        d2 = (
            np.sum(q * q, axis=1)[:, None]
            - 2.0 * (q @ target.T)
            + np.sum(target * target, axis=1)[None, :]
        )
        out[lo : lo + step] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


class _VoxelIndex:
    """Exact nearest-neighbor search over a uniform grid."""

    def __init__(self, points: np.ndarray, cell: float):
        self.points = points
        self.cell = cell
        keys = np.floor(points / cell).astype(np.int64)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        sk = keys[order]
        first = np.ones(len(points), dtype=bool)
        first[1:] = np.any(sk[1:] != sk[:-1], axis=1)
        starts = np.nonzero(first)[0]
        self.order = order
        self.cell_keys = sk[starts]
        self.cell_starts = starts
        self.cell_ends = np.append(starts[1:], len(points))
        # dict for O(1) cell lookup
        self.lut = {tuple(k): i for i, k in enumerate(self.cell_keys)}

    def _cell_points(self, key: Tuple[int, int, int]) -> Optional[np.ndarray]:
        i = self.lut.get(key)
        if i is None:
            return None
        return self.points[self.order[self.cell_starts[i] : self.cell_ends[i]]]

    def nn_dist(self, q: np.ndarray) -> float:
        base = tuple(int(v) for v in np.floor(q / self.cell))
        best = np.inf
        max_ring = 1 + int(
            np.max(np.abs(self.cell_keys - np.asarray(base)[None, :])).item()
        )
        # Rings below this are provably empty (base may be outside the grid).
        lo_k = self.cell_keys.min(axis=0)
        hi_k = self.cell_keys.max(axis=0)
        clamped = np.minimum(np.maximum(np.asarray(base), lo_k), hi_k)
        ring = int(np.max(np.abs(np.asarray(base) - clamped)))
        budget = 20000
        while ring <= max_ring:
            if (2 * ring + 1) ** 3 > budget:
                # Shell enumeration too large: exact brute force instead.
                return float(
                    np.sqrt(np.sum((self.points - q) ** 2, axis=1).min())
                )
            cand = []
            rng_ = range(-ring, ring + 1)
            for dx in rng_:
                for dy in rng_:
                    for dz in rng_:
                        if max(abs(dx), abs(dy), abs(dz)) != ring:
                            continue
                        pts = self._cell_points((base[0] + dx, base[1] + dy, base[2] + dz))
                        if pts is not None:
                            cand.append(pts)
            if cand:
                allc = np.concatenate(cand)
                d = np.sqrt(np.sum((allc - q) ** 2, axis=1).min())
                best = min(best, float(d))
            # Any point in an unvisited cell is at least ring * cell away.
            if best <= ring * self.cell:
                break
            ring += 1
        return best


def _nn_dists_grid(queries: np.ndarray, target: np.ndarray) -> np.ndarray:
    span = target.max(axis=0) - target.min(axis=0)
    cell = float(max(span.max(), 1e-9)) / max(int(round(len(target) ** (1.0 / 3.0))), 1)
    cell = max(cell, 1e-9)
    index = _VoxelIndex(target, cell)
    return np.array([index.nn_dist(q) for q in queries])


def chamfer(
    cloud_a: np.ndarray,
    cloud_b: np.ndarray,
    sample_n: Optional[int] = None,
    seed: int = 0,
    mode: str = "grid",
) -> float:
    """Symmetric mean NN distance; query sides seeded-subsampled to sample_n."""
    a = np.asarray(cloud_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(cloud_b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer needs non-empty clouds")
    if mode not in ("grid", "brute"):
        raise ValueError("mode must be 'grid' or 'brute'")

    def sample(points: np.ndarray, key: int) -> np.ndarray:
        if sample_n is None or len(points) <= sample_n:
            return points
        gen = rng_mod.substream(seed, 23, key)
        return points[np.sort(gen.choice(len(points), size=sample_n, replace=False))]

    nn = _nn_dists_grid if mode == "grid" else _nn_dists_brute
    d_ab = float(np.mean(nn(sample(a, 0), b)))
    d_ba = float(np.mean(nn(sample(b, 1), a)))
    return max(d_ab, d_ba)


# ---------------------------------------------------------------------------
# image metrics


def psnr(image: np.ndarray, reference: np.ndarray) -> float:
    """10*log10(1/MSE) for [0, 1] images; +inf when identical."""
    x = np.asarray(image, dtype=np.float64)
    y = np.asarray(reference, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        r, g, b = img[..., 0], img[..., 1], img[..., 2]
        return 0.299 * r + 0.587 * g + 0.114 * b
    raise ValueError("expected (h, w) or (h, w, 3) image")

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius int(3.5 * 1.5 + 0.5) = 5 -> 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def ssim(image: np.ndarray, reference: np.ndarray) -> float:
    """Mean SSIM on Rec.601 luma, Gaussian 11x11 window, data range 1."""
    x = _luma(np.asarray(image, dtype=np.float64))
    y = _luma(np.asarray(reference, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    pad = int(SSIM_TRUNCATE * SSIM_SIGMA + 0.5)
    if min(x.shape) < 2 * pad + 1:
        raise ValueError(f"image too small for {2 * pad + 1}x{2 * pad + 1} SSIM window")

    def filt(a):
        return gaussian_filter(a, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE)

    ux, uy = filt(x), filt(y)
    uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cov = uxy - ux * uy
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2.0 * ux * uy + c1) * (2.0 * cov + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    smap = num / den
    crop = smap[pad:-pad, pad:-pad]
    return float(crop.mean())
