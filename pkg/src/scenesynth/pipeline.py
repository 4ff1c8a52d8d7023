"""Iterative dense-view scene generation with point-based fusion.

Given a layout, a camera trajectory of n views and a view budget per call,
the first m trajectory views act as source views whose color is given
(here: rendered by the synthetic-scene oracle, standing in for input
photographs). Generation proceeds:

    call 0   complete the source views themselves (their semantics and
             coordinates), unproject every generated coordinate map into a
             global point cloud
    call k   take the next chunk of unvisited target views, drop
             low-confidence points, splat the surviving cloud into each call
             view as warp conditioning, run the backend with the original m
             source views, insert the generated target points

After the last chunk the cloud is voxel-fused (highest confidence per cell).
Checkpoints (point cloud, per-view maps, manifest) are written per call when
an output directory is given; nothing written contains timestamps, so reruns
are byte-identical.

Backends:
    OracleBackend        returns ground-truth renders, optionally with iid
                         Gaussian noise on coordinate channels; the zero-noise
                         setting reproduces ground truth bit-for-bit
    ToyDiffusionBackend  DDIM-samples a trained denoiser (view budget <= the
                         training protocol's total)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from scenesynth import fileio
from scenesynth import rng as rng_mod
from scenesynth import warp as warp_mod
from scenesynth.camera import CameraView, Trajectory, trajectory_to_dict
from scenesynth.codec import SCMCodec, SceneNormalizer
from scenesynth.diffusion import Denoiser, SceneViews, sample as ddim_sample
from scenesynth.fusion import FusedScene, chamfer, fuse, psnr, ssim
from scenesynth.geometry import TriangleSoup, layout_triangles
from scenesynth.layout import SceneLayout, layout_to_dict
from scenesynth.palette import CategoryPalette, default_palette
from scenesynth.raster import SCM, ViewMaps, rasterize_soup
from scenesynth.synth import render_gt

__all__ = [
    "SceneContext",
    "scene_views",
    "plan_iterations",
    "OracleBackend",
    "ToyDiffusionBackend",
    "GenerationResult",
    "run",
    "gt_surface_points",
    "evaluate",
]


@dataclass
class SceneContext:
    """Layout, cameras, and cached renders shared by one generation run."""

    layout: SceneLayout
    palette: CategoryPalette
    views: List[CameraView]
    soup: TriangleSoup
    normalizer: SceneNormalizer
    layout_sem: np.ndarray  # (v, h, w) raster conditioning renders
    layout_scm: np.ndarray  # (v, h, w, 3)
    layout_valid: np.ndarray  # (v, h, w)
    _gt: Dict[int, ViewMaps] = field(default_factory=dict)

    @staticmethod
    def build(
        layout: SceneLayout,
        views: Sequence[CameraView],
        palette: Optional[CategoryPalette] = None,
    ) -> "SceneContext":
        palette = palette or default_palette()
        views = list(views)
        soup = layout_triangles(layout)
        sem, scm, valid = [], [], []
        for view in views:
            maps = rasterize_soup(soup, view)
            sem.append(maps.semantic)
            scm.append(maps.scm.values)
            valid.append(maps.scm.valid)
        return SceneContext(
            layout=layout,
            palette=palette,
            views=views,
            soup=soup,
            normalizer=SceneNormalizer.from_layout(layout),
            layout_sem=np.stack(sem),
            layout_scm=np.stack(scm),
            layout_valid=np.stack(valid),
        )

    def gt(self, view_index: int) -> ViewMaps:
        """Reference ray-cast render, cached per view."""
        if view_index not in self._gt:
            self._gt[view_index] = render_gt(
                self.layout, self.views[view_index], self.palette, self.soup
            )
        return self._gt[view_index]


def scene_views(ctx: SceneContext) -> SceneViews:
    """Bundle reference renders of every context view for denoiser training."""
    gts = [ctx.gt(i) for i in range(len(ctx.views))]
    return SceneViews(
        views=list(ctx.views),
        color=np.stack([g.color for g in gts]),
        semantic=np.stack([g.semantic for g in gts]),
        scm=np.stack([g.scm.values for g in gts]),
        valid=np.stack([g.scm.valid for g in gts]),
        normalizer=ctx.normalizer,
        layout_sem=ctx.layout_sem,
        layout_scm=ctx.layout_scm,
    )


def plan_iterations(n_views: int, m_sources: int, batch_size: int) -> List[List[int]]:
    """Consecutive target chunks after the m source views."""
    if not 1 <= m_sources < n_views:
        raise ValueError("need 1 <= m_sources < n_views")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    targets = list(range(m_sources, n_views))
    return [targets[i : i + batch_size] for i in range(0, len(targets), batch_size)]


class Backend(Protocol):
    def generate(
        self,
        ctx: SceneContext,
        source_indices: Sequence[int],
        source_maps: Sequence[ViewMaps],
        target_indices: Sequence[int],
        warp_maps: Optional[Dict[int, ViewMaps]],
        seed: int,
        iteration: int,
    ) -> List[ViewMaps]:
        ...


@dataclass
class OracleBackend:
    """Ground-truth renders, optionally with Gaussian noise on coordinates.

    noise_sigma = 0 returns the reference render arrays unchanged, so the
    whole pipeline output is bit-equal to ground truth. Noise is iid
    N(0, sigma^2) per coordinate channel on valid pixels only, seeded by
    (run seed, iteration, slot).
    """

    noise_sigma: float = 0.0
    confidence_value: float = 2.0

    def generate(self, ctx, source_indices, source_maps, target_indices,
                 warp_maps, seed, iteration):
        out: List[ViewMaps] = []
        for slot, ti in enumerate(target_indices):
            gt = ctx.gt(int(ti))
            values = gt.scm.values
            if self.noise_sigma > 0.0:
                gen = rng_mod.substream(seed, 501, iteration, slot)
                noise = gen.normal(size=values.shape) * self.noise_sigma
                values = values + noise * gt.scm.valid[..., None]
            conf = np.full(gt.semantic.shape, self.confidence_value)
            out.append(
                ViewMaps(
                    color=gt.color,
                    semantic=gt.semantic,
                    depth=gt.depth,
                    scm=SCM(values=values, valid=gt.scm.valid),
                    confidence=conf,
                )
            )
        return out


@dataclass
class ToyDiffusionBackend:
    """DDIM sampling of a trained denoiser, one call per target chunk."""

    model: Denoiser
    codec: SCMCodec
    steps: int = 8
    n_categories: int = 0  # 0: use the context palette size

    def generate(self, ctx, source_indices, source_maps, target_indices,
                 warp_maps, seed, iteration):
        config = self.model.config
        call = [int(i) for i in source_indices] + [int(i) for i in target_indices]
        if len(call) > config.views_total:
            raise ValueError(
                f"call of {len(call)} views exceeds the protocol total {config.views_total}"
            )
        ncat = self.n_categories or len(ctx.palette.names)
        h = w = config.image_size
        nv = len(call)
        color = np.zeros((nv, h, w, 3))
        valid = np.zeros((nv, h, w), dtype=bool)
        for k, vi in enumerate(source_indices):
            color[k] = source_maps[k].color
            valid[k] = source_maps[k].scm.valid
        scene = SceneViews(
            views=[ctx.views[i] for i in call],
            color=color,
            semantic=np.zeros((nv, h, w), dtype=np.int32),
            scm=np.zeros((nv, h, w, 3)),
            valid=valid,
            normalizer=ctx.normalizer,
            layout_sem=ctx.layout_sem[call],
            layout_scm=ctx.layout_scm[call],
        )
        warp_rgb = warp_cov = None
        if warp_maps is not None:
            warp_rgb = np.stack([warp_maps[i].color for i in call])
            warp_cov = np.stack(
                [warp_maps[i].warp_coverage.astype(np.float64) for i in call]
            )
        decoded = ddim_sample(
            self.model,
            self.codec,
            scene,
            source_indices=range(len(source_indices)),
            steps=self.steps,
            seed=rng_mod.derive_seed(seed, 502, iteration),
            n_categories=ncat,
            warp_rgb=warp_rgb,
            warp_cov=warp_cov,
        )
        out: List[ViewMaps] = []
        base = len(source_indices)
        for k in range(len(target_indices)):
            ci = base + k
            out.append(
                ViewMaps(
                    color=decoded["color"][ci],
                    semantic=decoded["semantic"][ci].astype(np.int32),
                    scm=SCM(
                        values=decoded["coords"][ci],
                        valid=np.ones((h, w), dtype=bool),
                    ),
                    confidence=decoded["confidence"][ci],
                )
            )
        return out


@dataclass
class GenerationResult:
    view_maps: Dict[int, ViewMaps]
    cloud: warp_mod.GlobalPointCloud
    fused: FusedScene
    manifest: dict


def _write_view(out_dir: Path, vi: int, maps: ViewMaps, palette: CategoryPalette) -> List[str]:
    names = []
    stem = f"view_{vi:03d}"
    fileio.save_color_png(out_dir / f"{stem}.color.png", maps.color)
    names.append(f"{stem}.color.png")
    fileio.save_semantic_png(out_dir / f"{stem}.semantic.png", maps.semantic, palette)
    names.append(f"{stem}.semantic.png")
    if maps.depth is not None:
        fileio.save_depth_png(out_dir / f"{stem}.depth.png", maps.depth)
        names.append(f"{stem}.depth.png")
    fileio.save_scm(out_dir / f"{stem}.scm1", maps.scm.values, maps.scm.valid)
    names.append(f"{stem}.scm1")
    return names


def run(
    layout: SceneLayout,
    trajectory: Trajectory,
    backend: Backend,
    m_sources: int,
    seed: int = 0,
    batch_size: Optional[int] = None,
    tau: float = warp_mod.DEFAULT_TAU,
    voxel: float = 0.05,
    splat_radius: float = 1.0,
    out_dir: Optional[str] = None,
    palette: Optional[CategoryPalette] = None,
) -> GenerationResult:
    """Run the iterative generation loop; see module docstring."""
    views = trajectory.views
    n = len(views)
    if batch_size is None:
        batch_size = max(1, 8 - m_sources)
    plan = plan_iterations(n, m_sources, batch_size)
    ctx = SceneContext.build(layout, views, palette)
    src_idx = list(range(m_sources))
    out_path: Optional[Path] = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    cloud = warp_mod.empty_cloud()
    view_maps: Dict[int, ViewMaps] = {}
    iteration_rows: List[dict] = []
    files: List[str] = []

    def checkpoint(iteration: int, indices: Sequence[int]) -> None:
        if out_path is None:
            return
        it_dir = out_path / f"iter_{iteration:02d}"
        it_dir.mkdir(exist_ok=True)
        for vi in indices:
            for name in _write_view(it_dir, vi, view_maps[vi], ctx.palette):
                files.append(f"iter_{iteration:02d}/{name}")
        fileio.save_ply(it_dir / "cloud.ply", cloud)
        files.append(f"iter_{iteration:02d}/cloud.ply")

    # call 0: the source views complete themselves (color given)
    source_inputs = [ctx.gt(i) for i in src_idx]
    generated = backend.generate(ctx, src_idx, source_inputs, src_idx, None, seed, 0)
    added0 = 0
    for vi, maps in zip(src_idx, generated):
        view_maps[vi] = maps
        before = len(cloud)
        cloud = warp_mod.insert_scm(cloud, maps, view_index=vi)
        added0 += len(cloud) - before
    iteration_rows.append(
        {"iteration": 0, "targets": src_idx, "points_added": added0, "cloud_size": len(cloud)}
    )
    checkpoint(0, src_idx)

    for it, targets in enumerate(plan, start=1):
        kept = warp_mod.filter_by_confidence(cloud, tau)
        call = src_idx + targets
        warp_maps = {
            vi: warp_mod.splat(kept, views[vi], radius_px=splat_radius) for vi in call
        }
        generated = backend.generate(
            ctx, src_idx, [view_maps[i] for i in src_idx], targets, warp_maps, seed, it
        )
        added = 0
        for vi, maps in zip(targets, generated):
            view_maps[vi] = maps
            before = len(cloud)
            cloud = warp_mod.insert_scm(cloud, maps, view_index=vi)
            added += len(cloud) - before
        iteration_rows.append(
            {
                "iteration": it,
                "targets": list(targets),
                "points_added": added,
                "cloud_size": len(cloud),
                "filtered_cloud_size": len(kept),
            }
        )
        checkpoint(it, targets)

    fused = fuse(cloud, voxel)
    manifest = {
        "m_sources": m_sources,
        "seed": seed,
        "batch_size": batch_size,
        "tau": tau,
        "voxel": voxel,
        "splat_radius": splat_radius,
        "backend": type(backend).__name__,
        "iterations": iteration_rows,
        "n_views": n,
        "fused_points": len(fused.cloud),
        "provenance": {str(k): v for k, v in sorted(fused.provenance.items())},
        "trajectory": trajectory_to_dict(trajectory),
        "layout": layout_to_dict(layout),
        "files": files,
    }
    if out_path is not None:
        fileio.save_ply(out_path / "fused.ply", fused.cloud)
        manifest["files"].append("fused.ply")
        fileio.save_json(out_path / "manifest.json", manifest)
    return GenerationResult(view_maps=view_maps, cloud=cloud, fused=fused, manifest=manifest)


# ---------------------------------------------------------------------------
# evaluation


def gt_surface_points(ctx: SceneContext) -> np.ndarray:
    """Union of unprojected ground-truth coordinates over the planned views."""
    pts = [ctx.gt(i).scm.values[ctx.gt(i).scm.valid] for i in range(len(ctx.views))]
    return np.concatenate(pts, axis=0)


def evaluate(
    result: GenerationResult,
    ctx: SceneContext,
    chamfer_sample_n: Optional[int] = 20000,
    seed: int = 0,
) -> dict:
    """Per-view image metrics against ground truth plus fused-cloud Chamfer."""
    rows: List[dict] = []
    for vi in sorted(result.view_maps):
        maps = result.view_maps[vi]
        gt = ctx.gt(vi)
        both = gt.scm.valid & maps.scm.valid
        row = {
            "view": vi,
            "psnr": psnr(maps.color, gt.color),
            "semantic_accuracy": float(np.mean(maps.semantic == gt.semantic)),
            "scm_rmse": float(
                np.sqrt(
                    np.mean(
                        np.sum((maps.scm.values[both] - gt.scm.values[both]) ** 2, axis=-1)
                    )
                )
            )
            if both.any()
            else math.nan,
        }
        try:
            row["ssim"] = ssim(maps.color, gt.color)
        except ValueError:
            row["ssim"] = math.nan  # image smaller than the SSIM window
        rows.append(row)
    dist = chamfer(
        result.fused.cloud.positions,
        gt_surface_points(ctx),
        sample_n=chamfer_sample_n,
        seed=seed,
    )
    finite = [r["psnr"] for r in rows if math.isfinite(r["psnr"])]
    return {
        "views": rows,
        "chamfer": dist,
        "mean_psnr": float(np.mean(finite)) if finite else math.inf,
        "mean_semantic_accuracy": float(np.mean([r["semantic_accuracy"] for r in rows])),
    }
