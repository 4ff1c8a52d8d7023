"""Layout-guided indoor scene synthesis toolkit.

Library layout:
    palette     category table (62 object classes + reserved structural ids)
    layout      semantic box / room / arch-quad scene layouts, filtering, curation
    camera      pinhole cameras, projection, Plucker rays, trajectories, panoramas
    geometry    layout -> triangle soup used by both renderers
    raster      z-buffer condition rasterizer + scene-coordinate conversions
    synth       synthetic scene generator + ray-cast ground-truth renderer
    warp        colored global point cloud, splatting, confidence filtering
    autograd    minimal reverse-mode engine + Adam (numpy only)
    codec       scene-coordinate codec (frozen encoder, confidence decoder)
    diffusion   v-parametrized multi-view multi-modal denoiser
    pipeline    iterative dense-view generation (oracle + learned backends)
    fusion      point fusion, PSNR / SSIM / Chamfer metrics
    fileio      PNG / SCM1 / PLY / checkpoint / manifest codecs
    cli         subcommand front end
"""

from scenesynth import (
    autograd,
    camera,
    codec,
    diffusion,
    fileio,
    fusion,
    geometry,
    layout,
    palette,
    pipeline,
    raster,
    rng,
    synth,
    warp,
)

__version__ = "0.1.0"

__all__ = [
    "autograd",
    "camera",
    "codec",
    "diffusion",
    "fileio",
    "fusion",
    "geometry",
    "layout",
    "palette",
    "pipeline",
    "raster",
    "rng",
    "synth",
    "warp",
    "__version__",
]
