"""Command-line entry point.

    scenesynth [--threads N] [--json-errors] <command> ...

Commands:
    layout validate FILE            schema + invariant check, exit 1 on failure
    layout filter FILE --out OUT    drop out-of-range / unplaced boxes
    dataset curate DIR [--out OUT]  accept/reject every layout json in DIR
    synth gen                       emit a seeded synthetic scene layout
    traj gen                        emit a camera trajectory json
    raster                          semantic / depth / coordinate maps per view
    pano2persp                      perspective crop of an equirectangular pano
    codec train|eval                coordinate codec on .scm1 data
    diffusion train|sample          toy denoiser on seeded synthetic scenes
    pipeline run                    iterative generation (oracle or toy backend)
    eval                            PSNR / SSIM / Chamfer between two run dirs

Every command that writes files also writes a manifest json holding the full
resolved configuration; report-style commands print the same document to
standard output. Exit codes: 0 success, 1 domain failure, 2 usage. With
--json-errors failures print one json object on stdout instead of text on
stderr. --threads caps internal parallelism (fallback: SPATIALGEN_THREADS,
then core count); results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from scenesynth import __version__, fileio, parallel
from scenesynth import rng as rng_mod
from scenesynth import warp as warp_mod
from scenesynth.camera import (
    Trajectory,
    gen_trajectory,
    load_trajectory,
    pano_to_persp,
    save_trajectory,
)
from scenesynth.codec import CodecConfig, SCMCodec, SceneNormalizer, codec_total_loss, train_codec
from scenesynth.diffusion import (
    Denoiser,
    DiffusionConfig,
    sample as ddim_sample,
    train_scenes,
)
from scenesynth.fusion import chamfer, psnr, ssim
from scenesynth.layout import (
    curate,
    filter_objects,
    layout_to_dict,
    load_layout,
    save_layout,
)
from scenesynth.palette import default_palette
from scenesynth.pipeline import (
    OracleBackend,
    SceneContext,
    ToyDiffusionBackend,
    evaluate,
    run as run_pipeline,
    scene_views,
)
from scenesynth.raster import rasterize_layout
from scenesynth.synth import default_views, gen_scene

from scenesynth import autograd as ag


def _config_dict(args: argparse.Namespace) -> dict:
    # the thread cap stays out: results (and written bytes) never depend on it
    skip = {"func", "json_errors", "threads"}
    out = {"version": __version__}
    for k, v in vars(args).items():
        if k in skip:
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _manifest(out_dir: Path, args: argparse.Namespace, extra: Optional[dict] = None) -> dict:
    doc = {"config": _config_dict(args)}
    if extra:
        doc.update(extra)
    fileio.save_json(out_dir / "manifest.json", doc)
    return doc


# ---------------------------------------------------------------------------
# layout / dataset


def cmd_layout_validate(args) -> int:
    try:
        load_layout(args.file)
    except (ValueError, KeyError) as exc:
        print(json.dumps({"valid": False, "reason": str(exc), "config": _config_dict(args)}))
        return 1
    print(json.dumps({"valid": True, "config": _config_dict(args)}))
    return 0


def cmd_layout_filter(args) -> int:
    layout = load_layout(args.file)
    filtered = filter_objects(layout, min_edge=args.min_edge, max_edge=args.max_edge)
    save_layout(filtered, args.out)
    out_dir = Path(args.out).parent
    _manifest(
        out_dir,
        args,
        {"boxes_before": len(layout.boxes), "boxes_after": len(filtered.boxes)},
    )
    print(f"kept {len(filtered.boxes)} of {len(layout.boxes)} boxes -> {args.out}")
    return 0


def cmd_dataset_curate(args) -> int:
    paths = sorted(Path(args.dir).glob("*.json"))
    if not paths:
        raise FileNotFoundError(f"no layout json files in {args.dir}")
    rows = []
    for path in paths:
        layout = load_layout(str(path))
        decision = curate(layout, panorama_count=args.panoramas)
        rows.append(
            {
                "file": path.name,
                "accepted": decision.accept,
                "reasons": decision.reasons,
                "retained_rooms": decision.retained_rooms,
            }
        )
        status = "accept" if decision.accept else "reject"
        reason = "" if decision.accept else " (" + "; ".join(decision.reasons) + ")"
        print(f"{status} {path.name}{reason}")
    report = {"config": _config_dict(args), "decisions": rows}
    if args.out:
        fileio.save_json(args.out, report)
    return 0


# ---------------------------------------------------------------------------
# synthesis / cameras / rendering


def cmd_synth_gen(args) -> int:
    layout = gen_scene(args.seed, difficulty=args.difficulty)
    save_layout(layout, args.out)
    _manifest(Path(args.out).parent, args, {"boxes": len(layout.boxes)})
    print(f"wrote {args.out} ({len(layout.boxes)} boxes)")
    return 0


def cmd_traj_gen(args) -> int:
    layout = load_layout(args.layout)
    traj = gen_trajectory(
        layout,
        pattern=args.pattern,
        count=args.count,
        seed=args.seed,
        spacing=args.spacing,
        fov_deg=args.fov,
        width=args.size,
        height=args.size,
    )
    save_trajectory(traj, args.out)
    _manifest(Path(args.out).parent, args, {"views": len(traj)})
    print(f"wrote {args.out} ({len(traj)} views)")
    return 0


def cmd_raster(args) -> int:
    layout = load_layout(args.layout)
    traj = load_trajectory(args.traj)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    palette = default_palette()
    files = []
    for vi, view in enumerate(traj.views):
        maps = rasterize_layout(layout, view)
        stem = f"view_{vi:03d}"
        fileio.save_semantic_png(out / f"{stem}.semantic.png", maps.semantic, palette)
        fileio.save_depth_png(out / f"{stem}.depth.png", maps.depth)
        fileio.save_scm(out / f"{stem}.scm1", maps.scm.values, maps.scm.valid)
        files += [f"{stem}.semantic.png", f"{stem}.depth.png", f"{stem}.scm1"]
    _manifest(out, args, {"files": files})
    print(f"rasterized {len(traj)} views -> {args.out}")
    return 0


def cmd_pano2persp(args) -> int:
    pano = fileio.load_color_png(args.infile)
    persp = pano_to_persp(
        pano,
        yaw=math.radians(args.yaw),
        pitch=math.radians(args.pitch),
        fov_deg=args.fov,
        out_size=(args.size, args.size),
    )
    fileio.save_color_png(args.out, persp)
    _manifest(Path(args.out).parent, args)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# codec


def _load_scm_dir(data_dir: str) -> List:
    paths = sorted(Path(data_dir).glob("*.scm1"))
    if not paths:
        raise FileNotFoundError(f"no .scm1 files in {data_dir}")
    return [(p.name, *fileio.load_scm(p)) for p in paths]


def _stack_scm(items) -> tuple:
    shapes = {v.shape for _, v, _ in items}
    if len(shapes) != 1:
        raise ValueError(f"coordinate maps disagree on shape: {sorted(shapes)}")
    values = np.stack([v for _, v, _ in items])
    valid = np.stack([m for _, _, m in items])
    return values, valid


def _normalizer_from_values(values: np.ndarray, valid: np.ndarray) -> SceneNormalizer:
    pts = values[valid]
    if len(pts) == 0:
        raise ValueError("no valid coordinates in the training data")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return SceneNormalizer(
        center=(lo + hi) / 2.0, scale=float(max(np.max(hi - lo) / 2.0, 1e-6))
    )


def cmd_codec_train(args) -> int:
    items = _load_scm_dir(args.data)
    values, valid = _stack_scm(items)
    norm = _normalizer_from_values(values, valid)
    config = CodecConfig(lambda1=args.lambda1, seed=args.seed, lr=args.lr)
    codec, log = train_codec(norm.normalize(values), config, steps=args.steps, masks=valid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": "codec",
        "config": config.to_dict(),
        "normalizer": norm.to_dict(),
        "latent_scale": codec.latent_scale,
    }
    fileio.save_checkpoint(out / "codec.sgck", meta, codec.state_dict())
    fileio.save_csv(out / "train_log.csv", log)
    _manifest(out, args, {"final_loss": log[-1]["total"], "steps": len(log)})
    print(f"trained codec on {len(items)} maps, final loss {log[-1]['total']:.6f}")
    return 0


def cmd_codec_eval(args) -> int:
    meta, blobs = fileio.load_checkpoint(args.ckpt)
    if meta.get("kind") != "codec":
        raise ValueError(f"{args.ckpt} is not a codec checkpoint")
    codec = SCMCodec(CodecConfig.from_dict(meta["config"]))
    codec.load_state_dict(blobs)
    norm = SceneNormalizer.from_dict(meta["normalizer"])
    items = _load_scm_dir(args.data)
    values, valid = _stack_scm(items)
    data = norm.normalize(values)
    coords, conf = codec.decode(codec.encode(data))
    total, lrec, lgrad = codec_total_loss(
        coords, data, conf, valid, codec.config.alpha, codec.config.lambda1
    )
    err = np.linalg.norm((coords.data - data), axis=-1)[valid]
    rows = []
    for i, (name, _, mask) in enumerate(items):
        per = np.linalg.norm(coords.data[i] - data[i], axis=-1)[mask]
        rows.append(
            {
                "file": name,
                "rmse_norm": float(np.sqrt(np.mean(per**2))),
                "rmse_world": float(np.sqrt(np.mean(per**2))) * norm.scale,
                "mean_confidence": float(conf.data[i][mask].mean()),
            }
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_csv(out / "metrics.csv", rows)
    summary = {
        "loss_total": float(total.data),
        "loss_rec": float(lrec.data),
        "loss_grad": float(lgrad.data),
        "rmse_world": float(np.sqrt(np.mean(err**2))) * norm.scale,
    }
    _manifest(out, args, {"summary": summary})
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# diffusion


def _scene_bundle(scene_seed: int, difficulty: str, n_views: int):
    layout = gen_scene(scene_seed, difficulty=difficulty)
    traj = default_views(layout, count=n_views, seed=scene_seed)
    ctx = SceneContext.build(layout, traj.views)
    return layout, traj, ctx


def _load_diffusion_config(path: Optional[str]) -> DiffusionConfig:
    if path is None:
        return DiffusionConfig()
    doc = fileio.load_json(path)
    base = DiffusionConfig().to_dict()
    base.update(doc)
    return DiffusionConfig.from_dict(base)


def cmd_diffusion_train(args) -> int:
    config = _load_diffusion_config(args.config)
    config.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundles = [
        _scene_bundle(s, args.difficulty, config.views_total)
        for s in range(args.scenes)
    ]
    views = [scene_views(ctx) for _, _, ctx in bundles]

    if args.codec:
        cmeta, cblobs = fileio.load_checkpoint(args.codec)
        codec = SCMCodec(CodecConfig.from_dict(cmeta["config"]))
        codec.load_state_dict(cblobs)
    else:
        # train a small codec on the same scenes' normalized coordinates
        scms = np.concatenate([sv.normalizer.normalize(sv.scm) for sv in views])
        masks = np.concatenate([sv.valid for sv in views])
        codec, _ = train_codec(
            scms, CodecConfig(seed=args.seed), steps=args.codec_steps, masks=masks
        )
    model, log = train_scenes(
        views, codec, config, max_steps=args.steps, stop_ratio=args.stop_ratio,
        log_every=args.log_every,
    )
    meta = {
        "kind": "denoiser",
        "config": model.config.to_dict(),
        "codec_config": codec.config.to_dict(),
        "latent_scale": codec.latent_scale,
        "scene_seeds": list(range(args.scenes)),
        "difficulty": args.difficulty,
    }
    blobs = {f"model.{k}": v for k, v in model.state_dict().items()}
    blobs.update({f"codec.{k}": v for k, v in codec.state_dict().items()})
    fileio.save_checkpoint(out / "model.sgck", meta, blobs)
    fileio.save_csv(out / "train_log.csv", log)
    _manifest(
        out, args, {"steps_run": len(log), "final_loss": log[-1]["loss"]}
    )
    print(f"trained {len(log)} steps, final loss {log[-1]['loss']:.6f}")
    return 0


def _load_denoiser(path: str):
    meta, blobs = fileio.load_checkpoint(path)
    if meta.get("kind") != "denoiser":
        raise ValueError(f"{path} is not a denoiser checkpoint")
    model = Denoiser(DiffusionConfig.from_dict(meta["config"]))
    model.load_state_dict(
        {k[len("model.") :]: v for k, v in blobs.items() if k.startswith("model.")}
    )
    codec = SCMCodec(CodecConfig.from_dict(meta["codec_config"]))
    codec.load_state_dict(
        {k[len("codec.") :]: v for k, v in blobs.items() if k.startswith("codec.")}
    )
    return model, codec, meta


def cmd_diffusion_sample(args) -> int:
    model, codec, meta = _load_denoiser(args.model)
    sources = [int(s) for s in args.sources.split(",")]
    palette = default_palette()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for scene_seed in range(args.scenes):
        _, _, ctx = _scene_bundle(scene_seed, meta.get("difficulty", "sparse"),
                                  model.config.views_total)
        sv = scene_views(ctx)
        decoded = ddim_sample(
            model, codec, sv, sources, steps=args.ddim_steps, seed=args.seed,
            n_categories=len(palette.names),
        )
        scene_dir = out / f"scene_{scene_seed:03d}"
        scene_dir.mkdir(exist_ok=True)
        rows = []
        for vi in range(len(sv.views)):
            stem = f"view_{vi:03d}"
            fileio.save_color_png(scene_dir / f"{stem}.color.png", decoded["color"][vi])
            fileio.save_semantic_png(
                scene_dir / f"{stem}.semantic.png", decoded["semantic"][vi], palette
            )
            fileio.save_scm(
                scene_dir / f"{stem}.scm1",
                decoded["coords"][vi],
                np.ones(decoded["semantic"][vi].shape, dtype=bool),
            )
            if vi not in sources:
                rows.append(
                    {"view": vi, "psnr": psnr(decoded["color"][vi], sv.color[vi])}
                )
        target_psnr = float(np.mean([r["psnr"] for r in rows]))
        summaries.append({"scene": scene_seed, "target_psnr": target_psnr, "views": rows})
        print(f"scene {scene_seed}: target psnr {target_psnr:.2f} dB")
    _manifest(out, args, {"scenes": summaries})
    return 0


# ---------------------------------------------------------------------------
# pipeline / eval


def cmd_pipeline_run(args) -> int:
    layout = load_layout(args.layout)
    traj = load_trajectory(args.traj)
    if args.backend == "oracle":
        backend = OracleBackend(noise_sigma=args.noise_sigma)
    else:
        if not args.model:
            raise ValueError("--backend toy requires --model")
        model, codec, _ = _load_denoiser(args.model)
        backend = ToyDiffusionBackend(model=model, codec=codec, steps=args.ddim_steps)
    result = run_pipeline(
        layout,
        traj,
        backend,
        m_sources=args.sources,
        seed=args.seed,
        batch_size=args.batch_size,
        tau=args.tau,
        voxel=args.voxel,
        out_dir=args.out,
    )
    ctx = SceneContext.build(layout, traj.views)
    metrics = evaluate(result, ctx)
    out = Path(args.out)
    fileio.save_csv(out / "metrics.csv", metrics["views"])
    fileio.save_json(
        out / "metrics.json",
        {k: v for k, v in metrics.items() if k != "views"},
    )
    print(
        f"generated {len(result.view_maps)} views, fused {len(result.fused.cloud)} points, "
        f"chamfer {metrics['chamfer']:.4f} m"
    )
    return 0


def cmd_eval(args) -> int:
    gen_dir, ref_dir = Path(args.generated), Path(args.reference)
    names = sorted(p.name for p in gen_dir.rglob("*.color.png"))
    rows = []
    for name in names:
        gpath = next(gen_dir.rglob(name))
        matches = list(ref_dir.rglob(name))
        if not matches:
            continue
        a = fileio.load_color_png(gpath)
        b = fileio.load_color_png(matches[0])
        row = {"file": name, "psnr": psnr(a, b)}
        try:
            row["ssim"] = ssim(a, b)
        except ValueError:
            row["ssim"] = math.nan
        rows.append(row)
    summary: Dict[str, object] = {"pairs": len(rows)}
    if rows:
        finite = [r["psnr"] for r in rows if math.isfinite(r["psnr"])]
        summary["mean_psnr"] = float(np.mean(finite)) if finite else math.inf
    for ply_name in ("fused.ply", "cloud.ply"):
        g = sorted(gen_dir.rglob(ply_name))
        r = sorted(ref_dir.rglob(ply_name))
        if g and r:
            ga, rb = fileio.load_ply(g[0]), fileio.load_ply(r[0])
            summary["chamfer"] = chamfer(
                ga.positions, rb.positions, sample_n=args.chamfer_samples
            )
            break
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_csv(out / "metrics.csv", rows)
    _manifest(out, args, {"summary": summary})
    print(json.dumps(summary))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="scenesynth",
        description="Layout-guided synthetic indoor scene generation toolkit.",
    )
    root.add_argument("--threads", type=int, default=None,
                      help="cap internal parallelism (env SPATIALGEN_THREADS)")
    root.add_argument("--json-errors", action="store_true", dest="json_errors",
                      help="print failures as json on stdout")
    sub = root.add_subparsers(dest="command", required=True)

    layout = sub.add_parser("layout", help="scene layout operations").add_subparsers(
        dest="sub", required=True
    )
    p = layout.add_parser("validate", help="check schema and invariants")
    p.add_argument("file")
    p.set_defaults(func=cmd_layout_validate)
    p = layout.add_parser("filter", help="drop out-of-range or unplaced boxes")
    p.add_argument("file")
    p.add_argument("--min-edge", type=float, default=0.1)
    p.add_argument("--max-edge", type=float, default=1.8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_layout_filter)

    dataset = sub.add_parser("dataset", help="dataset curation").add_subparsers(
        dest="sub", required=True
    )
    p = dataset.add_parser("curate", help="accept/reject layouts in a directory")
    p.add_argument("dir")
    p.add_argument("--panoramas", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dataset_curate)

    synth = sub.add_parser("synth", help="synthetic scenes").add_subparsers(
        dest="sub", required=True
    )
    p = synth.add_parser("gen", help="generate a seeded scene layout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--difficulty", choices=("empty", "sparse", "cluttered"),
                   default="sparse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen)

    traj = sub.add_parser("traj", help="camera trajectories").add_subparsers(
        dest="sub", required=True
    )
    p = traj.add_parser("gen", help="generate a trajectory for a layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--pattern", required=True,
                   choices=("forward", "inward_orbit", "outward_orbit", "random_walk"))
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--spacing", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--size", type=int, default=32, help="square image size in px")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_traj_gen)

    p = sub.add_parser("raster", help="rasterize layout condition maps")
    p.add_argument("--layout", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_raster)

    p = sub.add_parser("pano2persp", help="perspective crop from a panorama")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--yaw", type=float, default=0.0, help="degrees")
    p.add_argument("--pitch", type=float, default=0.0, help="degrees")
    p.add_argument("--fov", type=float, default=90.0)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pano2persp)

    codec = sub.add_parser("codec", help="scene-coordinate codec").add_subparsers(
        dest="sub", required=True
    )
    p = codec.add_parser("train", help="train on a directory of .scm1 maps")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_codec_train)
    p = codec.add_parser("eval", help="reconstruction metrics on .scm1 maps")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_codec_eval)

    diff = sub.add_parser("diffusion", help="toy multi-view denoiser").add_subparsers(
        dest="sub", required=True
    )
    p = diff.add_parser("train", help="train on seeded synthetic scenes")
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="json overriding model defaults")
    p.add_argument("--difficulty", choices=("empty", "sparse", "cluttered"),
                   default="sparse")
    p.add_argument("--codec", default=None, help="existing codec checkpoint")
    p.add_argument("--codec-steps", type=int, default=150)
    p.add_argument("--stop-ratio", type=float, default=None)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffusion_train)
    p = diff.add_parser("sample", help="sample target views for seeded scenes")
    p.add_argument("--model", required=True)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--sources", default="0", help="comma-separated source views")
    p.add_argument("--steps", type=int, dest="ddim_steps", default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffusion_sample)

    pipe = sub.add_parser("pipeline", help="iterative dense-view generation").add_subparsers(
        dest="sub", required=True
    )
    p = pipe.add_parser("run", help="warp, generate, fuse over a trajectory")
    p.add_argument("--layout", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--sources", type=int, default=3, help="number of source views")
    p.add_argument("--backend", choices=("oracle", "toy"), default="oracle")
    p.add_argument("--model", default=None, help="denoiser checkpoint for --backend toy")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=warp_mod.DEFAULT_TAU)
    p.add_argument("--voxel", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--ddim-steps", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline_run)

    p = sub.add_parser("eval", help="compare two run directories")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--chamfer-samples", type=int, default=20000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return root


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    parallel.set_max_threads(parallel.resolve_thread_count(args.threads))
    try:
        return args.func(args)
    except Exception as exc:  # domain failure -> exit 1
        if args.json_errors:
            print(json.dumps({"error": str(exc), "type": type(exc).__name__}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
