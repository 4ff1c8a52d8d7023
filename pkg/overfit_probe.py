"""Dev probe: full-length overfit trajectory + PSNR at checkpoints. Not part of the package."""
import json
import math
import sys
import time

import numpy as np

import scenesynth.autograd as ag
from scenesynth import codec as C
from scenesynth import diffusion as D
from scenesynth import pipeline as P
from scenesynth import synth
from scenesynth.fusion import psnr

MAX_STEPS = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

t_start = time.time()
layout = synth.gen_scene(5, difficulty="sparse")
from scenesynth.camera import gen_trajectory
traj = gen_trajectory(layout, "forward", 8, 5, width=32, height=32)
ctx = P.SceneContext.build(layout, traj.views)
sv = P.scene_views(ctx)
cdc, clog = C.train_codec(
    sv.normalizer.normalize(sv.scm), C.CodecConfig(lr=2e-2), steps=150, masks=sv.valid
)
print(f"codec ready {time.time()-t_start:.0f}s loss {clog[-1]['total']:.4f}", flush=True)

cfg = D.DiffusionConfig()
model = D.Denoiser(cfg)
opt = ag.Adam(model.parameters(), lr=cfg.lr)
lat0 = D.encode_scene_latents(sv, cdc, cfg, 68)

losses = []
rows = []
sources = [0, 3, 7]
targets = [v for v in range(8) if v not in sources]


def probe(tag, ks=(8,)):
    msg = [f"[{tag}] {time.time()-t_start:6.0f}s"]
    for k in ks:
        out = D.sample(model, cdc, sv, sources, steps=k, seed=7, n_categories=68)
        ps = [psnr(out["color"][v], sv.color[v]) for v in targets]
        sem_acc = float(np.mean([np.mean(out["semantic"][v] == sv.semantic[v]) for v in targets]))
        msg.append(f"K{k}: psnr {np.mean(ps):5.2f}/min {min(ps):5.2f} sem {sem_acc:.3f}")
    first10 = np.mean(losses[:10])
    last20 = np.mean(losses[-20:])
    msg.append(f"loss20 {last20:.4f} fall {first10/last20:5.1f}x")
    mod = rows[-1]
    msg.append(" ".join(f"{m}:{mod['loss_'+m]:.3f}" for m in D.MODALITIES if f"loss_{m}" in mod))
    gates = " ".join(
        f"g{m[0]}:{float(model.params[f'gate.{m}.w'].data @ D.schedule_features(0.2)) + float(model.params[f'gate.{m}.b'].data[0]):.2f}"
        for m in D.MODALITIES
    )
    msg.append(gates + f" (need {math.cos(math.pi*0.1)/math.sin(math.pi*0.1):.2f} at t=0.2)")
    print("  ".join(msg), flush=True)


warmup = max(1, min(20, MAX_STEPS // 10))
cache = {}
for step in range(MAX_STEPS):
    warm = min(1.0, (step + 1) / warmup)
    opt.lr = cfg.lr * warm * (0.1 + 0.45 * (1.0 + math.cos(math.pi * step / MAX_STEPS)))
    row = D.train_step(model, opt, sv, cdc, step, 68, lat0, cache)
    losses.append(row["loss"])
    rows.append(row)
    if (step + 1) % 100 == 0:
        probe(step + 1)

probe("final", ks=(8, 16))
with open("/tmp/overfit_losses.json", "w") as f:
    json.dump(losses, f)
print("done", flush=True)
