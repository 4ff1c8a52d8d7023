"""Multi-view, multi-modal latent diffusion with alternating attention.

Three modalities are denoised jointly for a set of camera views:

    color     rgb image patches, affine-mapped to [-1, 1]        (48 ch/token)
    semantic  one-hot category patches, mapped to {-1, +1}       (1088 ch/token)
    coord     scene-coordinate codec latents / latent_scale      (8 ch/token)

Images are 32x32 with 4x4 patch tokens, so every modality shares an 8x8
token grid per view. The denoiser is a stack of block pairs; each pair runs

    LN -> cross-view attention (per modality, tokens of all views)  + residual
    LN -> feed-forward                                              + residual
    LN -> cross-modal attention (per view, tokens of all modalities)+ residual
    LN -> feed-forward                                              + residual

There is no view positional encoding, so cross-view attention is equivariant
to view permutations; cross-view attention never mixes modalities and
cross-modal attention never mixes views (structural, bit-exact).

Noise schedule (v-parametrization), t in [0, 1]:

    alpha(t) = cos(pi t / 2)      sigma(t) = sin(pi t / 2)
    x_t = alpha x0 + sigma eps    v = alpha eps - sigma x0
    x0  = alpha x_t - sigma v     eps = sigma x_t + alpha v

Training: 8 views per scene, M in {1, 3, 7} source views per step, one shared
t per step. Target color streams and all semantic/coord streams are noised;
source color streams stay clean as conditioning and carry no loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scenesynth import autograd as ag
from scenesynth import rng as rng_mod
from scenesynth import warp as warp_mod
from scenesynth.camera import CameraView, plucker_map
from scenesynth.codec import SCMCodec, SceneNormalizer
from scenesynth.palette import CategoryPalette, default_palette
from scenesynth.raster import SCM, ViewMaps

__all__ = [
    "MODALITIES",
    "DiffusionConfig",
    "alpha_sigma",
    "add_noise",
    "v_target",
    "x0_from_v",
    "eps_from_v",
    "ddim_times",
    "patchify",
    "unpatchify",
    "encode_color",
    "decode_color",
    "encode_semantic",
    "decode_semantic",
    "encode_coord",
    "decode_coord",
    "time_embedding",
    "semantic_embedding_table",
    "build_conditioning",
    "cross_view_attention",
    "cross_modal_attention",
    "Denoiser",
    "SceneViews",
    "TrainingBatch",
    "make_training_batch",
    "train_step",
    "train_scenes",
    "train_overfit",
    "sample",
]

MODALITIES = ("color", "semantic", "coord")

SEM_EMBED_SEED = 2089  # fixed: the conditioning embedding is not learned


@dataclass
class DiffusionConfig:
    image_size: int = 32
    patch: int = 4
    d_model: int = 64
    n_heads: int = 4
    n_pairs: int = 4
    ffn_hidden: int = 256
    views_total: int = 8
    source_counts: Tuple[int, ...] = (1, 3, 7)
    t_embed_dim: int = 16
    sem_embed_dim: int = 16
    lr: float = 3e-3
    # color carries the fewest latent channels but the sharpest quality
    # target (PSNR), so it gets extra weight in the training objective
    loss_weights: Tuple[float, float, float] = (3.0, 1.0, 1.0)  # MODALITIES order
    seed: int = 0

    @property
    def tokens_per_view(self) -> int:
        return (self.image_size // self.patch) ** 2

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["source_counts"] = list(self.source_counts)
        d["loss_weights"] = list(self.loss_weights)
        return d

    @staticmethod
    def from_dict(d: dict) -> "DiffusionConfig":
        d = dict(d)
        d["source_counts"] = tuple(d["source_counts"])
        d["loss_weights"] = tuple(d["loss_weights"])
        return DiffusionConfig(**d)


# ---------------------------------------------------------------------------
# schedule


def alpha_sigma(t: float) -> Tuple[float, float]:
    return math.cos(math.pi * t / 2.0), math.sin(math.pi * t / 2.0)


def add_noise(x0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    a, s = alpha_sigma(t)
    return a * x0 + s * eps


def v_target(x0: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    a, s = alpha_sigma(t)
    return a * eps - s * x0


def x0_from_v(xt: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    a, s = alpha_sigma(t)
    return a * xt - s * v


def eps_from_v(xt: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    a, s = alpha_sigma(t)
    return s * xt + a * v


def ddim_times(steps: int) -> np.ndarray:
    """Descending grid t_i = 1 - i/steps, i = 0..steps (t_0 = 1, t_steps = 0)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return 1.0 - np.arange(steps + 1, dtype=np.float64) / steps


# ---------------------------------------------------------------------------
# latent packing (pure reshapes; exactly invertible)


def patchify(x: np.ndarray, patch: int) -> np.ndarray:
    """(v, h, w, c) -> (v, (h/p)*(w/p), p*p*c), patches row-major."""
    v, h, w, c = x.shape
    if h % patch or w % patch:
        raise ValueError("image size not divisible by patch")
    gh, gw = h // patch, w // patch
    out = x.reshape(v, gh, patch, gw, patch, c)
    out = out.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(out).reshape(v, gh * gw, patch * patch * c)


def unpatchify(tokens: np.ndarray, patch: int, h: int, w: int) -> np.ndarray:
    v, n, pc = tokens.shape
    gh, gw = h // patch, w // patch
    if n != gh * gw:
        raise ValueError("token count does not match image size")
    c = pc // (patch * patch)
    out = tokens.reshape(v, gh, gw, patch, patch, c)
    out = out.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(out).reshape(v, h, w, c)


def encode_color(rgb: np.ndarray, patch: int) -> np.ndarray:
    return patchify(np.asarray(rgb, dtype=np.float64) * 2.0 - 1.0, patch)


def decode_color(tokens: np.ndarray, patch: int, h: int, w: int) -> np.ndarray:
    return np.clip((unpatchify(tokens, patch, h, w) + 1.0) / 2.0, 0.0, 1.0)


def encode_semantic(sem: np.ndarray, patch: int, n_categories: int) -> np.ndarray:
    sem = np.asarray(sem)
    v, h, w = sem.shape
    onehot = np.zeros((v, h, w, n_categories), dtype=np.float64)
    vv, hh, ww = np.meshgrid(
        np.arange(v), np.arange(h), np.arange(w), indexing="ij"
    )
    onehot[vv, hh, ww, sem] = 1.0
    return patchify(onehot * 2.0 - 1.0, patch)


def decode_semantic(tokens: np.ndarray, patch: int, h: int, w: int) -> np.ndarray:
    scores = unpatchify(tokens, patch, h, w)
    return np.argmax(scores, axis=-1).astype(np.int32)


def encode_coord(
    scm_world: np.ndarray,
    codec: SCMCodec,
    normalizer: SceneNormalizer,
) -> np.ndarray:
    """(v, h, w, 3) world coords -> (v, (h/4)*(w/4), zc) scaled latents."""
    z = codec.encode(normalizer.normalize(scm_world))
    v, gh, gw, zc = z.shape
    return z.reshape(v, gh * gw, zc) / codec.latent_scale


def decode_coord(
    tokens: np.ndarray,
    codec: SCMCodec,
    normalizer: SceneNormalizer,
    h: int,
    w: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Latent tokens -> (world coords (v, h, w, 3), confidence (v, h, w))."""
    v, n, zc = tokens.shape
    gh, gw = h // 4, w // 4
    z = tokens.reshape(v, gh, gw, zc) * codec.latent_scale
    coords_norm, conf = codec.decode_np(z)
    return normalizer.denormalize(coords_norm), conf


# ---------------------------------------------------------------------------
# conditioning


def time_embedding(t: float, dim: int) -> np.ndarray:
    # t in [0, 1] is scaled to [0, 1000] so the geometric frequency ladder
    # spans fast-to-slow components over the unit interval; raw t would leave
    # every channel in the near-linear regime of sin.
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half, dtype=np.float64) / half)
    ang = (1000.0 * t) * freqs
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(ang)
    out[1::2] = np.cos(ang)
    return out


N_SCHEDULE_FEATURES = 6
_RATIO_CAP = 8.0


def schedule_features(t: float) -> np.ndarray:
    """Explicit schedule coefficients as conditioning scalars.

    The v target is (alpha/sigma) x_t - x0/sigma; exposing alpha, sigma and
    the (capped) ratios directly lets the network modulate its x_t readout
    without having to reconstruct these curves from sinusoids.
    """
    a, s = alpha_sigma(t)
    ra = min(a / s, _RATIO_CAP) / _RATIO_CAP if s > 0 else 1.0
    rs = min(s / a, _RATIO_CAP) / _RATIO_CAP if a > 0 else 1.0
    snr = math.log(a / s) if (s > 0 and a > 0) else math.copysign(6.0, 0.5 - t)
    return np.array([a, s, ra, rs, 2.0 * t - 1.0, max(-6.0, min(6.0, snr)) / 6.0])


def semantic_embedding_table(n_categories: int, dim: int) -> np.ndarray:
    """Fixed random category embedding shared by training and sampling."""
    gen = rng_mod.substream(SEM_EMBED_SEED, n_categories, dim)
    return gen.normal(size=(n_categories, dim))


def build_conditioning(
    views: Sequence[CameraView],
    layout_sem: np.ndarray,
    layout_scm_norm: np.ndarray,
    t: float,
    source_flags: np.ndarray,
    config: DiffusionConfig,
    n_categories: int,
    warp_rgb: Optional[np.ndarray] = None,
    warp_cov: Optional[np.ndarray] = None,
    layout_coord_lat: Optional[np.ndarray] = None,
) -> Dict[str, np.ndarray]:
    """Per-modality condition tokens, (v, tokens, channels), no gradients.

    Common block: layout semantics via the fixed category embedding, layout
    coordinates (normalized), the layout coordinates as seen by the frozen
    coord codec (so the coord target is readable without emulating the
    encoder), Plucker rays at patch centers, the source flag, and the
    sinusoidal time embedding plus explicit schedule features. The color
    modality additionally sees warped source color and its coverage; zeros
    when no warp is available.
    """
    p = config.patch
    nv = len(views)
    h = w = config.image_size
    nt = config.tokens_per_view

    table = semantic_embedding_table(n_categories, config.sem_embed_dim)
    sem_emb = table[np.asarray(layout_sem)]  # (v, h, w, e)
    sem_tok = patchify(sem_emb, p)
    scm_tok = patchify(np.asarray(layout_scm_norm, dtype=np.float64), p)

    if layout_coord_lat is None:
        coord_lat = np.zeros((nv, nt, Denoiser.LATENT_CH["coord"]))
    else:
        coord_lat = np.asarray(layout_coord_lat, dtype=np.float64)

    plucker = np.stack([plucker_map(view, stride=p) for view in views])
    plucker = plucker.reshape(nv, nt, 6)

    flag = np.repeat(
        np.asarray(source_flags, dtype=np.float64).reshape(nv, 1, 1), nt, axis=1
    )
    temb = np.broadcast_to(time_embedding(t, config.t_embed_dim), (nv, nt, config.t_embed_dim))
    sched = np.broadcast_to(schedule_features(t), (nv, nt, N_SCHEDULE_FEATURES))

    common = np.concatenate([sem_tok, scm_tok, coord_lat, plucker, flag, temb, sched], axis=-1)

    if warp_rgb is None:
        wr = np.zeros((nv, nt, 3 * p * p))
        wc = np.zeros((nv, nt, p * p))
    else:
        wr = patchify(np.asarray(warp_rgb, dtype=np.float64), p)
        wc = patchify(np.asarray(warp_cov, dtype=np.float64)[..., None], p)

    return {
        "color": np.concatenate([common, wr, wc], axis=-1),
        "semantic": common,
        "coord": common,
    }


# ---------------------------------------------------------------------------
# attention ops


@dataclass
class AttnParams:
    wq: ag.Tensor
    wk: ag.Tensor
    wv: ag.Tensor
    wo: ag.Tensor
    bq: ag.Tensor
    bk: ag.Tensor
    bv: ag.Tensor
    bo: ag.Tensor

    def tensors(self) -> List[ag.Tensor]:
        return [self.wq, self.wk, self.wv, self.wo, self.bq, self.bk, self.bv, self.bo]


def _mha(x: ag.Tensor, p: AttnParams, n_heads: int) -> ag.Tensor:
    """Scaled dot-product attention over the middle axis of (b, l, d)."""
    b, l, d = x.shape
    dh = d // n_heads

    def split(t: ag.Tensor) -> ag.Tensor:
        t = ag.reshape(t, (b, l, n_heads, dh))
        return ag.transpose(t, (0, 2, 1, 3))

    q = split(ag.matmul(x, p.wq) + p.bq)
    k = split(ag.matmul(x, p.wk) + p.bk)
    v = split(ag.matmul(x, p.wv) + p.bv)
    out = ag.attention(q, k, v, 1.0 / math.sqrt(dh))
    out = ag.reshape(ag.transpose(out, (0, 2, 1, 3)), (b, l, d))
    return ag.matmul(out, p.wo) + p.bo


def cross_view_attention(x: ag.Tensor, params: AttnParams, n_heads: int) -> ag.Tensor:
    """(modalities, views, tokens, d): attend across all views per modality.

    Modalities ride in the batch axis and never mix.
    """
    m, v, t, d = x.shape
    flat = ag.reshape(x, (m, v * t, d))
    out = _mha(flat, params, n_heads)
    return ag.reshape(out, (m, v, t, d))


def cross_modal_attention(x: ag.Tensor, params: AttnParams, n_heads: int) -> ag.Tensor:
    """(modalities, views, tokens, d): attend across all modalities per view.

    Views ride in the batch axis and never mix.
    """
    m, v, t, d = x.shape
    swapped = ag.transpose(x, (1, 0, 2, 3))
    flat = ag.reshape(swapped, (v, m * t, d))
    out = _mha(flat, params, n_heads)
    out = ag.reshape(out, (v, m, t, d))
    return ag.transpose(out, (1, 0, 2, 3))


@dataclass
class FFNParams:
    w1: ag.Tensor
    b1: ag.Tensor
    w2: ag.Tensor
    b2: ag.Tensor

    def tensors(self) -> List[ag.Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]


def _ffn(x: ag.Tensor, p: FFNParams) -> ag.Tensor:
    return ag.matmul(ag.relu(ag.matmul(x, p.w1) + p.b1), p.w2) + p.b2


# ---------------------------------------------------------------------------
# denoiser


def _norm_init(gen: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return gen.normal(size=(fan_in, fan_out)) * math.sqrt(1.0 / fan_in)


class Denoiser:
    """Alternating-attention v-predictor over packed modality latents."""

    LATENT_CH = {"color": 48, "semantic": 1088, "coord": 8}

    def __init__(self, config: Optional[DiffusionConfig] = None):
        self.config = config or DiffusionConfig()
        c = self.config
        gen = rng_mod.substream(c.seed, 201)
        d = c.d_model
        p2 = c.patch * c.patch
        common = (
            c.sem_embed_dim * p2
            + 3 * p2
            + self.LATENT_CH["coord"]
            + 6
            + 1
            + c.t_embed_dim
            + N_SCHEDULE_FEATURES
        )
        self.cond_ch = {
            "color": common + 3 * p2 + p2,  # + warped rgb + coverage
            "semantic": common,
            "coord": common,
        }
        self.params: Dict[str, ag.Tensor] = {}

        def par(name: str, arr: np.ndarray) -> ag.Tensor:
            t = ag.parameter(arr)
            self.params[name] = t
            return t

        self.in_w = {
            m: par(f"in.{m}.w", _norm_init(gen, self.LATENT_CH[m] + self.cond_ch[m], d))
            for m in MODALITIES
        }
        self.in_b = {m: par(f"in.{m}.b", np.zeros(d)) for m in MODALITIES}

        def attn(prefix: str) -> AttnParams:
            return AttnParams(
                wq=par(f"{prefix}.wq", _norm_init(gen, d, d)),
                wk=par(f"{prefix}.wk", _norm_init(gen, d, d)),
                wv=par(f"{prefix}.wv", _norm_init(gen, d, d)),
                wo=par(f"{prefix}.wo", _norm_init(gen, d, d)),
                bq=par(f"{prefix}.bq", np.zeros(d)),
                bk=par(f"{prefix}.bk", np.zeros(d)),
                bv=par(f"{prefix}.bv", np.zeros(d)),
                bo=par(f"{prefix}.bo", np.zeros(d)),
            )

        def ffn(prefix: str) -> FFNParams:
            return FFNParams(
                w1=par(f"{prefix}.w1", _norm_init(gen, d, c.ffn_hidden)),
                b1=par(f"{prefix}.b1", np.zeros(c.ffn_hidden)),
                w2=par(f"{prefix}.w2", _norm_init(gen, c.ffn_hidden, d)),
                b2=par(f"{prefix}.b2", np.zeros(d)),
            )

        def ln(prefix: str) -> Tuple[ag.Tensor, ag.Tensor]:
            return par(f"{prefix}.g", np.ones(d)), par(f"{prefix}.b", np.zeros(d))

        self.blocks = []
        for i in range(c.n_pairs):
            self.blocks.append(
                {
                    "ln1": ln(f"blk{i}.ln1"),
                    "cv": attn(f"blk{i}.cv"),
                    "ln2": ln(f"blk{i}.ln2"),
                    "ffa": ffn(f"blk{i}.ffa"),
                    "ln3": ln(f"blk{i}.ln3"),
                    "cm": attn(f"blk{i}.cm"),
                    "ln4": ln(f"blk{i}.ln4"),
                    "ffb": ffn(f"blk{i}.ffb"),
                }
            )
        self.out_ln = {m: ln(f"out.{m}.ln") for m in MODALITIES}
        # zero head: the initial predictor is exactly the gate path g(t) x_t,
        # so early steps train the x0 readout instead of un-noising a random
        # head amplified by the x0 coefficient below
        self.out_w = {
            m: par(f"out.{m}.w", np.zeros((d, self.LATENT_CH[m]))) for m in MODALITIES
        }
        self.out_b = {m: par(f"out.{m}.b", np.zeros(self.LATENT_CH[m])) for m in MODALITIES}
        # learned per-token output prior, shared across views: captures the
        # grid-position component of x0 (floor low, ceiling high, ...) without
        # touching view-permutation equivariance
        self.out_pos = {
            m: par(f"out.{m}.pos", np.zeros((c.tokens_per_view, self.LATENT_CH[m])))
            for m in MODALITIES
        }
        # Per-modality scalar gate on the noisy input, linear in the schedule
        # features. v = (alpha/sigma) x_t - (1/sigma) x0 needs an x_t readout
        # whose gain tracks alpha/sigma; routing that through the d-dim trunk
        # is rank-limited (semantic latents alone are wider than d), so the
        # identity path is explicit. With gate g the remainder is
        # -(sigma + g alpha) x0 + (alpha - g sigma) eps; the forward pass
        # multiplies the trunk head by that bounded x0 coefficient, leaving
        # the head a unit-scale x0 readout. The gate starts at the capped
        # ratio feature (its optimum, which zeroes the eps term wherever the
        # ratio cap is not binding); zeroing every weight still zeroes v.
        gate_init = np.zeros(N_SCHEDULE_FEATURES)
        gate_init[2] = _RATIO_CAP  # times ra = min(alpha/sigma, cap)
        self.gate_w = {m: par(f"gate.{m}.w", gate_init.copy()) for m in MODALITIES}
        self.gate_b = {m: par(f"gate.{m}.b", np.zeros(1)) for m in MODALITIES}
        # the coord conditioning latents equal the coord x0 target up to
        # raster noise, so the coord head gets a scalar-gated copy path;
        # its optimum (and init) is 1. Slice bounds into the common block:
        self._coord_lat_lo = c.sem_embed_dim * p2 + 3 * p2
        self._coord_lat_hi = self._coord_lat_lo + self.LATENT_CH["coord"]
        self.skip_coord = par("skip.coord", np.ones(1))
        # warped source color is the color x0 target wherever coverage is 1
        # (shading here is view independent), so the color head gets the same
        # kind of copy path: coverage-masked warp re-encoded to latent range.
        # Starts at 0 because the copy is only conditionally right (holes).
        self.skip_color = par("skip.color", np.zeros(1))

    def parameters(self) -> List[ag.Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def forward(
        self,
        latents: Dict[str, ag.Tensor],
        cond: Dict[str, np.ndarray],
    ) -> Dict[str, ag.Tensor]:
        """latents: modality -> (views, tokens, ch). Returns predicted v."""
        c = self.config
        proj = []
        lat_in: Dict[str, ag.Tensor] = {}
        for m in MODALITIES:
            lat = latents[m] if isinstance(latents[m], ag.Tensor) else ag.Tensor(latents[m])
            lat_in[m] = lat
            x = ag.concat([lat, ag.Tensor(np.asarray(cond[m], dtype=np.float64))], axis=-1)
            x = ag.matmul(x, self.in_w[m]) + self.in_b[m]
            proj.append(ag.reshape(x, (1,) + x.shape))
        x = ag.concat(proj, axis=0)  # (modalities, views, tokens, d)

        def lnorm(t: ag.Tensor, gb) -> ag.Tensor:
            return ag.layernorm(t, gb[0], gb[1])

        for blk in self.blocks:
            x = x + cross_view_attention(lnorm(x, blk["ln1"]), blk["cv"], c.n_heads)
            x = x + _ffn(lnorm(x, blk["ln2"]), blk["ffa"])
            x = x + cross_modal_attention(lnorm(x, blk["ln3"]), blk["cm"], c.n_heads)
            x = x + _ffn(lnorm(x, blk["ln4"]), blk["ffb"])

        # schedule features ride at the tail of the coord/semantic condition
        # block (build_conditioning appends them last before warp channels)
        sched = np.asarray(cond["coord"][0, 0, -N_SCHEDULE_FEATURES:], dtype=np.float64)
        sched_t = ag.Tensor(sched.reshape(1, N_SCHEDULE_FEATURES))
        g_cap = _RATIO_CAP * sched[2]  # min(alpha/sigma, cap)
        x0_coef = sched[1] + g_cap * sched[0]  # in [1, cap + eps]; never vanishes

        out: Dict[str, ag.Tensor] = {}
        for i, m in enumerate(MODALITIES):
            y = lnorm(x[i], self.out_ln[m])
            head = ag.matmul(y, self.out_w[m]) + self.out_b[m] + self.out_pos[m]
            if m == "coord":
                lat_cond = ag.Tensor(
                    np.asarray(
                        cond["coord"][:, :, self._coord_lat_lo : self._coord_lat_hi],
                        dtype=np.float64,
                    )
                )
                head = head + ag.reshape(self.skip_coord, (1, 1, 1)) * lat_cond
            elif m == "color":
                p2 = c.patch * c.patch
                cc = np.asarray(cond["color"], dtype=np.float64)
                wr = cc[:, :, -4 * p2 : -p2]  # warped rgb, pixel-major
                wc = cc[:, :, -p2:]  # coverage
                nv, nt = wr.shape[:2]
                masked = wc[..., None] * (2.0 * wr.reshape(nv, nt, p2, 3) - 1.0)
                head = head + ag.reshape(self.skip_color, (1, 1, 1)) * ag.Tensor(
                    masked.reshape(nv, nt, 3 * p2)
                )
            gate = ag.matmul(sched_t, ag.reshape(self.gate_w[m], (N_SCHEDULE_FEATURES, 1)))
            gate = ag.reshape(gate + self.gate_b[m], (1, 1, 1))
            out[m] = gate * lat_in[m] - x0_coef * head
        return out

    # -- checkpoint ----------------------------------------------------------
    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_state_dict(self, blobs: Dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            t.data = np.asarray(blobs[k], dtype=np.float64)


# ---------------------------------------------------------------------------
# training protocol


@dataclass
class SceneViews:
    """One training scene: cameras plus rendered maps, all length views_total."""

    views: List[CameraView]
    color: np.ndarray  # (v, h, w, 3) in [0, 1]
    semantic: np.ndarray  # (v, h, w) int
    scm: np.ndarray  # (v, h, w, 3) world coords
    valid: np.ndarray  # (v, h, w) bool
    normalizer: SceneNormalizer
    layout_sem: np.ndarray  # condition maps (here: the same layout render)
    layout_scm: np.ndarray


@dataclass
class TrainingBatch:
    x_t: Dict[str, np.ndarray]
    v_tgt: Dict[str, np.ndarray]
    lat0: Dict[str, np.ndarray]
    loss_mask: Dict[str, np.ndarray]  # (views,) bool per modality
    cond: Dict[str, np.ndarray]
    t: float
    source_indices: np.ndarray
    m_sources: int


def _warp_from_sources(
    scene: SceneViews, source_indices: np.ndarray, radius_px: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Splat source-view color (at layout geometry) into every view."""
    cloud = warp_mod.empty_cloud()
    for si in source_indices:
        si = int(si)
        maps = ViewMaps(
            color=scene.color[si],
            semantic=scene.semantic[si],
            scm=SCM(values=scene.layout_scm[si], valid=scene.valid[si]),
        )
        cloud = warp_mod.insert_scm(cloud, maps, view_index=si)
    nv, h, w = scene.semantic.shape
    rgb = np.zeros((nv, h, w, 3))
    cov = np.zeros((nv, h, w))
    for vi, view in enumerate(scene.views):
        out = warp_mod.splat(cloud, view, radius_px=radius_px)
        rgb[vi] = out.color
        cov[vi] = out.warp_coverage
    return rgb, cov


def encode_scene_latents(
    scene: SceneViews, codec: SCMCodec, config: DiffusionConfig, n_categories: int
) -> Dict[str, np.ndarray]:
    return {
        "color": encode_color(scene.color, config.patch),
        "semantic": encode_semantic(scene.semantic, config.patch, n_categories),
        "coord": encode_coord(scene.scm, codec, scene.normalizer),
    }


def make_training_batch(
    scene: SceneViews,
    codec: SCMCodec,
    config: DiffusionConfig,
    gen: np.random.Generator,
    n_categories: int,
    lat0: Optional[Dict[str, np.ndarray]] = None,
    t_bin: Optional[Tuple[int, int]] = None,
    cache: Optional[dict] = None,
) -> TrainingBatch:
    """Sample sources, the shared t, and per-stream noise for one step.

    t_bin = (k, n) confines the shared t to the k-th of n equal bins; the
    training loop cycles bins so the t marginal stays uniform while the
    step-to-step loss variance drops. cache, when given, memoizes the
    per-scene conditioning pieces (normalized layout, coord latents, warp
    splats per source set); entries are pure functions of the scene.
    """
    nv = len(scene.views)
    if nv != config.views_total:
        raise ValueError(f"scene has {nv} views, protocol expects {config.views_total}")
    m = int(gen.choice(np.asarray(config.source_counts)))
    perm = gen.permutation(nv)
    sources = np.sort(perm[:m])
    is_source = np.zeros(nv, dtype=bool)
    is_source[sources] = True
    u = float(gen.uniform(0.0, 1.0))
    if t_bin is None:
        t = u
    else:
        k, n = t_bin
        t = (k % n + u) / n

    if lat0 is None:
        lat0 = encode_scene_latents(scene, codec, config, n_categories)

    x_t: Dict[str, np.ndarray] = {}
    v_tgt: Dict[str, np.ndarray] = {}
    loss_mask: Dict[str, np.ndarray] = {}
    for mod in MODALITIES:
        x0 = lat0[mod]
        eps = gen.normal(size=x0.shape)
        noised = add_noise(x0, eps, t)
        target = v_target(x0, eps, t)
        if mod == "color":
            # source color is clean conditioning, not a denoising target
            noised = noised.copy()
            noised[is_source] = x0[is_source]
            mask = ~is_source
        else:
            mask = np.ones(nv, dtype=bool)
        x_t[mod] = noised
        v_tgt[mod] = target
        loss_mask[mod] = mask

    cache = {} if cache is None else cache
    key = ("warp",) + tuple(int(i) for i in sources)
    if key not in cache:
        cache[key] = _warp_from_sources(scene, sources)
    warp_rgb, warp_cov = cache[key]
    if "scm_norm" not in cache:
        cache["scm_norm"] = scene.normalizer.normalize(scene.layout_scm)
        cache["coord_lat"] = encode_coord(scene.layout_scm, codec, scene.normalizer)
    cond = build_conditioning(
        scene.views,
        scene.layout_sem,
        cache["scm_norm"],
        t,
        is_source.astype(np.float64),
        config,
        n_categories,
        warp_rgb=warp_rgb,
        warp_cov=warp_cov,
        layout_coord_lat=cache["coord_lat"],
    )
    return TrainingBatch(
        x_t=x_t,
        v_tgt=v_tgt,
        lat0=lat0,
        loss_mask=loss_mask,
        cond=cond,
        t=t,
        source_indices=sources,
        m_sources=m,
    )


def batch_loss(model: Denoiser, batch: TrainingBatch) -> Tuple[ag.Tensor, Dict[str, float]]:
    """Weighted sum over modalities of the MSE over that modality's noised streams.

    per-modality entries in the returned dict stay unweighted for logging.
    """
    pred = model.forward({m: ag.Tensor(batch.x_t[m]) for m in MODALITIES}, batch.cond)
    weights = dict(zip(MODALITIES, model.config.loss_weights))
    total = None
    per_mod: Dict[str, float] = {}
    for m in MODALITIES:
        mask = batch.loss_mask[m]
        diff = pred[m][mask] - batch.v_tgt[m][mask]
        term = ag.square(diff).mean()
        per_mod[m] = float(term.data)
        term = weights[m] * term
        total = term if total is None else total + term
    return total, per_mod


T_STRATA = 10  # shared-t bins cycled by step; 10 keeps 10-step loss means unbiased


def train_step(
    model: Denoiser,
    opt: ag.Adam,
    scene: SceneViews,
    codec: SCMCodec,
    step: int,
    n_categories: int,
    lat0: Optional[Dict[str, np.ndarray]] = None,
    cache: Optional[dict] = None,
) -> dict:
    gen = rng_mod.substream(model.config.seed, 301, step)
    batch = make_training_batch(
        scene, codec, model.config, gen, n_categories, lat0,
        t_bin=(step % T_STRATA, T_STRATA), cache=cache,
    )
    opt.zero_grad()
    total, per_mod = batch_loss(model, batch)
    total.backward()
    opt.step()
    return {
        "step": step,
        "loss": float(total.data),
        "m_sources": batch.m_sources,
        "t": batch.t,
        "source_indices": batch.source_indices.tolist(),
        **{f"loss_{m}": v for m, v in per_mod.items()},
    }


def train_scenes(
    scenes: Sequence[SceneViews],
    codec: SCMCodec,
    config: Optional[DiffusionConfig] = None,
    max_steps: int = 2000,
    n_categories: Optional[int] = None,
    stop_ratio: Optional[float] = None,
    log_every: int = 0,
) -> Tuple[Denoiser, List[dict]]:
    """Train the denoiser, cycling through scenes; optional loss-ratio stop.

    stop_ratio compares the mean of the first 10 losses to the mean of the
    latest 10 and stops once the fall exceeds the ratio.
    """
    config = config or DiffusionConfig()
    if n_categories is None:
        n_categories = len(default_palette().names)
    model = Denoiser(config)
    opt = ag.Adam(model.parameters(), lr=config.lr)
    lat0 = [encode_scene_latents(s, codec, config, n_categories) for s in scenes]
    caches: List[dict] = [{} for _ in scenes]
    log: List[dict] = []
    warmup = max(1, min(20, max_steps // 10))
    for step in range(max_steps):
        # linear warmup then cosine decay to 10% of the peak rate; the floor
        # keeps late steps moving on fine detail instead of freezing
        warm = min(1.0, (step + 1) / warmup)
        opt.lr = config.lr * warm * (0.1 + 0.45 * (1.0 + math.cos(math.pi * step / max_steps)))
        k = step % len(scenes)
        row = train_step(model, opt, scenes[k], codec, step, n_categories, lat0[k], caches[k])
        row["scene"] = k
        log.append(row)
        if log_every and step % log_every == 0:
            print(f"step {step:5d} loss {row['loss']:.6f}", flush=True)
        if stop_ratio is not None and len(log) >= 20:
            head = float(np.mean([r["loss"] for r in log[:10]]))
            tail = float(np.mean([r["loss"] for r in log[-10:]]))
            if tail > 0 and head / tail >= stop_ratio:
                break
    return model, log


def train_overfit(
    scene: SceneViews,
    codec: SCMCodec,
    config: Optional[DiffusionConfig] = None,
    max_steps: int = 2000,
    n_categories: Optional[int] = None,
    stop_ratio: Optional[float] = None,
    log_every: int = 0,
) -> Tuple[Denoiser, List[dict]]:
    """Single-scene memorization; the toy end-to-end learning check."""
    return train_scenes(
        [scene], codec, config, max_steps, n_categories, stop_ratio, log_every
    )


# ---------------------------------------------------------------------------
# sampling


def sample(
    model: Denoiser,
    codec: SCMCodec,
    scene: SceneViews,
    source_indices: Sequence[int],
    steps: int,
    seed: int,
    n_categories: int,
    warp_rgb: Optional[np.ndarray] = None,
    warp_cov: Optional[np.ndarray] = None,
) -> Dict[str, np.ndarray]:
    """Deterministic DDIM sampling conditioned on the given source views.

    Source color streams are held at their clean encoding for every step;
    all other streams start from pure noise at t = 1. Warp conditioning
    defaults to splatting the source views themselves (as in training) but
    callers may pass maps splatted from an accumulated cloud. Returns decoded
    maps for every view: color, semantic, coords, confidence.
    """
    config = model.config
    nv = len(scene.views)
    sources = np.sort(np.asarray(source_indices, dtype=int))
    is_source = np.zeros(nv, dtype=bool)
    is_source[sources] = True
    h = w = config.image_size

    color_clean = encode_color(scene.color, config.patch)
    gen = rng_mod.substream(seed, 401)
    x: Dict[str, np.ndarray] = {}
    for mod in MODALITIES:  # fixed order keeps the draw sequence stable
        shape = (nv, config.tokens_per_view, Denoiser.LATENT_CH[mod])
        x[mod] = gen.normal(size=shape)
    x["color"][is_source] = color_clean[is_source]

    if warp_rgb is None:
        warp_rgb, warp_cov = _warp_from_sources(scene, sources)
    layout_scm_norm = scene.normalizer.normalize(scene.layout_scm)
    layout_coord_lat = encode_coord(scene.layout_scm, codec, scene.normalizer)
    times = ddim_times(steps)
    for i in range(steps):
        t_cur, t_next = float(times[i]), float(times[i + 1])
        cond = build_conditioning(
            scene.views,
            scene.layout_sem,
            layout_scm_norm,
            t_cur,
            is_source.astype(np.float64),
            config,
            n_categories,
            warp_rgb=warp_rgb,
            warp_cov=warp_cov,
            layout_coord_lat=layout_coord_lat,
        )
        pred = model.forward({m: ag.Tensor(x[m]) for m in MODALITIES}, cond)
        for mod in MODALITIES:
            v = pred[mod].data
            x0 = x0_from_v(x[mod], v, t_cur)
            eps = eps_from_v(x[mod], v, t_cur)
            a, s = alpha_sigma(t_next)
            x[mod] = a * x0 + s * eps
        x["color"][is_source] = color_clean[is_source]

    coords, conf = decode_coord(x["coord"], codec, scene.normalizer, h, w)
    return {
        "color": decode_color(x["color"], config.patch, h, w),
        "semantic": decode_semantic(x["semantic"], config.patch, h, w),
        "coords": coords,
        "confidence": conf,
        "source_indices": sources,
    }
