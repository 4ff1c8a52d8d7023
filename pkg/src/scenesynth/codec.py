"""Scene-coordinate codec: frozen encoder, trainable confidence decoder.

The codec compresses world-coordinate maps 4x per side (3 conv levels) into a
small latent grid; the decoder reconstructs coordinates plus a per-pixel
confidence c = 1 + exp(raw), strictly greater than 1. Coordinates are
normalized per scene to a unit room cube before encoding (SceneNormalizer)
and denormalized after decoding.

Losses:
    loss_rec  = mean over valid pixels of  c * ||P_hat - P||_2 - alpha * log c
    loss_grad = sum over 4 scales (2x mean pooling between scales) of the mean
                Euclidean norm of the stacked x/y forward-difference residuals
                (edge-clamped: last column/row differences are zero)
    total     = loss_rec + lambda1 * loss_grad          (alpha = 0.2)

Only the decoder trains; encoder weights are fixed at init.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from scenesynth import autograd as ag
from scenesynth import rng as rng_mod
from scenesynth.layout import SceneLayout

__all__ = [
    "CodecConfig",
    "SceneNormalizer",
    "SCMCodec",
    "confidence_from_raw",
    "loss_rec",
    "loss_grad",
    "codec_total_loss",
    "train_codec",
    "CONF_FLOOR",
    "ALPHA",
]

ALPHA = 0.2  # weight of the -log c confidence regularizer

# 1 + exp(raw) underflows to exactly 1.0 below raw ~ -36.7 in float64; the
# one-ulp floor keeps the activation strictly above 1 everywhere. The input
# clip keeps exp finite (float64 overflows past ~709).
CONF_FLOOR = float(np.nextafter(1.0, 2.0))
RAW_CLIP = 700.0


@dataclass
class CodecConfig:
    latent_channels: int = 8
    hidden: int = 16
    alpha: float = ALPHA
    lambda1: float = 1.0
    lr: float = 1e-2
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "latent_channels": self.latent_channels,
            "hidden": self.hidden,
            "alpha": self.alpha,
            "lambda1": self.lambda1,
            "lr": self.lr,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "CodecConfig":
        return CodecConfig(**d)


@dataclass
class SceneNormalizer:
    """Maps world coordinates into a unit cube around the scene."""

    center: np.ndarray  # (3,)
    scale: float

    @staticmethod
    def from_layout(layout: SceneLayout) -> "SceneNormalizer":
        lo, hi = layout.bounds()
        center = (lo + hi) / 2.0
        scale = float(max(np.max(hi - lo) / 2.0, 1e-6))
        return SceneNormalizer(center=center, scale=scale)

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def to_dict(self) -> dict:
        return {"center": [float(v) for v in self.center], "scale": self.scale}

    @staticmethod
    def from_dict(d: dict) -> "SceneNormalizer":
        return SceneNormalizer(center=np.asarray(d["center"], dtype=np.float64), scale=float(d["scale"]))


def confidence_from_raw(raw: ag.Tensor) -> ag.Tensor:
    """c = 1 + exp(raw), floored one ulp above 1 (see CONF_FLOOR note)."""
    clipped = ag.clamp_min(-ag.clamp_min(-raw, -RAW_CLIP), -RAW_CLIP)
    return ag.clamp_min(ag.exp(clipped) + 1.0, CONF_FLOOR)


def _he_conv(gen: np.random.Generator, kh: int, kw: int, ci: int, co: int) -> np.ndarray:
    return gen.normal(size=(kh, kw, ci, co)) * math.sqrt(2.0 / (kh * kw * ci))


class SCMCodec:
    """f = 4 conv codec over normalized coordinate maps (NHWC float64)."""

    def __init__(self, config: Optional[CodecConfig] = None):
        self.config = config or CodecConfig()
        c = self.config
        gen = rng_mod.substream(c.seed, 101)
        h, zc = c.hidden, c.latent_channels
        # encoder (frozen plain arrays)
        self.enc_w = [
            _he_conv(gen, 3, 3, 3, h),
            _he_conv(gen, 3, 3, h, 2 * h),
            _he_conv(gen, 3, 3, 2 * h, zc),
        ]
        self.enc_b = [np.zeros(h), np.zeros(2 * h), np.zeros(zc)]
        # decoder (trainable)
        self.dec_w = [
            ag.parameter(_he_conv(gen, 3, 3, zc, 2 * h)),
            ag.parameter(_he_conv(gen, 3, 3, 2 * h, h)),
            ag.parameter(_he_conv(gen, 3, 3, h, h)),
            ag.parameter(_he_conv(gen, 3, 3, h, 4)),
        ]
        self.dec_b = [ag.parameter(np.zeros(2 * h)), ag.parameter(np.zeros(h)),
                      ag.parameter(np.zeros(h)), ag.parameter(np.zeros(4))]
        self.latent_scale = 1.0

    # -- encoder (no gradients ever) ---------------------------------------
    def encode(self, scm_norm: np.ndarray) -> np.ndarray:
        """(n, h, w, 3) or (h, w, 3) normalized coords -> (n, h/4, w/4, zc)."""
        x = np.asarray(scm_norm, dtype=np.float64)
        single = x.ndim == 3
        if single:
            x = x[None]
        t = ag.Tensor(x)
        t = ag.relu(ag.conv2d(t, ag.Tensor(self.enc_w[0]), ag.Tensor(self.enc_b[0]), stride=2, padding=1))
        t = ag.relu(ag.conv2d(t, ag.Tensor(self.enc_w[1]), ag.Tensor(self.enc_b[1]), stride=2, padding=1))
        t = ag.conv2d(t, ag.Tensor(self.enc_w[2]), ag.Tensor(self.enc_b[2]), stride=1, padding=1)
        out = t.data
        return out[0] if single else out

    # -- decoder -------------------------------------------------------------
    def decode(self, z: Union[np.ndarray, ag.Tensor]) -> Tuple[ag.Tensor, ag.Tensor]:
        """Latents (n, h/4, w/4, zc) -> (coords (n, h, w, 3), confidence (n, h, w))."""
        t = z if isinstance(z, ag.Tensor) else ag.Tensor(np.asarray(z, dtype=np.float64))
        if t.ndim == 3:
            t = ag.reshape(t, (1,) + t.shape)
        t = ag.relu(ag.conv2d(t, self.dec_w[0], self.dec_b[0], stride=1, padding=1))
        t = ag.upsample2x(t)
        t = ag.relu(ag.conv2d(t, self.dec_w[1], self.dec_b[1], stride=1, padding=1))
        t = ag.upsample2x(t)
        t = ag.relu(ag.conv2d(t, self.dec_w[2], self.dec_b[2], stride=1, padding=1))
        t = ag.conv2d(t, self.dec_w[3], self.dec_b[3], stride=1, padding=1)
        coords = t[:, :, :, 0:3]
        conf = confidence_from_raw(t[:, :, :, 3])
        return coords, conf

    def decode_np(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        single = np.asarray(z).ndim == 3
        coords, conf = self.decode(z)
        c, f = coords.data, conf.data
        return (c[0], f[0]) if single else (c, f)

    def decoder_params(self) -> List[ag.Tensor]:
        return list(self.dec_w) + list(self.dec_b)

    # -- checkpoint ----------------------------------------------------------
    def state_dict(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            out[f"enc.{i}.w"] = w
            out[f"enc.{i}.b"] = b
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            out[f"dec.{i}.w"] = w.data
            out[f"dec.{i}.b"] = b.data
        out["latent_scale"] = np.array([self.latent_scale])
        return out

    def load_state_dict(self, blobs: Dict[str, np.ndarray]) -> None:
        for i in range(len(self.enc_w)):
            self.enc_w[i] = np.asarray(blobs[f"enc.{i}.w"], dtype=np.float64)
            self.enc_b[i] = np.asarray(blobs[f"enc.{i}.b"], dtype=np.float64)
        for i in range(len(self.dec_w)):
            self.dec_w[i].data = np.asarray(blobs[f"dec.{i}.w"], dtype=np.float64)
            self.dec_b[i].data = np.asarray(blobs[f"dec.{i}.b"], dtype=np.float64)
        self.latent_scale = float(blobs["latent_scale"][0])


# ---------------------------------------------------------------------------
# losses


def _as_tensor(x) -> ag.Tensor:
    return x if isinstance(x, ag.Tensor) else ag.Tensor(np.asarray(x, dtype=np.float64))


def loss_rec(
    p_hat,
    p,
    conf,
    mask: Optional[np.ndarray] = None,
    alpha: float = ALPHA,
) -> ag.Tensor:
    """Confidence-weighted reconstruction: mean_valid(c * ||P_hat - P|| - alpha * log c)."""
    p_hat = _as_tensor(p_hat)
    p = _as_tensor(p)
    conf = _as_tensor(conf)
    res = ag.l2norm(p_hat - p, axis=-1)
    val = conf * res - alpha * ag.log(conf)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("loss_rec: empty validity mask")
        val = val[mask]
    return val.mean()


def loss_grad(p_hat, p, scales: int = 4) -> ag.Tensor:
    """Multi-scale forward-difference residual; see module docstring."""
    p_hat = _as_tensor(p_hat)
    p = _as_tensor(p)
    if p_hat.ndim == 3:
        p_hat = ag.reshape(p_hat, (1,) + p_hat.shape)
        p = ag.reshape(p, (1,) + p.shape)
    n, h, w, c = p_hat.shape
    need = 2 ** (scales - 1)
    if h % need or w % need:
        raise ValueError(f"loss_grad needs spatial dims divisible by {need}")
    total = None
    for s in range(scales):
        diff = p_hat - p
        dx = diff[:, :, 1:, :] - diff[:, :, :-1, :]
        dy = diff[:, 1:, :, :] - diff[:, :-1, :, :]
        hh, ww = p_hat.shape[1], p_hat.shape[2]
        zx = ag.Tensor(np.zeros((n, hh, 1, c)))
        zy = ag.Tensor(np.zeros((n, 1, ww, c)))
        dx_full = ag.concat([dx, zx], axis=2)
        dy_full = ag.concat([dy, zy], axis=1)
        res = ag.l2norm(ag.concat([dx_full, dy_full], axis=-1), axis=-1)
        term = res.mean()
        total = term if total is None else total + term
        if s + 1 < scales:
            p_hat = ag.avgpool2x(p_hat)
            p = ag.avgpool2x(p)
    return total


def codec_total_loss(
    p_hat,
    p,
    conf,
    mask: Optional[np.ndarray] = None,
    alpha: float = ALPHA,
    lambda1: float = 1.0,
) -> Tuple[ag.Tensor, ag.Tensor, ag.Tensor]:
    lrec = loss_rec(p_hat, p, conf, mask, alpha)
    lgrad = loss_grad(p_hat, p)
    return lrec + lambda1 * lgrad, lrec, lgrad


# ---------------------------------------------------------------------------
# training


def train_codec(
    scms_norm: np.ndarray,
    config: Optional[CodecConfig] = None,
    steps: int = 200,
    masks: Optional[np.ndarray] = None,
) -> Tuple[SCMCodec, List[dict]]:
    """Overfit the decoder on normalized coordinate maps (n, h, w, 3).

    Full-batch Adam on the decoder only; the frozen encoder is evaluated once.
    Returns the codec (latent_scale calibrated) and per-step log rows.
    """
    config = config or CodecConfig()
    codec = SCMCodec(config)
    data = np.asarray(scms_norm, dtype=np.float64)
    if data.ndim == 3:
        data = data[None]
    lat = codec.encode(data)  # constant: encoder is frozen
    opt = ag.Adam(codec.decoder_params(), lr=config.lr)
    log: List[dict] = []
    for step in range(steps):
        opt.zero_grad()
        coords, conf = codec.decode(lat)
        total, lrec, lgrad = codec_total_loss(
            coords, data, conf, masks, config.alpha, config.lambda1
        )
        total.backward()
        opt.step()
        log.append(
            {
                "step": step,
                "loss_rec": float(lrec.data),
                "loss_grad": float(lgrad.data),
                "total": float(total.data),
            }
        )
    codec.latent_scale = float(max(np.std(lat), 1e-6))
    return codec, log
