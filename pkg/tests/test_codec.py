"""Codec loss oracles with frozen expected values, FD gradient checks, and
frozen-encoder / training behavior."""
import math

import numpy as np
import pytest

import scenesynth.autograd as ag
from scenesynth import codec as C
from scenesynth import rng


# --- frozen-value oracles ----------------------------------------------------


def test_loss_rec_frozen_value():
    """loss_rec(P, P, c=2) = -alpha * ln 2 with alpha = 0.2."""
    gen = rng.substream(0, 61)
    p = gen.uniform(-1, 1, size=(8, 8, 3))
    conf = np.full((8, 8), 2.0)
    val = C.loss_rec(p, p, conf).item()
    assert val == pytest.approx(-0.2 * math.log(2.0), abs=1e-12)


def test_loss_rec_masked_mean():
    gen = rng.substream(0, 62)
    p = gen.uniform(-1, 1, size=(4, 4, 3))
    q = p.copy()
    q[0, 0] += 1.0  # only pixel (0,0) differs
    conf = np.ones((4, 4)) * 3.0
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, 0] = True
    # single valid pixel: c*||d|| - alpha*log c with ||d|| = sqrt(3)
    expect = 3.0 * math.sqrt(3.0) - 0.2 * math.log(3.0)
    assert C.loss_rec(q, p, conf, mask=mask).item() == pytest.approx(expect, abs=1e-12)


def test_loss_rec_empty_mask_raises():
    p = np.zeros((2, 2, 3))
    with pytest.raises(ValueError):
        C.loss_rec(p, p, np.ones((2, 2)), mask=np.zeros((2, 2), dtype=bool))


def test_loss_grad_zero_for_identical():
    gen = rng.substream(0, 63)
    p = gen.uniform(-1, 1, size=(16, 16, 3))
    assert C.loss_grad(p, p).item() == 0.0


def test_loss_grad_ramp_closed_form():
    """Linear ramp residual: L = sum_s a * 2^s * sqrt(3) * (W_s - 1) / W_s."""
    a = 0.01
    w = 32
    x = np.arange(w, dtype=np.float64)
    ramp = np.broadcast_to(x[None, :, None] * a, (w, w, 3)).copy()
    p = np.zeros((w, w, 3))
    got = C.loss_grad(ramp + p, p).item()
    expect = sum(a * 2**s * math.sqrt(3.0) * ((w // 2**s) - 1) / (w // 2**s) for s in range(4))
    assert got == pytest.approx(expect, abs=1e-12)


def test_loss_grad_dims_must_divide():
    p = np.zeros((12, 12, 3))
    with pytest.raises(ValueError):
        C.loss_grad(p, p)


def test_total_loss_combination():
    gen = rng.substream(0, 64)
    p = gen.uniform(-1, 1, size=(8, 8, 3))
    q = p + gen.normal(0, 0.1, size=p.shape)
    conf = np.exp(gen.normal(size=(8, 8))) + 1.0
    total, lrec, lgrad = C.codec_total_loss(q, p, conf, lambda1=0.7)
    assert total.item() == pytest.approx(lrec.item() + 0.7 * lgrad.item(), rel=1e-12)


# --- gradients ---------------------------------------------------------------


def central_diff(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat, gf = x.ravel(), g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-10)
    return np.max(np.abs(a - b) / denom)


def test_loss_rec_gradients_fd():
    gen = rng.substream(0, 65)
    for _ in range(4):
        p = gen.uniform(-1, 1, size=(4, 4, 3))
        ph = p + gen.normal(0, 0.2, size=p.shape)
        raw = gen.normal(size=(4, 4))
        tp = ag.parameter(ph.copy())
        tr = ag.parameter(raw.copy())
        loss = C.loss_rec(tp, ag.constant(p), C.confidence_from_raw(tr))
        loss.backward()
        num_p = central_diff(
            lambda: C.loss_rec(tp.data, p, C.confidence_from_raw(ag.constant(tr.data)).data).item(),
            tp.data,
        )
        num_r = central_diff(
            lambda: C.loss_rec(tp.data, p, C.confidence_from_raw(ag.constant(tr.data)).data).item(),
            tr.data,
        )
        assert rel_err(tp.grad, num_p) < 1e-3
        assert rel_err(tr.grad, num_r) < 1e-3


def test_loss_grad_gradients_fd():
    gen = rng.substream(0, 66)
    p = gen.uniform(-1, 1, size=(8, 8, 3))
    ph = p + gen.normal(0, 0.3, size=p.shape)
    tp = ag.parameter(ph.copy())
    C.loss_grad(tp, ag.constant(p)).backward()
    num = central_diff(lambda: C.loss_grad(tp.data, p).item(), tp.data)
    assert rel_err(tp.grad, num) < 1e-3


# --- confidence activation ---------------------------------------------------


def test_confidence_strictly_above_one():
    raw = np.linspace(-1e3, 1e3, 20001)
    c = C.confidence_from_raw(ag.constant(raw)).data
    assert np.all(c > 1.0)
    assert np.all(np.isfinite(c))


def test_confidence_monotone_and_floor():
    raw = np.array([-1e3, -50.0, 0.0, 50.0, 700.0, 1e3])
    c = C.confidence_from_raw(ag.constant(raw)).data
    assert np.all(np.diff(c) >= 0)
    assert c[0] == C.CONF_FLOOR
    assert c[2] == pytest.approx(2.0)
    assert c[-1] == c[-2]  # clipped beyond the overflow guard


# --- normalizer --------------------------------------------------------------


def test_normalizer_roundtrip():
    from conftest import simple_layout

    lay = simple_layout(side=4.0)
    norm = C.SceneNormalizer.from_layout(lay)
    gen = rng.substream(0, 67)
    pts = gen.uniform(-1, 5, size=(50, 3))
    np.testing.assert_allclose(norm.denormalize(norm.normalize(pts)), pts, atol=1e-12)
    # room interior maps into the unit box
    inside = gen.uniform(0.2, 3.8, size=(50, 2))
    pts_in = np.column_stack([inside, gen.uniform(0.1, 2.5, size=50)])
    z = norm.normalize(pts_in)
    assert np.all(np.abs(z) <= 1.0 + 1e-9)


def test_normalizer_dict_roundtrip():
    n = C.SceneNormalizer(center=np.array([1.0, 2.0, 3.0]), scale=2.5)
    back = C.SceneNormalizer.from_dict(n.to_dict())
    np.testing.assert_array_equal(back.center, n.center)
    assert back.scale == n.scale


# --- codec -------------------------------------------------------------------


def test_encoder_shapes_and_determinism():
    codec = C.SCMCodec(C.CodecConfig(seed=5))
    gen = rng.substream(0, 68)
    x = gen.uniform(-1, 1, size=(2, 32, 32, 3))
    z = codec.encode(x)
    assert z.shape == (2, 8, 8, codec.config.latent_channels)
    codec2 = C.SCMCodec(C.CodecConfig(seed=5))
    np.testing.assert_array_equal(codec2.encode(x), z)
    single = codec.encode(x[0])
    np.testing.assert_array_equal(single, z[0])


def test_decoder_output_shapes():
    codec = C.SCMCodec()
    gen = rng.substream(0, 69)
    z = gen.normal(size=(1, 8, 8, codec.config.latent_channels))
    coords, conf = codec.decode_np(z)
    assert coords.shape == (1, 32, 32, 3)
    assert conf.shape == (1, 32, 32)
    assert np.all(conf > 1.0)


def test_codec_training_improves_and_freezes_encoder(sparse_scene, sparse_views):
    from scenesynth.pipeline import SceneContext, scene_views

    ctx = SceneContext.build(sparse_scene, sparse_views)
    sv = scene_views(ctx)
    scms = sv.normalizer.normalize(sv.scm)
    config = C.CodecConfig(lr=2e-2, seed=1)
    fresh = C.SCMCodec(config)
    enc_before = [w.copy() for w in fresh.enc_w]

    codec, log = C.train_codec(scms, config, steps=40, masks=sv.valid)
    assert len(log) == 40
    assert log[-1]["total"] < log[0]["total"]
    # frozen encoder: bit-identical weights after training
    for w0, w1 in zip(enc_before, codec.enc_w):
        assert np.array_equal(w0, w1)
    assert codec.latent_scale > 0


def test_codec_state_dict_roundtrip():
    codec = C.SCMCodec(C.CodecConfig(seed=3))
    codec.latent_scale = 1.75
    blobs = codec.state_dict()
    other = C.SCMCodec(C.CodecConfig(seed=9))
    other.load_state_dict(blobs)
    gen = rng.substream(0, 70)
    x = gen.uniform(-1, 1, size=(1, 32, 32, 3))
    np.testing.assert_array_equal(other.encode(x), codec.encode(x))
    a_coords, a_conf = codec.decode_np(codec.encode(x))
    b_coords, b_conf = other.decode_np(other.encode(x))
    np.testing.assert_array_equal(a_coords, b_coords)
    np.testing.assert_array_equal(a_conf, b_conf)
    assert other.latent_scale == 1.75
