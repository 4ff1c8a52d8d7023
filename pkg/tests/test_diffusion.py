"""Schedule identities, latent packing, attention isolation, equivariance,
and the training/sampling protocol."""
import numpy as np
import pytest

import scenesynth.autograd as ag
from scenesynth import codec as C
from scenesynth import diffusion as D
from scenesynth import rng


# --- schedule ----------------------------------------------------------------


def test_schedule_identities_1000_draws():
    gen = rng.substream(0, 80)
    for _ in range(1000):
        t = float(gen.uniform())
        a, s = D.alpha_sigma(t)
        assert abs(a * a + s * s - 1.0) <= 1e-12
        x0 = gen.normal(size=(3,))
        eps = gen.normal(size=(3,))
        xt = D.add_noise(x0, eps, t)
        v = D.v_target(x0, eps, t)
        np.testing.assert_allclose(D.x0_from_v(xt, v, t), x0, atol=1e-6)
        np.testing.assert_allclose(D.eps_from_v(xt, v, t), eps, atol=1e-6)


def test_schedule_endpoints():
    a0, s0 = D.alpha_sigma(0.0)
    a1, s1 = D.alpha_sigma(1.0)
    assert (a0, s0) == (1.0, 0.0)
    assert a1 == pytest.approx(0.0, abs=1e-15) and s1 == 1.0
    x0 = np.array([0.3, -0.7])
    eps = np.array([1.1, 0.2])
    np.testing.assert_array_equal(D.add_noise(x0, eps, 0.0), x0)
    np.testing.assert_array_equal(D.v_target(x0, eps, 0.0), eps)
    np.testing.assert_allclose(D.v_target(x0, eps, 1.0), -x0, atol=1e-15)
    # single step from t=1: x0_hat = -v
    v = np.array([0.5, -0.25])
    np.testing.assert_allclose(D.x0_from_v(np.zeros(2), v, 1.0), -v, atol=1e-15)


def test_ddim_times_grid():
    times = D.ddim_times(4)
    np.testing.assert_allclose(times, [1.0, 0.75, 0.5, 0.25, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        D.ddim_times(0)


def test_schedule_features_values():
    f0 = D.schedule_features(0.0)
    np.testing.assert_allclose(f0, [1.0, 0.0, 1.0, 0.0, -1.0, 1.0], atol=1e-15)
    f1 = D.schedule_features(1.0)
    np.testing.assert_allclose(f1, [0.0, 1.0, 0.0, 1.0, 1.0, -1.0], atol=1e-15)
    fm = D.schedule_features(0.5)
    r = np.sqrt(0.5)
    np.testing.assert_allclose(fm, [r, r, 1.0 / 8.0, 1.0 / 8.0, 0.0, 0.0], atol=1e-12)


def test_time_embedding_shape_and_range():
    e = D.time_embedding(0.37, 16)
    assert e.shape == (16,)
    assert np.all(np.abs(e) <= 1.0)
    assert not np.allclose(D.time_embedding(0.37, 16), D.time_embedding(0.38, 16))


# --- latent packing ----------------------------------------------------------


def test_patchify_inverse():
    gen = rng.substream(0, 81)
    x = gen.normal(size=(2, 32, 32, 5))
    tok = D.patchify(x, 4)
    assert tok.shape == (2, 64, 80)
    np.testing.assert_array_equal(D.unpatchify(tok, 4, 32, 32), x)


def test_patchify_layout_row_major():
    # first token = top-left 4x4 patch, channel-fastest within a pixel
    x = np.arange(32 * 32 * 2, dtype=np.float64).reshape(1, 32, 32, 2)
    tok = D.patchify(x, 4)
    np.testing.assert_array_equal(tok[0, 0], x[0, :4, :4, :].reshape(-1))
    np.testing.assert_array_equal(tok[0, 1], x[0, :4, 4:8, :].reshape(-1))


def test_color_codec_roundtrip():
    gen = rng.substream(0, 82)
    rgb = gen.uniform(0, 1, size=(2, 32, 32, 3))
    tok = D.encode_color(rgb, 4)
    assert tok.shape == (2, 64, 48)
    np.testing.assert_allclose(D.decode_color(tok, 4, 32, 32), rgb, atol=1e-12)


def test_semantic_codec_roundtrip_exact():
    gen = rng.substream(0, 83)
    sem = gen.integers(0, 68, size=(2, 32, 32))
    tok = D.encode_semantic(sem, 4, 68)
    assert tok.shape == (2, 64, 1088)
    assert set(np.unique(tok)) == {-1.0, 1.0}
    np.testing.assert_array_equal(D.decode_semantic(tok, 4, 32, 32), sem)


def test_coord_codec_uses_scaled_encoder_latents():
    codec = C.SCMCodec(C.CodecConfig(seed=2))
    codec.latent_scale = 2.0
    norm = C.SceneNormalizer(center=np.zeros(3), scale=4.0)
    gen = rng.substream(0, 84)
    scm = gen.uniform(-3, 3, size=(2, 32, 32, 3))
    tok = D.encode_coord(scm, codec, norm)
    assert tok.shape == (2, 64, 8)
    direct = codec.encode(norm.normalize(scm)).reshape(2, 64, 8) / 2.0
    np.testing.assert_array_equal(tok, direct)
    coords, conf = D.decode_coord(tok, codec, norm, 32, 32)
    assert coords.shape == (2, 32, 32, 3)
    assert conf.shape == (2, 32, 32)


# --- conditioning ------------------------------------------------------------


def make_views(n, size=32):
    from conftest import simple_view

    gen = rng.substream(0, 85)
    views = []
    for _ in range(n):
        pos = gen.uniform(0.5, 3.5, size=3) * [1, 1, 0.5]
        fwd = gen.normal(size=3)
        fwd[2] *= 0.1
        views.append(simple_view(pos, fwd, size=size))
    return views


def test_conditioning_shapes_and_schedule_tail():
    cfg = D.DiffusionConfig()
    views = make_views(3)
    gen = rng.substream(0, 86)
    sem = gen.integers(0, 68, size=(3, 32, 32))
    scm = gen.uniform(-1, 1, size=(3, 32, 32, 3))
    cond = D.build_conditioning(
        views, sem, scm, 0.4, np.array([1.0, 0.0, 0.0]), cfg, 68
    )
    p2 = 16
    common = (
        cfg.sem_embed_dim * p2 + 3 * p2 + D.Denoiser.LATENT_CH["coord"]
        + 6 + 1 + cfg.t_embed_dim + D.N_SCHEDULE_FEATURES
    )
    assert cond["color"].shape == (3, 64, common + 4 * p2)
    assert cond["semantic"].shape == (3, 64, common)
    assert cond["coord"].shape == (3, 64, common)
    # the denoiser reads schedule features off the tail of the coord block
    np.testing.assert_array_equal(
        cond["coord"][1, 17, -D.N_SCHEDULE_FEATURES:], D.schedule_features(0.4)
    )
    # no warp given -> zero warp channels
    assert np.all(cond["color"][..., common:] == 0.0)


# --- attention isolation (bit-level) ------------------------------------------


def rand_attn(gen, d):
    def w():
        return ag.Tensor(gen.normal(size=(d, d)) * 0.2)

    def b():
        return ag.Tensor(gen.normal(size=(d,)) * 0.05)

    return D.AttnParams(wq=w(), wk=w(), wv=w(), wo=w(), bq=b(), bk=b(), bv=b(), bo=b())


def test_cross_view_never_mixes_modalities():
    gen = rng.substream(0, 87)
    d = 16
    params = rand_attn(gen, d)
    x = gen.normal(size=(3, 4, 10, d))
    base = D.cross_view_attention(ag.Tensor(x), params, 2).data
    y = x.copy()
    y[1] += gen.normal(size=y[1].shape)  # perturb modality 1 only
    out = D.cross_view_attention(ag.Tensor(y), params, 2).data
    np.testing.assert_array_equal(out[0], base[0])
    np.testing.assert_array_equal(out[2], base[2])
    assert not np.array_equal(out[1], base[1])


def test_cross_modal_never_mixes_views():
    gen = rng.substream(0, 88)
    d = 16
    params = rand_attn(gen, d)
    x = gen.normal(size=(3, 4, 10, d))
    base = D.cross_modal_attention(ag.Tensor(x), params, 2).data
    y = x.copy()
    y[:, 2] += gen.normal(size=y[:, 2].shape)  # perturb view 2 only
    out = D.cross_modal_attention(ag.Tensor(y), params, 2).data
    for v in (0, 1, 3):
        np.testing.assert_array_equal(out[:, v], base[:, v])
    assert not np.array_equal(out[:, 2], base[:, 2])


# --- denoiser ----------------------------------------------------------------


def build_inputs(cfg, nv, seed):
    gen = rng.substream(0, 89, seed)
    views = make_views(nv)
    sem = gen.integers(0, 68, size=(nv, 32, 32))
    scm = gen.uniform(-1, 1, size=(nv, 32, 32, 3))
    flags = np.zeros(nv)
    flags[0] = 1.0
    cond = D.build_conditioning(views, sem, scm, 0.3, flags, cfg, 68)
    lats = {
        m: gen.normal(size=(nv, cfg.tokens_per_view, D.Denoiser.LATENT_CH[m]))
        for m in D.MODALITIES
    }
    return lats, cond


def test_denoiser_output_shapes():
    cfg = D.DiffusionConfig()
    model = D.Denoiser(cfg)
    lats, cond = build_inputs(cfg, 2, 0)
    out = model.forward(lats, cond)
    for m in D.MODALITIES:
        assert out[m].shape == lats[m].shape


def test_zero_weights_zero_output():
    cfg = D.DiffusionConfig()
    model = D.Denoiser(cfg)
    for t in model.parameters():
        t.data = np.zeros_like(t.data)
    lats, cond = build_inputs(cfg, 2, 1)
    out = model.forward(lats, cond)
    for m in D.MODALITIES:
        assert np.all(out[m].data == 0.0)


def test_gate_identity_path():
    """With a zeroed trunk the prediction is exactly gate(t) * x_t."""
    cfg = D.DiffusionConfig()
    model = D.Denoiser(cfg)
    for name, t in model.params.items():
        if not name.startswith("gate."):
            t.data = np.zeros_like(t.data)
    lats, cond = build_inputs(cfg, 2, 2)
    out = model.forward(lats, cond)
    feats = D.schedule_features(0.3)
    g = D._RATIO_CAP * feats[2]
    for m in D.MODALITIES:
        np.testing.assert_allclose(out[m].data, g * lats[m], rtol=1e-12)


def test_denoiser_view_permutation_equivariance():
    cfg = D.DiffusionConfig()
    model = D.Denoiser(cfg)
    # bump the trunk so the test exercises more than the gate path
    gen = rng.substream(0, 90)
    for name, t in model.params.items():
        if name.startswith("out.") and name.endswith(".w"):
            t.data = gen.normal(size=t.data.shape) * 0.1
    nv = 4
    lats, cond = build_inputs(cfg, nv, 3)
    base = model.forward(lats, cond)
    perm = np.array([2, 0, 3, 1])
    lats_p = {m: lats[m][perm] for m in D.MODALITIES}
    cond_p = {m: cond[m][perm] for m in D.MODALITIES}
    out_p = model.forward(lats_p, cond_p)
    for m in D.MODALITIES:
        np.testing.assert_allclose(out_p[m].data, base[m].data[perm], atol=1e-6)


def test_duplicated_scene_duplicates_outputs():
    """Stacking the same views twice yields the same per-view outputs."""
    cfg = D.DiffusionConfig()
    model = D.Denoiser(cfg)
    gen = rng.substream(0, 91)
    for name, t in model.params.items():
        if name.startswith("out.") and name.endswith(".w"):
            t.data = gen.normal(size=t.data.shape) * 0.1
    lats, cond = build_inputs(cfg, 2, 4)
    base = model.forward(lats, cond)
    lats2 = {m: np.concatenate([lats[m], lats[m]]) for m in D.MODALITIES}
    cond2 = {m: np.concatenate([cond[m], cond[m]]) for m in D.MODALITIES}
    out2 = model.forward(lats2, cond2)
    for m in D.MODALITIES:
        np.testing.assert_allclose(out2[m].data[:2], out2[m].data[2:], atol=1e-9)
        np.testing.assert_allclose(out2[m].data[:2], base[m].data, atol=1e-6)


def test_denoiser_state_dict_roundtrip():
    cfg = D.DiffusionConfig()
    a = D.Denoiser(cfg)
    blobs = a.state_dict()
    b = D.Denoiser(cfg)
    gen = rng.substream(0, 92)
    for t in b.parameters():
        t.data = gen.normal(size=t.data.shape)
    b.load_state_dict(blobs)
    lats, cond = build_inputs(cfg, 2, 5)
    oa = a.forward(lats, cond)
    ob = b.forward(lats, cond)
    for m in D.MODALITIES:
        np.testing.assert_array_equal(oa[m].data, ob[m].data)


# --- training protocol --------------------------------------------------------


@pytest.fixture(scope="module")
def bundle(sparse_scene, sparse_views_8):
    from scenesynth.pipeline import SceneContext, scene_views

    ctx = SceneContext.build(sparse_scene, sparse_views_8)
    sv = scene_views(ctx)
    codec, _ = C.train_codec(
        sv.normalizer.normalize(sv.scm), C.CodecConfig(lr=2e-2, seed=1), steps=30,
        masks=sv.valid,
    )
    return sv, codec


def test_batch_protocol(bundle):
    sv, codec = bundle
    cfg = D.DiffusionConfig(seed=11)
    lat0 = D.encode_scene_latents(sv, codec, cfg, 68)
    seen_m = set()
    for step in range(24):
        gen = rng.substream(cfg.seed, 301, step)
        batch = D.make_training_batch(
            sv, codec, cfg, gen, 68, lat0, t_bin=(step % D.T_STRATA, D.T_STRATA)
        )
        seen_m.add(batch.m_sources)
        assert batch.m_sources in (1, 3, 7)
        assert len(batch.source_indices) == batch.m_sources
        # stratified shared t stays in its bin
        k = step % D.T_STRATA
        assert k / D.T_STRATA <= batch.t < (k + 1) / D.T_STRATA
        src = batch.source_indices
        # source color streams are the clean latents and carry no loss
        np.testing.assert_array_equal(batch.x_t["color"][src], lat0["color"][src])
        assert not batch.loss_mask["color"][src].any()
        assert batch.loss_mask["semantic"].all() and batch.loss_mask["coord"].all()
        # v target is consistent with the noising identity
        for m in D.MODALITIES:
            rows = batch.loss_mask[m]
            np.testing.assert_allclose(
                D.x0_from_v(batch.x_t[m][rows], batch.v_tgt[m][rows], batch.t),
                lat0[m][rows],
                atol=1e-9,
            )
    assert seen_m == {1, 3, 7}


def test_train_step_deterministic(bundle):
    sv, codec = bundle
    losses = []
    for _ in range(2):
        cfg = D.DiffusionConfig(seed=7)
        model = D.Denoiser(cfg)
        opt = ag.Adam(model.parameters(), lr=cfg.lr)
        lat0 = D.encode_scene_latents(sv, codec, cfg, 68)
        rows = [D.train_step(model, opt, sv, codec, s, 68, lat0) for s in range(2)]
        losses.append([r["loss"] for r in rows])
    assert losses[0] == losses[1]


def test_wrong_view_count_raises(bundle):
    sv, codec = bundle
    cfg = D.DiffusionConfig(seed=7)
    short = D.SceneViews(
        views=sv.views[:5],
        color=sv.color[:5],
        semantic=sv.semantic[:5],
        scm=sv.scm[:5],
        valid=sv.valid[:5],
        normalizer=sv.normalizer,
        layout_sem=sv.layout_sem[:5],
        layout_scm=sv.layout_scm[:5],
    )
    gen = rng.substream(0, 93)
    with pytest.raises(ValueError):
        D.make_training_batch(short, codec, cfg, gen, 68)


def test_sample_deterministic_and_source_passthrough(bundle):
    sv, codec = bundle
    cfg = D.DiffusionConfig(seed=7)
    model = D.Denoiser(cfg)
    a = D.sample(model, codec, sv, [0, 1, 2], steps=2, seed=5, n_categories=68)
    b = D.sample(model, codec, sv, [0, 1, 2], steps=2, seed=5, n_categories=68)
    for key in ("color", "semantic", "coords", "confidence"):
        np.testing.assert_array_equal(a[key], b[key])
    c = D.sample(model, codec, sv, [0, 1, 2], steps=2, seed=6, n_categories=68)
    assert not np.array_equal(a["color"][4], c["color"][4])
    # source color survives sampling exactly (clean latents are re-imposed)
    np.testing.assert_allclose(a["color"][[0, 1, 2]], sv.color[[0, 1, 2]], atol=1e-12)
    with pytest.raises(ValueError):
        D.sample(model, codec, sv, [0], steps=0, seed=5, n_categories=68)
