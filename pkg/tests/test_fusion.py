"""Fusion and metric tests. SSIM is checked against scikit-image, the
reference implementation the desk-scale harness must agree with."""
import math

import numpy as np
import pytest

from scenesynth import fusion, rng, warp


def random_cloud(gen, n):
    return warp.GlobalPointCloud(
        positions=gen.uniform(-2, 2, size=(n, 3)),
        colors=gen.random((n, 3)),
        semantics=gen.integers(0, 68, size=n).astype(np.int32),
        confidence=gen.uniform(1, 3, size=n),
        source_view=gen.integers(0, 8, size=n).astype(np.int32),
    )


# --- fuse --------------------------------------------------------------------


def test_fuse_dedup_within_voxel():
    pos = np.array(
        [
            [0.01, 0.01, 0.01],
            [0.02, 0.02, 0.02],  # same 5 cm voxel as the first
            [1.0, 1.0, 1.0],
        ]
    )
    cloud = warp.GlobalPointCloud(
        positions=pos,
        colors=np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]),
        semantics=np.array([1, 2, 3], dtype=np.int32),
        confidence=np.array([1.0, 2.0, 3.0]),
        source_view=np.array([0, 1, 2], dtype=np.int32),
    )
    fused = fusion.fuse(cloud, voxel=0.05)
    assert len(fused.cloud) == 2
    # the highest-confidence point represents the shared voxel
    np.testing.assert_array_equal(fused.cloud.colors[0], [0, 1.0, 0])
    assert fused.provenance == {1: 1, 2: 1}


def test_fuse_confidence_tie_keeps_lowest_index():
    pos = np.zeros((2, 3))
    cloud = warp.GlobalPointCloud(
        positions=pos,
        colors=np.array([[1.0, 0, 0], [0, 1.0, 0]]),
        semantics=np.array([1, 2], dtype=np.int32),
        confidence=np.array([2.0, 2.0]),
        source_view=np.array([0, 1], dtype=np.int32),
    )
    fused = fusion.fuse(cloud, voxel=0.05)
    assert len(fused.cloud) == 1
    np.testing.assert_array_equal(fused.cloud.colors[0], [1.0, 0, 0])


def test_fuse_deterministic_and_order_stable():
    gen = rng.substream(0, 31)
    cloud = random_cloud(gen, 500)
    f1 = fusion.fuse(cloud, voxel=0.05)
    f2 = fusion.fuse(cloud, voxel=0.05)
    assert np.array_equal(f1.cloud.positions, f2.cloud.positions)
    assert np.array_equal(f1.cloud.source_view, f2.cloud.source_view)


def test_fuse_empty():
    fused = fusion.fuse(warp.empty_cloud(), voxel=0.05)
    assert len(fused.cloud) == 0


# --- chamfer -----------------------------------------------------------------


def test_chamfer_spec_example():
    """Two points 1 m apart vs one of them -> 0.5 m."""
    a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    b = np.array([[0.0, 0.0, 0.0]])
    assert fusion.chamfer(a, b) == pytest.approx(0.5)
    assert fusion.chamfer(b, a) == pytest.approx(0.5)  # symmetric


def test_chamfer_identical_sets_zero():
    gen = rng.substream(0, 32)
    pts = gen.uniform(-1, 1, size=(200, 3))
    assert fusion.chamfer(pts, pts) == 0.0


def test_chamfer_grid_equals_brute():
    # identical NN sets; only the distance formulas differ (difference-based
    # vs expanded dot products), so agreement is to rounding noise
    gen = rng.substream(0, 33)
    for _ in range(3):
        a = gen.uniform(-2, 2, size=(300, 3))
        b = gen.uniform(-2, 2, size=(250, 3))
        cg = fusion.chamfer(a, b, mode="grid")
        cb = fusion.chamfer(a, b, mode="brute")
        assert cg == pytest.approx(cb, abs=1e-12)


def test_chamfer_known_offset():
    # Grid of points displaced by d: both directional means are exactly d.
    gen = rng.substream(0, 34)
    a = gen.uniform(0, 1, size=(100, 3))
    b = a + np.array([0.003, 0.0, 0.0])
    assert fusion.chamfer(a, b) == pytest.approx(0.003, rel=1e-9)


def test_chamfer_empty_raises():
    with pytest.raises(ValueError):
        fusion.chamfer(np.zeros((0, 3)), np.ones((4, 3)))


# --- psnr --------------------------------------------------------------------


def test_psnr_known_value():
    a = np.zeros((8, 8, 3))
    b = np.full((8, 8, 3), 0.1)
    assert fusion.psnr(a, b) == pytest.approx(20.0)  # mse 0.01


def test_psnr_identical_inf():
    a = np.random.default_rng(0).random((4, 4, 3))
    assert fusion.psnr(a, a) == math.inf


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        fusion.psnr(np.zeros((4, 4, 3)), np.zeros((5, 5, 3)))


# --- ssim --------------------------------------------------------------------


def test_ssim_identical_is_one():
    img = np.random.default_rng(1).random((24, 24, 3))
    assert fusion.ssim(img, img) == pytest.approx(1.0)


def test_ssim_matches_skimage():
    skimage = pytest.importorskip("skimage.metrics")
    gen = rng.substream(0, 35)
    for _ in range(5):
        a = gen.random((32, 32, 3))
        b = np.clip(a + gen.normal(0, 0.08, size=a.shape), 0, 1)
        la = 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
        lb = 0.299 * b[..., 0] + 0.587 * b[..., 1] + 0.114 * b[..., 2]
        ref = skimage.structural_similarity(
            la, lb, data_range=1.0, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False,
        )
        assert fusion.ssim(a, b) == pytest.approx(ref, abs=1e-12)


def test_ssim_gray_input():
    gen = rng.substream(0, 36)
    a = gen.random((24, 24))
    b = np.clip(a + 0.05, 0, 1)
    s = fusion.ssim(a, b)
    assert 0.0 < s < 1.0


def test_ssim_too_small_image_raises():
    with pytest.raises(ValueError):
        fusion.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_ssim_degrades_with_noise():
    gen = rng.substream(0, 37)
    a = gen.random((32, 32, 3))
    small = np.clip(a + gen.normal(0, 0.02, a.shape), 0, 1)
    big = np.clip(a + gen.normal(0, 0.3, a.shape), 0, 1)
    assert fusion.ssim(a, small) > fusion.ssim(a, big)
