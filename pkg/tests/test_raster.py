"""Rasterizer tests: agreement with the independent ray-cast renderer,
SCM conversions, and the shared depth-tie resolution rules."""
import numpy as np
import pytest

from scenesynth import raster as R
from scenesynth import rng, synth
from scenesynth.geometry import layout_triangles
from conftest import make_box, simple_layout, simple_view


def test_raster_vs_raycast_small_batch():
    """Same scenes through both renderers: ids exact, depth to 1e-4."""
    for seed in range(6):
        lay = synth.gen_scene(seed, difficulty="sparse")
        views = synth.default_views(lay, count=2, seed=seed).views
        soup = layout_triangles(lay)
        for view in views:
            rast = R.rasterize_soup(soup, view)
            gt = synth.render_gt(lay, view, soup=soup)
            assert np.array_equal(rast.semantic, gt.semantic)
            both = (rast.depth > 0) & (gt.depth > 0)
            assert np.array_equal(rast.depth > 0, gt.depth > 0)
            assert np.max(np.abs(rast.depth[both] - gt.depth[both])) <= 1e-4


def test_rasterize_layout_equals_soup_route():
    lay = synth.gen_scene(1, difficulty="sparse")
    view = synth.default_views(lay, count=1, seed=1).views[0]
    a = R.rasterize_layout(lay, view)
    b = R.rasterize_soup(layout_triangles(lay), view)
    assert np.array_equal(a.semantic, b.semantic)
    assert np.array_equal(a.depth, b.depth)


def test_full_coverage_inside_room():
    # A camera inside a closed room sees geometry through every pixel.
    lay = synth.gen_scene(2, difficulty="empty")
    view = synth.default_views(lay, count=1, seed=2).views[0]
    maps = R.rasterize_layout(lay, view)
    assert np.all(maps.depth > 0)
    assert np.all(maps.semantic > 0)  # no void
    assert maps.scm is not None and np.all(maps.scm.valid)


def test_priority_door_over_wall():
    # Door quad coplanar with the wall at x=0; door must win the tie.
    from scenesynth.layout import ArchQuad

    door = ArchQuad(
        kind="door",
        corners=np.array(
            [[0.0, 1.5, 0.0], [0.0, 2.5, 0.0], [0.0, 2.5, 2.0], [0.0, 1.5, 2.0]]
        ),
    )
    lay = simple_layout(side=4.0, arch=[door])
    view = simple_view([2.0, 2.0, 1.0], [-1.0, 0.0, 0.0], size=32)
    maps = R.rasterize_layout(lay, view)
    from scenesynth import palette as pal

    assert pal.DOOR_ID in maps.semantic
    # straight-ahead pixel looks at the door center
    assert maps.semantic[16, 16] == pal.DOOR_ID


def test_scm_depth_roundtrip_random_poses():
    gen = rng.substream(0, 55)
    for _ in range(20):
        view = simple_view(gen.uniform(-2, 2, 3), gen.normal(size=3), size=16)
        depth = gen.uniform(0.3, 8.0, size=(16, 16))
        depth[gen.random((16, 16)) < 0.2] = 0.0  # invalid holes
        scm = R.depth_to_scm(depth, view)
        assert np.array_equal(scm.valid, depth > 0)
        back, n_invalid = R.scm_to_depth(scm, view)
        assert n_invalid == 0
        np.testing.assert_allclose(back[scm.valid], depth[depth > 0], atol=1e-6)
        assert np.all(back[~scm.valid] == 0.0)


def test_scm_to_depth_counts_behind_camera_points():
    view = simple_view([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], size=4)
    vals = np.zeros((4, 4, 3))
    vals[..., 0] = -5.0  # behind the camera (it looks along +x)
    valid = np.ones((4, 4), dtype=bool)
    scm = R.SCM(values=vals, valid=valid)
    depth, n_invalid = R.scm_to_depth(scm, view)
    assert n_invalid == 16
    assert np.all(depth == 0.0)


def test_near_clip_excludes_touching_geometry():
    # A box face passing through the camera center must not paint the view.
    box = make_box(0, [2.0, 2.0, 1.0], [1.0, 1.0, 1.0])
    lay = simple_layout(side=4.0, boxes=[box])
    # camera embedded exactly at the box rear face, looking away from the box
    view = simple_view([2.5, 2.0, 1.0], [1.0, 0.0, 0.0], size=8)
    maps = R.rasterize_layout(lay, view)
    assert np.all(maps.depth > R.NEAR_CLIP)


def test_depth_tie_lowest_index_for_equal_priority():
    # Two identical coplanar object boxes: tie falls to the lower triangle
    # index; both renderers must agree (regression guard for the tie rule).
    b0 = make_box(0, [2.0, 2.0, 0.5], [1.0, 1.0, 1.0], category=10)
    b1 = make_box(1, [2.0, 2.0, 0.5], [1.0, 1.0, 1.0], category=11)
    lay = simple_layout(side=4.0, boxes=[b0, b1])
    view = simple_view([0.5, 2.0, 0.5], [1.0, 0.0, 0.0], size=16)
    rast = R.rasterize_layout(lay, view)
    soup = layout_triangles(lay)
    gt = synth.render_gt(lay, view, soup=soup)
    assert np.array_equal(rast.semantic, gt.semantic)
    seen = set(np.unique(rast.semantic).tolist())
    assert 10 in seen and 11 not in seen


def test_empty_soup_renders_void():
    from scenesynth.geometry import TriangleSoup

    soup = TriangleSoup(
        vertices=np.zeros((0, 3, 3)),
        category=np.zeros(0, dtype=np.int32),
        priority=np.zeros(0, dtype=np.int32),
        normal=np.zeros((0, 3)),
    )
    view = simple_view([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], size=4)
    maps = R.rasterize_soup(soup, view)
    assert np.all(maps.semantic == 0)
    assert np.all(maps.depth == 0.0)
    assert not np.any(maps.scm.valid)
