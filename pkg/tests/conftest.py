"""Shared fixtures: small layouts, views, and scene bundles used across tests."""
import numpy as np
import pytest

from scenesynth import synth
from scenesynth.camera import CameraView, Pose, intrinsics_from_fov, look_at_rotation
from scenesynth.layout import ArchQuad, RoomPolygon, SceneLayout, SemanticBox


def make_box(bid, center, size, yaw=0.0, category=10):
    return SemanticBox(
        id=bid,
        center=np.asarray(center, dtype=np.float64),
        size=np.asarray(size, dtype=np.float64),
        yaw=float(yaw),
        category=int(category),
    )


def square_room(side=4.0, ceiling=2.6):
    return RoomPolygon(
        vertices=np.array([[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]]),
        floor_z=0.0,
        ceiling_z=ceiling,
    )


def simple_layout(side=4.0, boxes=None, arch=None, room_type="bedroom", lighting=True):
    return SceneLayout(
        room_type=room_type,
        rooms=[square_room(side)],
        boxes=list(boxes or []),
        arch=list(arch or []),
        lighting={"direction": [0.3, -0.5, -0.8], "intensity": 1.0} if lighting else None,
    )


def simple_view(position, forward, size=16, fov=90.0):
    intr = intrinsics_from_fov(size, size, fov)
    rot = look_at_rotation(np.asarray(forward, dtype=np.float64))
    pose = Pose(rotation=rot, translation=np.asarray(position, dtype=np.float64))
    return CameraView(intrinsics=intr, pose=pose)


@pytest.fixture(scope="session")
def sparse_scene():
    return synth.gen_scene(3, difficulty="sparse")


@pytest.fixture(scope="session")
def sparse_views(sparse_scene):
    return synth.default_views(sparse_scene, count=4, seed=3).views


@pytest.fixture(scope="session")
def sparse_views_8(sparse_scene):
    # full denoiser protocol width
    return synth.default_views(sparse_scene, count=8, seed=3).views
