import json
import math

import numpy as np
import pytest

from scenesynth import layout as L
from conftest import make_box, simple_layout, square_room


def layout_doc(**overrides):
    doc = {
        "version": 1,
        "room_type": "bedroom",
        "rooms": [
            {
                "vertices": [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]],
                "floor_z": 0.0,
                "ceiling_z": 2.6,
            }
        ],
        "boxes": [
            {"id": 0, "center": [2.0, 2.0, 0.3], "size": [0.6, 0.4, 0.6], "yaw": 0.2, "category": 10}
        ],
        "arch": [
            {
                "kind": "door",
                "corners": [[0.0, 1.0, 0.0], [0.0, 2.0, 0.0], [0.0, 2.0, 2.0], [0.0, 1.0, 2.0]],
            }
        ],
    }
    doc.update(overrides)
    return doc


# --- schema / parsing ------------------------------------------------------


def test_from_dict_roundtrip():
    lay = L.layout_from_dict(layout_doc())
    doc2 = L.layout_to_dict(lay)
    lay2 = L.layout_from_dict(doc2)
    assert lay2.room_type == "bedroom"
    assert len(lay2.rooms) == 1 and len(lay2.boxes) == 1 and len(lay2.arch) == 1
    np.testing.assert_allclose(lay2.boxes[0].center, [2.0, 2.0, 0.3])
    assert L.layout_to_dict(lay2) == doc2


def test_save_load_file(tmp_path):
    lay = L.layout_from_dict(layout_doc())
    path = tmp_path / "scene.json"
    L.save_layout(lay, str(path))
    lay2 = L.load_layout(str(path))
    assert L.layout_to_dict(lay2) == L.layout_to_dict(lay)


@pytest.mark.parametrize(
    "mutate,fragment",
    [
        (lambda d: d.pop("version"), "version"),
        (lambda d: d.update(version=2), "version"),
        (lambda d: d.update(rooms=[]), "rooms"),
        (lambda d: d["rooms"][0].pop("floor_z"), "rooms[0].floor_z"),
        (lambda d: d["rooms"][0].update(vertices=[[0, 0], [1, 0]]), "rooms[0].vertices"),
        (lambda d: d["boxes"][0].pop("category"), "boxes[0].category"),
        (lambda d: d["boxes"][0].update(center=[1.0, 2.0]), "boxes[0].center"),
        (lambda d: d["boxes"][0].update(yaw="north"), "boxes[0].yaw"),
        (lambda d: d["boxes"][0].update(id=True), "boxes[0].id"),
        (lambda d: d["arch"][0].update(kind="archway"), "arch[0].kind"),
        (lambda d: d["arch"][0].update(corners=d["arch"][0]["corners"][:3]), "arch[0].corners"),
        (lambda d: d["boxes"][0].update(center=[1.0, 2.0, float("nan")]), "boxes[0].center"),
    ],
)
def test_schema_errors_name_field_path(mutate, fragment):
    doc = layout_doc()
    mutate(doc)
    with pytest.raises(L.LayoutSchemaError) as ei:
        L.layout_from_dict(doc)
    assert fragment in str(ei.value)


def test_invariant_nonpositive_size():
    doc = layout_doc()
    doc["boxes"][0]["size"] = [0.5, 0.0, 0.5]
    with pytest.raises(L.LayoutInvariantError):
        L.layout_from_dict(doc)


def test_invariant_duplicate_box_id():
    doc = layout_doc()
    doc["boxes"].append(dict(doc["boxes"][0]))
    with pytest.raises(L.LayoutInvariantError, match="duplicate"):
        L.layout_from_dict(doc)


def test_invariant_reserved_category_rejected():
    doc = layout_doc()
    doc["boxes"][0]["category"] = 1  # wall id: not an object category
    with pytest.raises(L.LayoutInvariantError):
        L.layout_from_dict(doc)


def test_invariant_ceiling_below_floor():
    doc = layout_doc()
    doc["rooms"][0]["ceiling_z"] = -1.0
    with pytest.raises(L.LayoutInvariantError):
        L.layout_from_dict(doc)


def test_invariant_noncoplanar_arch():
    doc = layout_doc()
    doc["arch"][0]["corners"][2] = [0.5, 2.0, 2.0]
    with pytest.raises(L.LayoutInvariantError, match="coplanar"):
        L.layout_from_dict(doc)


def test_box_outside_room_loads():
    # Legal at load; filter_objects is the stage that drops it.
    doc = layout_doc()
    doc["boxes"][0]["center"] = [9.0, 9.0, 0.3]
    lay = L.layout_from_dict(doc)
    assert L.room_of(lay, lay.boxes[0]) is None


def test_cw_polygon_normalized_to_ccw():
    doc = layout_doc()
    doc["rooms"][0]["vertices"] = [[0.0, 0.0], [0.0, 4.0], [4.0, 4.0], [4.0, 0.0]]  # CW
    lay = L.layout_from_dict(doc)
    assert lay.rooms[0].area() > 0


# --- geometry helpers ------------------------------------------------------


def test_normalize_yaw_range():
    for yaw in (-7.0, -math.pi, 0.0, 3.5, math.pi, 9.42):
        ny = L.normalize_yaw(yaw)
        assert -math.pi <= ny < math.pi
        # same angle modulo 2 pi
        assert abs(math.remainder(ny - yaw, 2 * math.pi)) < 1e-12


def test_box_corners_axis_aligned():
    box = make_box(0, [1.0, 2.0, 0.5], [2.0, 1.0, 1.0], yaw=0.0)
    corners = L.box_corners(box)
    assert corners.shape == (8, 3)
    np.testing.assert_allclose(corners.min(axis=0), [0.0, 1.5, 0.0])
    np.testing.assert_allclose(corners.max(axis=0), [2.0, 2.5, 1.0])


def test_box_corners_quarter_turn_swaps_extents():
    box = make_box(0, [0.0, 0.0, 0.0], [2.0, 1.0, 1.0], yaw=math.pi / 2)
    corners = L.box_corners(box)
    np.testing.assert_allclose(corners.min(axis=0), [-0.5, -1.0, -0.5], atol=1e-12)
    np.testing.assert_allclose(corners.max(axis=0), [0.5, 1.0, 0.5], atol=1e-12)


def test_room_of_inside_and_outside():
    lay = simple_layout(boxes=[make_box(0, [1.0, 1.0, 0.3], [0.5, 0.5, 0.5])])
    assert L.room_of(lay, lay.boxes[0]) == 0
    outside = make_box(1, [10.0, 1.0, 0.3], [0.5, 0.5, 0.5])
    assert L.room_of(lay, outside) is None


# --- object filter ---------------------------------------------------------


def test_filter_objects_edge_bounds():
    boxes = [
        make_box(0, [1.0, 1.0, 0.1], [0.05, 0.5, 0.5]),  # too short an edge
        make_box(1, [2.0, 1.0, 0.1], [0.2, 0.5, 0.5]),  # in range
        make_box(2, [3.0, 1.0, 0.1], [2.0, 0.5, 0.5]),  # too long an edge
        make_box(3, [1.0, 2.0, 0.1], [0.1, 1.8, 0.5]),  # exactly at both bounds: kept
        make_box(4, [9.0, 9.0, 0.1], [0.5, 0.5, 0.5]),  # outside every room
    ]
    lay = simple_layout(boxes=boxes)
    kept = L.filter_objects(lay)
    assert [b.id for b in kept.boxes] == [1, 3]


def test_filter_objects_idempotent_and_order_preserving():
    boxes = [make_box(i, [0.5 + i, 0.5, 0.1], [0.3, 0.3, 0.3]) for i in range(3)]
    lay = simple_layout(boxes=boxes)
    once = L.filter_objects(lay)
    twice = L.filter_objects(once)
    assert [b.id for b in once.boxes] == [0, 1, 2]
    assert [b.id for b in twice.boxes] == [b.id for b in once.boxes]


def test_filter_objects_leaves_input_unmodified():
    boxes = [make_box(0, [1.0, 1.0, 0.1], [0.05, 0.5, 0.5])]
    lay = simple_layout(boxes=boxes)
    L.filter_objects(lay)
    assert len(lay.boxes) == 1


# --- curation --------------------------------------------------------------


def grid_boxes(n, width, length, start_id=0):
    """n small in-range boxes on a grid inside a width x length room."""
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    sx = (width - 1.0) / max(cols - 1, 1)
    sy = (length - 1.0) / max(rows - 1, 1)
    out = []
    for i in range(n):
        r, c = divmod(i, cols)
        out.append(make_box(start_id + i, [0.5 + c * sx, 0.5 + r * sy, 0.15], [0.3, 0.3, 0.3]))
    return out


def rect_room(width, length, ceiling=2.6):
    # rectangle so the shoelace area is the exact float product
    return L.RoomPolygon(
        vertices=np.array([[0.0, 0.0], [width, 0.0], [width, length], [0.0, length]]),
        floor_z=0.0,
        ceiling_z=ceiling,
    )


def scene_with(width, length, n_objects):
    boxes = grid_boxes(n_objects, width, length)
    return L.SceneLayout(rooms=[rect_room(width, length)], boxes=boxes, arch=[], room_type="test")


def test_curate_area_threshold_strict():
    # 18 m^2 -> rejected; 21 m^2 -> accepted (with enough objects); 20 exactly -> rejected
    assert not L.curate(scene_with(3.0, 6.0, 40)).accept
    assert L.curate(scene_with(3.0, 7.0, 40)).accept
    assert not L.curate(scene_with(4.0, 5.0, 40)).accept
    reasons = L.curate(scene_with(3.0, 6.0, 40)).reasons
    assert any("area" in r for r in reasons)


def test_curate_object_count_strict():
    # exactly 35 objects -> rejected (strict >); 36 -> accepted
    assert not L.curate(scene_with(5.0, 5.0, 35)).accept
    assert L.curate(scene_with(5.0, 5.0, 36)).accept
    reasons = L.curate(scene_with(5.0, 5.0, 35)).reasons
    assert any("object" in r for r in reasons)


def test_curate_room_retention():
    # room of 9 m^2 with 4 objects is retained; 8 m^2 or 3 objects is not
    dec = L.curate(scene_with(3.0, 3.0, 4))
    assert dec.room_stats[0]["retained"]
    assert dec.retained_rooms == [0]
    dec = L.curate(scene_with(2.0, 4.0, 4))
    assert not dec.room_stats[0]["retained"]
    dec = L.curate(scene_with(3.0, 3.0, 3))
    assert not dec.room_stats[0]["retained"]
    assert dec.retained_rooms == []


def test_curate_reports_all_violations():
    dec = L.curate(scene_with(3.0, 6.0, 3))
    assert not dec.accept
    assert len(dec.reasons) >= 2  # scene area + scene count at least
    assert dec.total_objects == 3
    assert abs(dec.total_area - 18.0) < 1e-9


def test_curate_panorama_count_carried():
    dec = L.curate(scene_with(5.0, 5.0, 40), panorama_count=7)
    assert dec.panorama_count == 7
