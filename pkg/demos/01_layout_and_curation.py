"""Build a scene layout by hand, run the curation rules, filter bad boxes.

Shows the layout data model (rooms, boxes, arch openings), the dataset
curation thresholds (floor area, object count, edge lengths, panorama
coverage), and the box filter used to clean noisy catalogs.
"""
import sys
from pathlib import Path

import numpy as np

from scenesynth.layout import (
    ArchQuad,
    RoomPolygon,
    SceneLayout,
    SemanticBox,
    curate,
    filter_objects,
    load_layout,
    save_layout,
)

OUT = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/01_layout")
OUT.mkdir(parents=True, exist_ok=True)


def box(bid, center, size, yaw=0.0, category=10):
    return SemanticBox(
        id=bid,
        center=np.asarray(center, float),
        size=np.asarray(size, float),
        yaw=yaw,
        category=category,
    )


room = RoomPolygon(
    vertices=np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]]),
    floor_z=0.0,
    ceiling_z=2.6,
)
layout = SceneLayout(
    room_type="bedroom",
    rooms=[room],
    boxes=[
        box(1, [1.2, 2.0, 0.3], [1.6, 1.7, 0.6], yaw=0.1, category=12),  # bed
        box(2, [3.4, 3.4, 1.0], [0.2, 0.2, 0.4], category=30),  # lamp
        box(3, [2.0, 0.5, 1.0], [0.02, 0.4, 0.4], category=30),  # sliver: too thin
        box(4, [3.0, 1.0, 1.2], [2.5, 0.8, 2.4], category=15),  # edge > 1.8
    ],
    arch=[
        ArchQuad(
            kind="door",
            corners=np.array(
                [[0.0, 1.0, 0.0], [0.0, 1.9, 0.0], [0.0, 1.9, 2.1], [0.0, 1.0, 2.1]]
            ),
        )
    ],
    lighting={"direction": [0.3, -0.5, -0.8], "intensity": 1.0},
)

print(f"layout: {len(layout.rooms)} room(s), {len(layout.boxes)} boxes, "
      f"{len(layout.arch)} arch element(s)")

decision = curate(layout)
print(f"curation: {'accept' if decision.accept else 'reject'}")
print(f"  total area {decision.total_area:.1f} m^2, objects {decision.total_objects}")
for reason in decision.reasons:
    print(f"  - {reason}")

filtered = filter_objects(layout, min_edge=0.1, max_edge=1.8)
names = {1: "bed", 2: "lamp", 3: "sliver", 4: "monolith"}
dropped = {b.id for b in layout.boxes} - {b.id for b in filtered.boxes}
print(f"filter: dropped {sorted(names[i] for i in dropped)} -> "
      f"{len(filtered.boxes)} boxes remain")

path = OUT / "bedroom.json"
save_layout(filtered, str(path))
roundtrip = load_layout(str(path))
assert len(roundtrip.boxes) == len(filtered.boxes)
print(f"saved + reloaded {path}")
