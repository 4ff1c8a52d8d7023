"""On-disk formats.

PNG (via Pillow):
    color     8-bit RGB
    semantic  paletted (mode P) with the category palette colors
    depth     16-bit grayscale, millimeters, values past 65.535 m clip

SCM1  raw coordinate map: magic b"SCM1", u32 width/height/channels (LE),
      float32 LE values (row-major), then height*width validity bytes.

PLY   binary_little_endian point clouds with per-point
      x/y/z float, red/green/blue uchar, semantic ushort, confidence float,
      source_view int.

SGCK  checkpoint container: magic b"SGCK", u32 version, u64 header length,
      JSON header {"meta": ..., "blobs": [{name, dtype, shape, offset, nbytes}]},
      then the raw blob bytes (C-order, little-endian dtypes).

CSV/JSON helpers keep key order stable so repeated runs produce identical
bytes; nothing here writes timestamps.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from scenesynth.palette import CategoryPalette, default_palette
from scenesynth.warp import GlobalPointCloud

__all__ = [
    "save_color_png",
    "load_color_png",
    "save_semantic_png",
    "load_semantic_png",
    "save_depth_png",
    "load_depth_png",
    "save_scm",
    "load_scm",
    "save_ply",
    "load_ply",
    "save_checkpoint",
    "load_checkpoint",
    "save_csv",
    "load_csv",
    "save_json",
    "load_json",
]

PathLike = Union[str, Path]

SCM_MAGIC = b"SCM1"
CKPT_MAGIC = b"SGCK"
CKPT_VERSION = 1
DEPTH_SCALE = 1000.0  # meters -> millimeters


# ---------------------------------------------------------------------------
# PNG


def save_color_png(path: PathLike, rgb: np.ndarray) -> None:
    arr = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="RGB")
    img.save(str(path))


def load_color_png(path: PathLike) -> np.ndarray:
    img = Image.open(str(path)).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_semantic_png(path: PathLike, semantic: np.ndarray, palette: Optional[CategoryPalette] = None) -> None:
    palette = palette or default_palette()
    sem = np.asarray(semantic)
    if sem.min() < 0 or sem.max() > 255:
        raise ValueError("semantic ids must fit in one byte")
    img = Image.fromarray(sem.astype(np.uint8), mode="P")
    pal = np.zeros((256, 3), dtype=np.uint8)
    pal[: len(palette.names)] = palette.color_array()
    img.putpalette(pal.reshape(-1).tolist())
    img.save(str(path))


def load_semantic_png(path: PathLike) -> np.ndarray:
    img = Image.open(str(path))
    if img.mode != "P":
        raise ValueError(f"{path}: expected a paletted png")
    return np.asarray(img, dtype=np.int32)


def save_depth_png(path: PathLike, depth: np.ndarray) -> None:
    mm = np.round(np.asarray(depth, dtype=np.float64) * DEPTH_SCALE)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(str(path))  # uint16 -> mode I;16


def load_depth_png(path: PathLike) -> np.ndarray:
    img = Image.open(str(path))
    arr = np.asarray(img)
    if arr.dtype not in (np.uint16, np.int32):
        raise ValueError(f"{path}: expected 16-bit depth png")
    return arr.astype(np.float64) / DEPTH_SCALE


# ---------------------------------------------------------------------------
# SCM1


def save_scm(path: PathLike, values: np.ndarray, valid: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    h, w, c = values.shape
    if valid.shape != (h, w):
        raise ValueError("validity mask shape mismatch")
    with open(path, "wb") as f:
        f.write(SCM_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(values.astype("<f4").tobytes(order="C"))
        f.write(valid.astype(np.uint8).tobytes(order="C"))


def load_scm(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SCM_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        w, h, c = struct.unpack("<III", f.read(12))
        values = np.frombuffer(f.read(4 * h * w * c), dtype="<f4").reshape(h, w, c)
        valid = np.frombuffer(f.read(h * w), dtype=np.uint8).reshape(h, w)
    return values.astype(np.float64), valid.astype(bool)


# ---------------------------------------------------------------------------
# PLY


_PLY_PROPS = [
    ("x", "float", "<f4"),
    ("y", "float", "<f4"),
    ("z", "float", "<f4"),
    ("red", "uchar", "u1"),
    ("green", "uchar", "u1"),
    ("blue", "uchar", "u1"),
    ("semantic", "ushort", "<u2"),
    ("confidence", "float", "<f4"),
    ("source_view", "int", "<i4"),
]


def save_ply(path: PathLike, cloud: GlobalPointCloud) -> None:
    n = len(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property {t} {name}" for name, t, _ in _PLY_PROPS]
    header.append("end_header")
    rec = np.dtype([(name, np_t) for name, _, np_t in _PLY_PROPS])
    data = np.empty(n, dtype=rec)
    pos = cloud.positions.astype(np.float32)
    data["x"], data["y"], data["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    rgb = np.clip(np.round(cloud.colors * 255.0), 0, 255).astype(np.uint8)
    data["red"], data["green"], data["blue"] = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    data["semantic"] = cloud.semantics.astype(np.uint16)
    data["confidence"] = cloud.confidence.astype(np.float32)
    data["source_view"] = cloud.source_view.astype(np.int32)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(data.tobytes())


def load_ply(path: PathLike) -> GlobalPointCloud:
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.index(b"end_header\n") + len(b"end_header\n")
    lines = blob[:end].decode("ascii").splitlines()
    if lines[0] != "ply" or "binary_little_endian" not in lines[1]:
        raise ValueError(f"{path}: not a binary little-endian ply")
    n = None
    props: List[str] = []
    for line in lines:
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        elif line.startswith("property"):
            props.append(line.split()[-1])
    if n is None:
        raise ValueError(f"{path}: missing vertex element")
    if props != [name for name, _, _ in _PLY_PROPS]:
        raise ValueError(f"{path}: unexpected property layout {props}")
    rec = np.dtype([(name, np_t) for name, _, np_t in _PLY_PROPS])
    data = np.frombuffer(blob, dtype=rec, count=n, offset=end)
    return GlobalPointCloud(
        positions=np.stack(
            [data["x"], data["y"], data["z"]], axis=1
        ).astype(np.float64),
        colors=np.stack(
            [data["red"], data["green"], data["blue"]], axis=1
        ).astype(np.float64) / 255.0,
        semantics=data["semantic"].astype(np.int32),
        confidence=data["confidence"].astype(np.float64),
        source_view=data["source_view"].astype(np.int32),
    )


# ---------------------------------------------------------------------------
# SGCK checkpoints


def save_checkpoint(path: PathLike, meta: dict, blobs: Dict[str, np.ndarray]) -> None:
    specs = []
    payload = bytearray()
    for name in sorted(blobs):
        arr = np.ascontiguousarray(blobs[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        specs.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": len(payload),
                "nbytes": arr.nbytes,
            }
        )
        payload += arr.tobytes(order="C")
    header = json.dumps({"meta": meta, "blobs": specs}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<IQ", CKPT_VERSION, len(header)))
        f.write(header)
        f.write(bytes(payload))


def load_checkpoint(path: PathLike) -> Tuple[dict, Dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        payload = f.read()
    blobs: Dict[str, np.ndarray] = {}
    for spec in header["blobs"]:
        raw = payload[spec["offset"] : spec["offset"] + spec["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(spec["dtype"]))
        blobs[spec["name"]] = arr.reshape(spec["shape"]).copy()
    return header["meta"], blobs


# ---------------------------------------------------------------------------
# CSV / JSON


def save_csv(path: PathLike, rows: Sequence[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def load_csv(path: PathLike) -> List[dict]:
    with open(path, newline="") as f:
        return [dict(row) for row in csv.DictReader(f)]


def save_json(path: PathLike, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: PathLike):
    return json.loads(Path(path).read_text())
