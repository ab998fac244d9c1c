"""Readers and writers for the saliency pipeline's on-disk interchange
formats. These are reimplemented from the format contracts on purpose: the
exporter talks to the pipeline through files only.

- label maps: magic "STLB", version u16, width u32, height u32, then
  width*height little-endian u32 labels, row-major
- track file: text lines `scale_id frame_index region_id track_id`
- feature file: magic "STFT", version u16, D_r u32, D_g u32, count_r u64,
  count_g u64, then region records (scale u16, frame u32, region u32, D_r
  float32) and global records (frame u32, D_g float32), little-endian
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

LABEL_MAGIC = b"STLB"
FEATURE_MAGIC = b"STFT"
VERSION = 1

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"}


class FormatError(ValueError):
    pass


def load_frames(directory) -> list[np.ndarray]:
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not paths:
        raise FormatError(f"no image files in {directory}")
    frames = [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
              for p in paths]
    if any(f.shape != frames[0].shape for f in frames):
        raise FormatError("frames differ in size")
    return frames


def read_label_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != LABEL_MAGIC:
            raise FormatError(f"{path}: bad label-map magic")
        header = fh.read(10)
        if len(header) != 10:
            raise FormatError(f"{path}: truncated header")
        version, w, h = struct.unpack("<HII", header)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<u4").reshape(h, w).astype(np.int64)


def load_label_maps(directory) -> dict[int, dict[int, np.ndarray]]:
    """scale_id -> frame_index -> label map, from labels_sSS_fFFFFF.stlb."""
    directory = Path(directory)
    out: dict[int, dict[int, np.ndarray]] = {}
    for p in sorted(directory.glob("labels_s*_f*.stlb")):
        parts = p.stem.split("_")
        try:
            scale = int(parts[1][1:])
            frame = int(parts[2][1:])
        except (IndexError, ValueError):
            raise FormatError(f"{p}: unrecognized label-map name")
        out.setdefault(scale, {})[frame] = read_label_map(p)
    if not out:
        raise FormatError(f"{directory}: no label maps found")
    return out


def read_track_file(path) -> list[tuple[int, int, int, int]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields")
            rows.append(tuple(int(p) for p in parts))
    if not rows:
        raise FormatError(f"{path}: empty track file")
    return rows


def write_feature_file(path, region_records, global_records,
                       region_dim: int, global_dim: int) -> None:
    """region_records: iterable of ((scale, frame, region), vector);
    global_records: iterable of (frame, vector). Sorted before writing so
    output bytes are a pure function of the content."""
    region_records = sorted(region_records, key=lambda kv: kv[0])
    global_records = sorted(global_records, key=lambda kv: kv[0])
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HIIQQ", VERSION, region_dim, global_dim,
                             len(region_records), len(global_records)))
        for (scale, frame, region), vec in region_records:
            vec = np.asarray(vec, dtype="<f4").ravel()
            if vec.size != region_dim:
                raise FormatError(
                    f"region record ({scale},{frame},{region}) has dim "
                    f"{vec.size}, expected {region_dim}")
            fh.write(struct.pack("<HII", scale, frame, region))
            fh.write(vec.tobytes())
        for frame, vec in global_records:
            vec = np.asarray(vec, dtype="<f4").ravel()
            if vec.size != global_dim:
                raise FormatError(f"global record ({frame}) has dim "
                                  f"{vec.size}, expected {global_dim}")
            fh.write(struct.pack("<I", frame))
            fh.write(vec.tobytes())
