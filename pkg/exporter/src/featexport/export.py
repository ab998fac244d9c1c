"""Batch export: run the backbones over a segmented video and write the
pipeline's feature file plus a manifest and a sidecar warning report.

Every region of the segmentation yields exactly one record or one sidecar
line. Region crops take the region's bounding box, zero out pixels of other
regions, pad to square (edge replication; always applied to crops smaller
than the backbone input) and resize to the backbone's input size. Global
records come from the 16-frame window around each frame (offsets -7..+8,
repeating the first/last frame past the video ends) resized per frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .backbones import BlockBackbone, RegionBackbone
from .formats import (FormatError, load_frames, load_label_maps,
                      read_track_file, write_feature_file)

CLIP_LENGTH = 16
CLIP_BEFORE = 7  # offsets -7 .. +8 around the center frame


@dataclass
class ExportResult:
    region_count: int
    global_count: int
    skipped: list[str]


def _square_pad(crop: np.ndarray) -> np.ndarray:
    h, w = crop.shape[:2]
    side = max(h, w)
    return np.pad(crop, ((0, side - h), (0, side - w), (0, 0)), mode="edge")


def _region_crop(frame: np.ndarray, labels: np.ndarray, region_id: int,
                 size: int) -> np.ndarray | None:
    mask = labels == region_id
    if not mask.any():
        return None
    ys, xs = np.nonzero(mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    crop = frame[y0:y1, x0:x1].copy()
    crop[~mask[y0:y1, x0:x1]] = 0
    crop = _square_pad(crop)
    img = Image.fromarray(crop).resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.uint8)


def _clip_window(frames: list[np.ndarray], center: int,
                 size: int) -> np.ndarray:
    n = len(frames)
    window = []
    for offset in range(-CLIP_BEFORE, CLIP_LENGTH - CLIP_BEFORE):
        idx = min(max(center + offset, 0), n - 1)
        img = Image.fromarray(frames[idx]).resize((size, size),
                                                  Image.BILINEAR)
        window.append(np.asarray(img, dtype=np.uint8))
    return np.stack(window)


def export(frames_dir, labels_dir, track_path, output_path,
           region_backbone: RegionBackbone, block_backbone: BlockBackbone,
           batch_size: int = 16) -> ExportResult:
    frames = load_frames(frames_dir)
    label_maps = load_label_maps(labels_dir)
    rows = read_track_file(track_path)

    wanted = sorted({(scale, frame, region)
                     for scale, frame, region, _ in rows})
    for scale, frame, region in wanted:
        if scale not in label_maps or frame not in label_maps[scale]:
            raise FormatError(
                f"track file references missing label map "
                f"(scale {scale}, frame {frame})")

    skipped: list[str] = []
    region_records = []
    pending_keys, pending_crops = [], []

    def flush():
        if not pending_crops:
            return
        embeddings = region_backbone.embed(np.stack(pending_crops))
        region_records.extend(zip(pending_keys, embeddings))
        pending_keys.clear()
        pending_crops.clear()

    for key in wanted:
        scale, frame, region = key
        crop = _region_crop(frames[frame], label_maps[scale][frame], region,
                            region_backbone.input_size)
        if crop is None:
            skipped.append(f"region scale={scale} frame={frame} id={region}: "
                           f"zero pixels after crop")
            continue
        pending_keys.append(key)
        pending_crops.append(crop)
        if len(pending_crops) >= batch_size:
            flush()
    flush()

    global_records = []
    for t in range(len(frames)):
        clip = _clip_window(frames, t, block_backbone.input_size)
        global_records.append((t, block_backbone.embed(clip)))

    write_feature_file(output_path, region_records, global_records,
                       region_backbone.out_dim, block_backbone.out_dim)
    return ExportResult(region_count=len(region_records),
                        global_count=len(global_records), skipped=skipped)


def write_manifest(path, region_backbone: RegionBackbone,
                   block_backbone: BlockBackbone, seed: int) -> None:
    lines = [
        f"region_backbone={region_backbone.name}",
        f"region_dim={region_backbone.out_dim}",
        f"region_input={region_backbone.input_size}",
        f"region_weights={'file' if region_backbone.pretrained else 'seeded-random'}",
        f"block_backbone={block_backbone.name}",
        f"block_dim={block_backbone.out_dim}",
        f"block_input={block_backbone.input_size}",
        f"block_weights={'file' if block_backbone.pretrained else 'seeded-random'}",
        f"seed={seed}",
        "region_preprocess=bbox crop, other regions zeroed, edge-pad to "
        "square, bilinear resize",
        f"clip_window=16 frames, offsets -{CLIP_BEFORE}..+"
        f"{CLIP_LENGTH - CLIP_BEFORE - 1}, edge frames repeated",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def write_sidecar(path, skipped: list[str]) -> None:
    Path(path).write_text("".join(f"{line}\n" for line in skipped))
