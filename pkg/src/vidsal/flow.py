"""Optical flow: file I/O, block-matching estimation, and region match ratios.

Flow files are bit-exact: 4-byte little-endian float 202021.25, width and
height as 32-bit little-endian integers, then height*width interleaved (u, v)
32-bit little-endian floats, row-major.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import FlowField, Frame, RegionInfo
from .errors import InvalidArgument, MalformedInput

FLOW_MAGIC = 202021.25


def write_flow(field: FlowField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLOW_MAGIC))
        fh.write(struct.pack("<ii", field.width, field.height))
        fh.write(field.vectors.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) != 12:
            raise MalformedInput(f"{path}: truncated flow header")
        magic, w, h = struct.unpack("<fii", head)
        if magic != FLOW_MAGIC:
            raise MalformedInput(f"{path}: bad flow magic {magic!r}")
        if w <= 0 or h <= 0:
            raise MalformedInput(f"{path}: invalid flow dimensions {w}x{h}")
        payload = fh.read(8 * w * h)
        if len(payload) != 8 * w * h:
            raise MalformedInput(f"{path}: truncated flow payload")
        if fh.read(1):
            raise MalformedInput(f"{path}: trailing bytes after flow payload")
    vec = np.frombuffer(payload, dtype="<f4").reshape(h, w, 2)
    return FlowField(width=w, height=h, vectors=vec)


def _box_sums(img: np.ndarray, patch: int) -> np.ndarray:
    """Sum of img over every patch x patch window (img already padded by
    patch//2 on each side); returns one value per window center."""
    ii = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=ii[1:, 1:])
    return (ii[patch:, patch:] - ii[:-patch, patch:]
            - ii[patch:, :-patch] + ii[:-patch, :-patch])


def estimate_flow(frame_t: Frame, frame_t1: Frame, patch: int = 7,
                  search: int = 8) -> FlowField:
    """Integer block-matching flow minimizing per-pixel SAD over the patch.

    Ties resolve to the smallest displacement magnitude, then (dy, dx)
    lexicographic order. Frames are edge-padded so border pixels compare
    against replicated content.
    """
    if (frame_t.width, frame_t.height) != (frame_t1.width, frame_t1.height):
        raise InvalidArgument("flow estimation requires equal frame sizes")
    if patch < 1 or patch % 2 == 0:
        raise InvalidArgument("patch size must be odd and >= 1")
    if search < 0:
        raise InvalidArgument("search radius must be >= 0")

    half = patch // 2
    h, w = frame_t.height, frame_t.width
    a = np.pad(frame_t.pixels.astype(np.int32), ((half, half), (half, half), (0, 0)),
               mode="edge")
    pad_b = half + search
    b = np.pad(frame_t1.pixels.astype(np.int32), ((pad_b, pad_b), (pad_b, pad_b), (0, 0)),
               mode="edge")

    displacements = sorted(
        ((dy, dx) for dy in range(-search, search + 1)
         for dx in range(-search, search + 1)),
        key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
    )

    best_cost = np.full((h, w), np.iinfo(np.int64).max, dtype=np.int64)
    best_dx = np.zeros((h, w), dtype=np.int32)
    best_dy = np.zeros((h, w), dtype=np.int32)
    for dy, dx in displacements:
        shifted = b[search + dy:search + dy + h + 2 * half,
                    search + dx:search + dx + w + 2 * half]
        diff = np.abs(a - shifted).sum(axis=2)
        cost = _box_sums(diff, patch)
        better = cost < best_cost
        best_cost[better] = cost[better]
        best_dy[better] = dy
        best_dx[better] = dx

    vectors = np.stack([best_dx, best_dy], axis=2).astype(np.float32)
    return FlowField(width=w, height=h, vectors=vectors)


def warp_coordinates(flow: FlowField):
    """Round flow-displaced coordinates to the nearest pixel (halves toward
    +inf); returns (target_x, target_y, inside) arrays over the frame grid."""
    h, w = flow.height, flow.width
    ys, xs = np.mgrid[0:h, 0:w]
    tx = np.floor(xs + flow.vectors[..., 0] + 0.5).astype(np.int64)
    ty = np.floor(ys + flow.vectors[..., 1] + 0.5).astype(np.int64)
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    return tx, ty, inside


def pair_overlap_counts(labels_t: np.ndarray, labels_t1: np.ndarray,
                        flow: FlowField) -> np.ndarray:
    """Counts[i, j] = number of pixels of region i at t whose flow-warped
    position lands in region j at t+1. Out-of-frame warps are dropped."""
    labels_t = np.asarray(labels_t)
    labels_t1 = np.asarray(labels_t1)
    if labels_t.shape != (flow.height, flow.width):
        raise InvalidArgument("label map and flow field sizes differ")
    if labels_t.shape != labels_t1.shape:
        raise InvalidArgument("consecutive label maps have different sizes")
    n_t = int(labels_t.max()) + 1
    n_t1 = int(labels_t1.max()) + 1
    tx, ty, inside = warp_coordinates(flow)
    src = labels_t[inside]
    dst = labels_t1[ty[inside], tx[inside]]
    counts = np.bincount(src.astype(np.int64) * n_t1 + dst,
                         minlength=n_t * n_t1)
    return counts.reshape(n_t, n_t1)


def match_ratio(labels_t: np.ndarray, region_i: RegionInfo,
                labels_t1: np.ndarray, region_j: RegionInfo,
                forward_flow: FlowField, backward_flow: FlowField) -> float:
    """Average of the two directed warped-area overlap ratios.

    phi = 0.5 * (|warp_fwd(i) & j| / |i| + |warp_bwd(j) & i| / |j|); warped
    pixels leaving the frame count against the match.
    """
    fwd = _directed_overlap(labels_t, region_i.id, labels_t1, region_j.id,
                            forward_flow)
    bwd = _directed_overlap(labels_t1, region_j.id, labels_t, region_i.id,
                            backward_flow)
    return 0.5 * (fwd / region_i.area + bwd / region_j.area)


def _directed_overlap(src_labels, src_id, dst_labels, dst_id, flow) -> int:
    src_labels = np.asarray(src_labels)
    dst_labels = np.asarray(dst_labels)
    if src_labels.shape != (flow.height, flow.width):
        raise InvalidArgument("label map and flow field sizes differ")
    tx, ty, inside = warp_coordinates(flow)
    sel = (src_labels == src_id) & inside
    return int(np.count_nonzero(dst_labels[ty[sel], tx[sel]] == dst_id))
