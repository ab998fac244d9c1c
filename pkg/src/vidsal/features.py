"""Region features and their spatiotemporal aggregation.

A FeatureStore holds per-region feature vectors (from any provider: the
built-in RGB-histogram one or an externally exported file) plus optional
per-frame global vectors. Local features are Gaussian-weighted sums of a
track's region features over an adaptive window; the final descriptor is
the concatenation of the local and a block-level global feature.

Feature file layout (all little-endian): magic "STFT", version u16, D_r u32,
D_g u32, count_r u64, count_g u64; then count_r records of (scale_id u16,
frame u32, region u32, D_r float32) followed by count_g records of
(frame u32, D_g float32). Records are stored as 32-bit floats; aggregation
runs in 64-bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import FeatureVector, Frame, TemporalSegment
from .errors import InvalidArgument, MalformedInput, MissingFeature

FEATURE_MAGIC = b"STFT"
FEATURE_VERSION = 1

RGB_BINS = 32
RGB_FEATURE_DIM = 3 * RGB_BINS


@dataclass(frozen=True)
class AggregationParams:
    """Window and kernel width for temporal feature aggregation."""

    k_default: int = 16
    sigma: float = 2.0

    def __post_init__(self):
        if self.k_default < 0 or self.k_default % 2 != 0:
            raise InvalidArgument("k_default must be an even integer >= 0")
        if self.sigma <= 0:
            raise InvalidArgument("sigma must be > 0")


class FeatureStore:
    """Read-mostly map of region and per-frame global feature vectors."""

    def __init__(self):
        self.region_features: dict[tuple[int, int, int], np.ndarray] = {}
        self.global_features: dict[int, np.ndarray] = {}
        self.region_dim: int | None = None
        self.global_dim: int | None = None

    def add_region(self, scale_id: int, frame_index: int, region_id: int,
                   values) -> None:
        vec = np.asarray(values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(vec)):
            raise InvalidArgument("region feature contains non-finite values")
        if self.region_dim is None:
            self.region_dim = vec.size
        elif vec.size != self.region_dim:
            raise InvalidArgument(
                f"region feature dim {vec.size} != store dim {self.region_dim}")
        self.region_features[(scale_id, frame_index, region_id)] = vec

    def add_global(self, frame_index: int, values) -> None:
        vec = np.asarray(values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(vec)):
            raise InvalidArgument("global feature contains non-finite values")
        if self.global_dim is None:
            self.global_dim = vec.size
        elif vec.size != self.global_dim:
            raise InvalidArgument(
                f"global feature dim {vec.size} != store dim {self.global_dim}")
        self.global_features[frame_index] = vec

    def region(self, scale_id: int, frame_index: int, region_id: int) -> np.ndarray:
        try:
            return self.region_features[(scale_id, frame_index, region_id)]
        except KeyError:
            raise MissingFeature(
                f"no region feature for scale {scale_id}, frame {frame_index}, "
                f"region {region_id}") from None


def effective_k(track: TemporalSegment, t: int, k_default: int) -> int:
    """Largest even window (capped at k_default) symmetric about t within
    the track's contiguous presence."""
    if k_default < 0 or k_default % 2 != 0:
        raise InvalidArgument("k_default must be an even integer >= 0")
    if not track.first_frame <= t <= track.last_frame:
        raise InvalidArgument(
            f"frame {t} is not a member of track {track.track_id}")
    before = t - track.first_frame
    after = track.last_frame - t
    return min(k_default, 2 * min(before, after))


def gaussian_weights(t: int, k: int, sigma: float) -> np.ndarray:
    """Normalized Gaussian weights over frames t-k/2 .. t+k/2."""
    if k < 0 or k % 2 != 0:
        raise InvalidArgument("k must be an even integer >= 0")
    if sigma <= 0:
        raise InvalidArgument("sigma must be > 0")
    offsets = np.arange(-(k // 2), k // 2 + 1, dtype=np.float64)
    w = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return w / w.sum()


def local_feature(track: TemporalSegment, t: int, store: FeatureStore,
                  params: AggregationParams) -> FeatureVector:
    """Gaussian-weighted sum of the track's region features around frame t."""
    k = effective_k(track, t, params.k_default)
    weights = gaussian_weights(t, k, params.sigma)
    acc = None
    for offset, w in zip(range(-(k // 2), k // 2 + 1), weights):
        frame = t + offset
        vec = store.region(track.scale_id, frame, track.region_at(frame))
        acc = w * vec if acc is None else acc + w * vec
    return FeatureVector(values=acc, kind="local")


def global_feature(block_frames, store: FeatureStore,
                   scale_id: int | None = None) -> FeatureVector:
    """Block-level global feature.

    With per-frame global entries present (deep provider), returns the entry
    for the block's center frame. Otherwise falls back to the mean of all
    region features of the given scale over the block's frames.
    """
    frames = list(block_frames)
    if not frames:
        raise InvalidArgument("empty block")
    if store.global_features:
        center = frames[(len(frames) - 1) // 2]
        if center not in store.global_features:
            raise MissingFeature(f"no global feature for frame {center}")
        return FeatureVector(values=store.global_features[center], kind="global")
    frame_set = set(frames)
    vecs = [v for (s, f, _), v in sorted(store.region_features.items())
            if f in frame_set and (scale_id is None or s == scale_id)]
    if not vecs:
        raise MissingFeature(
            f"no region features in block frames {frames[0]}..{frames[-1]}")
    return FeatureVector(values=np.mean(vecs, axis=0), kind="global")


def concat_std(local: FeatureVector, global_: FeatureVector) -> FeatureVector:
    """Concatenate local then global into the combined descriptor."""
    return FeatureVector(values=np.concatenate([local.values, global_.values]),
                         kind="std")


def rgb_region_feature(frame: Frame, labels: np.ndarray,
                       region_id: int) -> FeatureVector:
    """Hand-crafted provider: per-channel 32-bin normalized color histograms
    of the region's pixels (96 dims, each channel summing to 1)."""
    mask = np.asarray(labels) == region_id
    if not mask.any():
        raise InvalidArgument(f"region {region_id} has no pixels")
    px = frame.pixels[mask]
    hist = np.empty(RGB_FEATURE_DIM, dtype=np.float64)
    for ch in range(3):
        bins = np.bincount(px[:, ch] >> 3, minlength=RGB_BINS).astype(np.float64)
        hist[ch * RGB_BINS:(ch + 1) * RGB_BINS] = bins / px.shape[0]
    return FeatureVector(values=hist, kind="region_based")


def build_rgb_store(frames, segmentations) -> FeatureStore:
    """Populate a store with RGB-histogram features for every region of
    every scale. Global features stay empty (block means are used)."""
    store = FeatureStore()
    for seg in segmentations:
        for rs in seg.region_sets:
            frame = frames[rs.frame_index]
            labels = rs.labels
            for info in rs.regions:
                fv = rgb_region_feature(frame, labels, info.id)
                store.add_region(seg.scale_id, rs.frame_index, info.id, fv.values)
    return store


def save_features(store: FeatureStore, path) -> None:
    region_items = sorted(store.region_features.items())
    global_items = sorted(store.global_features.items())
    d_r = store.region_dim or 0
    d_g = store.global_dim or 0
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HIIQQ", FEATURE_VERSION, d_r, d_g,
                             len(region_items), len(global_items)))
        for (scale, frame, region), vec in region_items:
            fh.write(struct.pack("<HII", scale, frame, region))
            fh.write(vec.astype("<f4").tobytes())
        for frame, vec in global_items:
            fh.write(struct.pack("<I", frame))
            fh.write(vec.astype("<f4").tobytes())


def load_features(path) -> FeatureStore:
    store = FeatureStore()
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise MalformedInput(f"{path}: bad feature-file magic {magic!r}")
        header = fh.read(26)
        if len(header) != 26:
            raise MalformedInput(f"{path}: truncated feature-file header")
        version, d_r, d_g, count_r, count_g = struct.unpack("<HIIQQ", header)
        if version != FEATURE_VERSION:
            raise MalformedInput(f"{path}: unsupported feature version {version}")
        if (count_r and d_r == 0) or (count_g and d_g == 0):
            raise MalformedInput(f"{path}: records declared with zero dimension")
        rec_size = 10 + 4 * d_r
        for _ in range(count_r):
            rec = fh.read(rec_size)
            if len(rec) != rec_size:
                raise MalformedInput(f"{path}: truncated region record")
            scale, frame, region = struct.unpack("<HII", rec[:10])
            vec = np.frombuffer(rec[10:], dtype="<f4").astype(np.float64)
            if not np.all(np.isfinite(vec)):
                raise MalformedInput(
                    f"{path}: non-finite region feature (scale {scale}, "
                    f"frame {frame}, region {region})")
            store.add_region(scale, frame, region, vec)
        rec_size = 4 + 4 * d_g
        for _ in range(count_g):
            rec = fh.read(rec_size)
            if len(rec) != rec_size:
                raise MalformedInput(f"{path}: truncated global record")
            (frame,) = struct.unpack("<I", rec[:4])
            vec = np.frombuffer(rec[4:], dtype="<f4").astype(np.float64)
            if not np.all(np.isfinite(vec)):
                raise MalformedInput(f"{path}: non-finite global feature "
                                     f"(frame {frame})")
            store.add_global(frame, vec)
        if fh.read(1):
            raise MalformedInput(f"{path}: trailing bytes after records")
    if count_r and store.region_dim != d_r:
        raise MalformedInput(f"{path}: region dim mismatch")
    if count_g and store.global_dim != d_g:
        raise MalformedInput(f"{path}: global dim mismatch")
    return store
