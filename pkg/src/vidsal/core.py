"""Shared data model: frames, regions, tracks, features, flows, saliency maps.

All types are immutable after construction (numpy buffers are marked
read-only), so they can be shared freely across parallel workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import InvalidArgument, MalformedInput

LABEL_MAGIC = b"STLB"
LABEL_VERSION = 1

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".tif", ".tiff"}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Frame:
    """One 8-bit RGB video frame."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    index: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgument(f"frame {self.index}: non-positive dimensions")
        if self.index < 0:
            raise InvalidArgument("frame index must be >= 0")
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise InvalidArgument(
                f"frame {self.index}: pixel buffer {px.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixels", _freeze(px))


@dataclass(frozen=True)
class RegionInfo:
    """Geometry of one region: area, centroid, bounding box, adjacency.

    The bounding box is inclusive pixel coordinates (x0, y0, x1, y1);
    centroids are arithmetic means of member pixel coordinates.
    """

    id: int
    area: int
    centroid: tuple[float, float]
    bbox: tuple[int, int, int, int]
    spatial_neighbors: frozenset[int]


@dataclass(frozen=True)
class RegionSet:
    """Per-frame, per-scale partition of pixels into labeled regions."""

    frame_index: int
    scale_id: int
    labels: np.ndarray  # (height, width) int32
    regions: tuple[RegionInfo, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int32)
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def from_labels(cls, labels, frame_index=0, scale_id=0) -> "RegionSet":
        labels = np.asarray(labels, dtype=np.int32)
        regions = region_geometry(labels)
        return cls(frame_index=frame_index, scale_id=scale_id,
                   labels=labels, regions=tuple(regions))


@dataclass(frozen=True)
class TemporalSegment:
    """A track: the same surface chained across consecutive frames."""

    track_id: int
    scale_id: int
    members: tuple[tuple[int, int], ...]  # ordered (frame_index, region_id)

    def __post_init__(self):
        members = tuple((int(f), int(r)) for f, r in self.members)
        if not members:
            raise InvalidArgument(f"track {self.track_id}: no members")
        frames = [f for f, _ in members]
        for a, b in zip(frames, frames[1:]):
            if b != a + 1:
                raise InvalidArgument(
                    f"track {self.track_id}: frames {a} -> {b} not consecutive"
                )
        object.__setattr__(self, "members", members)

    @property
    def first_frame(self) -> int:
        return self.members[0][0]

    @property
    def last_frame(self) -> int:
        return self.members[-1][0]

    def region_at(self, frame_index: int) -> int:
        if not self.first_frame <= frame_index <= self.last_frame:
            raise InvalidArgument(
                f"track {self.track_id} has no member at frame {frame_index}"
            )
        return self.members[frame_index - self.first_frame][1]


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-dimension real feature attached to a region or frame."""

    values: np.ndarray
    kind: str  # region_based | local | global | std

    KINDS = ("region_based", "local", "global", "std")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size == 0:
            raise InvalidArgument("feature vector must be non-empty")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("feature vector contains non-finite values")
        if self.kind not in self.KINDS:
            raise InvalidArgument(f"unknown feature kind {self.kind!r}")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (dx, dy) displacements from frame t to t+1."""

    width: int
    height: int
    vectors: np.ndarray  # (height, width, 2) float32, [..., 0]=dx, [..., 1]=dy

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float32)
        if vec.shape != (self.height, self.width, 2):
            raise InvalidArgument(
                f"flow buffer {vec.shape} does not match {self.height}x{self.width}x2"
            )
        if not np.all(np.isfinite(vec)):
            raise InvalidArgument("flow field contains non-finite values")
        object.__setattr__(self, "vectors", _freeze(vec))


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel saliency values in [0, 1] for one frame."""

    frame_index: int
    values: np.ndarray  # (height, width) float64

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidArgument("saliency map must be 2-D")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise InvalidArgument("saliency values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(values))


def region_geometry(labels: np.ndarray) -> list[RegionInfo]:
    """Compute areas, centroids, bboxes and symmetric 4-connected adjacency.

    Labels must cover [0, n) contiguously; a gap raises MalformedInput.
    """
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.size == 0:
        raise InvalidArgument("label map must be a non-empty 2-D array")
    if labels.min() < 0:
        raise MalformedInput("negative region id in label map")
    n = int(labels.max()) + 1
    areas = np.bincount(labels.ravel(), minlength=n)
    missing = np.flatnonzero(areas == 0)
    if missing.size:
        raise MalformedInput(f"gap in label ids: id {int(missing[0])} has no pixels")

    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    flat = labels.ravel()
    sum_x = np.bincount(flat, weights=xs.ravel(), minlength=n)
    sum_y = np.bincount(flat, weights=ys.ravel(), minlength=n)

    slices = ndimage.find_objects(labels + 1)

    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        diff = a != b
        pairs = np.stack([a[diff], b[diff]], axis=1)
        if pairs.size:
            for p, q in np.unique(pairs, axis=0):
                neighbors[p].add(int(q))
                neighbors[q].add(int(p))

    regions = []
    for rid in range(n):
        sl = slices[rid]
        y0, y1 = sl[0].start, sl[0].stop - 1
        x0, x1 = sl[1].start, sl[1].stop - 1
        regions.append(RegionInfo(
            id=rid,
            area=int(areas[rid]),
            centroid=(sum_x[rid] / areas[rid], sum_y[rid] / areas[rid]),
            bbox=(int(x0), int(y0), int(x1), int(y1)),
            spatial_neighbors=frozenset(neighbors[rid]),
        ))
    return regions


def split_disconnected(labels: np.ndarray) -> np.ndarray:
    """Relabel so every region is one 4-connected component.

    Components are given fresh contiguous ids in raster order of their first
    pixel; an already-connected labeling keeps its region shapes (ids may be
    renumbered).
    """
    labels = np.asarray(labels, dtype=np.int32)
    out = np.full_like(labels, -1)
    next_id = 0
    order = []
    for rid in range(int(labels.max()) + 1):
        mask = labels == rid
        if not mask.any():
            raise MalformedInput(f"gap in label ids: id {rid} has no pixels")
        comp, ncomp = ndimage.label(mask, structure=FOUR_CONNECTED)
        for c in range(1, ncomp + 1):
            cmask = comp == c
            first = int(np.flatnonzero(cmask.ravel())[0])
            order.append((first, cmask))
    order.sort(key=lambda t: t[0])
    for _, cmask in order:
        out[cmask] = next_id
        next_id += 1
    return out


def connectivity_ok(labels: np.ndarray) -> bool:
    """True when every region id is a single 4-connected component."""
    labels = np.asarray(labels)
    for rid in range(int(labels.max()) + 1):
        mask = labels == rid
        if not mask.any():
            return False
        _, ncomp = ndimage.label(mask, structure=FOUR_CONNECTED)
        if ncomp != 1:
            return False
    return True


def write_label_map(labels: np.ndarray, path) -> None:
    """Serialize a label map: magic "STLB", version u16, width u32, height u32,
    then width*height little-endian u32 labels, row-major."""
    labels = np.asarray(labels, dtype=np.uint32)
    h, w = labels.shape
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<HII", LABEL_VERSION, w, h))
        fh.write(labels.astype("<u4").tobytes())


def read_label_map(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != LABEL_MAGIC:
            raise MalformedInput(f"{path}: bad label-map magic {magic!r}")
        header = fh.read(10)
        if len(header) != 10:
            raise MalformedInput(f"{path}: truncated label-map header")
        version, w, h = struct.unpack("<HII", header)
        if version != LABEL_VERSION:
            raise MalformedInput(f"{path}: unsupported label-map version {version}")
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise MalformedInput(f"{path}: truncated label-map payload")
        if fh.read(1):
            raise MalformedInput(f"{path}: trailing bytes after label map")
    return np.frombuffer(payload, dtype="<u4").reshape(h, w).astype(np.int32)


def load_frames(directory) -> list[Frame]:
    """Read numbered 8-bit RGB image files; lexicographic order = time order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidArgument(f"frame directory {directory} does not exist")
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in IMAGE_EXTENSIONS)
    if not paths:
        raise InvalidArgument(f"no image files in {directory}")
    frames = []
    for idx, p in enumerate(paths):
        img = np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8)
        frames.append(Frame(width=img.shape[1], height=img.shape[0],
                            pixels=img, index=idx))
    first = frames[0]
    for fr in frames[1:]:
        if (fr.width, fr.height) != (first.width, first.height):
            raise InvalidArgument(
                f"frame {fr.index} has size {fr.width}x{fr.height}, "
                f"expected {first.width}x{first.height}"
            )
    return frames


def save_saliency_map(sal: SaliencyMap, path) -> None:
    """Write as 8-bit grayscale, value = round(v * 255)."""
    img = np.round(sal.values * 255.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path)


def load_saliency_map(path, frame_index=0) -> SaliencyMap:
    img = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
    return SaliencyMap(frame_index=frame_index, values=img)
