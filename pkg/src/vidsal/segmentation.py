"""Multi-scale temporal segmentation.

Frames are over-segmented with a k-means superpixel clusterer in combined
(x, y, R, G, B) space (uniform-grid seeds, 10 refinement iterations,
connectivity enforcement), then regions are linked across frames by greedy
flow-warped overlap into temporal segments (tracks). Externally computed
segmentations can be ingested from label-map + track files instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import (FOUR_CONNECTED, Frame, RegionSet, TemporalSegment,
                   read_label_map, write_label_map)
from .errors import InvalidArgument, MalformedInput
from .flow import pair_overlap_counts

SLIC_ITERATIONS = 10
LINK_THRESHOLD = 0.3

LABEL_FILE_PATTERN = "labels_s{scale:02d}_f{frame:05d}.stlb"
TRACK_FILE_NAME = "tracks.txt"


@dataclass(frozen=True)
class ScaleConfig:
    """Targets for the multi-scale segmentation."""

    initial_superpixels: tuple[int, ...] = (100, 200, 300, 400)
    compactness: float = 10.0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.initial_superpixels)
        if not counts:
            raise InvalidArgument("at least one scale level is required")
        if any(c < 1 for c in counts):
            raise InvalidArgument("superpixel counts must be >= 1")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise InvalidArgument("superpixel counts must be strictly increasing")
        if self.compactness <= 0:
            raise InvalidArgument("compactness must be > 0")
        object.__setattr__(self, "initial_superpixels", counts)


@dataclass(frozen=True)
class ScaleSegmentation:
    """Segmentation of a whole clip at one scale level."""

    scale_id: int
    region_sets: tuple[RegionSet, ...]
    tracks: tuple[TemporalSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "region_sets", tuple(self.region_sets))
        object.__setattr__(self, "tracks", tuple(self.tracks))
        lookup = {}
        for tr in self.tracks:
            for frame, region in tr.members:
                key = (frame, region)
                if key in lookup:
                    raise MalformedInput(
                        f"scale {self.scale_id}: (frame {frame}, region {region}) "
                        f"appears in tracks {lookup[key]} and {tr.track_id}"
                    )
                lookup[key] = tr.track_id
        for rs in self.region_sets:
            for info in rs.regions:
                if (rs.frame_index, info.id) not in lookup:
                    raise MalformedInput(
                        f"scale {self.scale_id}: (frame {rs.frame_index}, "
                        f"region {info.id}) belongs to no track"
                    )
        object.__setattr__(self, "_track_of", lookup)
        object.__setattr__(self, "_by_id",
                           {tr.track_id: tr for tr in self.tracks})

    def track_of(self, frame_index: int, region_id: int) -> int:
        return self._track_of[(frame_index, region_id)]

    def track(self, track_id: int) -> TemporalSegment:
        return self._by_id[track_id]


def _seed_grid(width: int, height: int, target: int):
    nx = min(width, max(1, math.ceil(math.sqrt(target * width / height))))
    ny = min(height, max(1, math.ceil(target / nx)))
    cx = (np.arange(nx) + 0.5) * width / nx
    cy = (np.arange(ny) + 0.5) * height / ny
    gx, gy = np.meshgrid(cx, cy)
    return gx.ravel(), gy.ravel(), nx, ny


def segment_frame(frame: Frame, target_count: int, compactness: float = 10.0,
                  scale_id: int = 0) -> RegionSet:
    """Over-segment one frame into roughly target_count 4-connected regions."""
    h, w = frame.height, frame.width
    n_pixels = h * w
    if target_count < 1:
        raise InvalidArgument("target_count must be >= 1")
    if target_count > n_pixels:
        raise InvalidArgument(
            f"target_count {target_count} exceeds pixel count {n_pixels}")
    if compactness <= 0:
        raise InvalidArgument("compactness must be > 0")
    if target_count == 1:
        return RegionSet.from_labels(np.zeros((h, w), dtype=np.int32),
                                     frame_index=frame.index, scale_id=scale_id)

    rgb = frame.pixels.astype(np.float64)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    seed_x, seed_y, nx, ny = _seed_grid(w, h, target_count)
    n_centers = seed_x.size
    step = math.sqrt(n_pixels / target_count)
    spatial_w2 = (compactness / step) ** 2

    cx = seed_x.copy()
    cy = seed_y.copy()
    px = np.minimum(seed_x.astype(np.int64), w - 1)
    py = np.minimum(seed_y.astype(np.int64), h - 1)
    ccol = rgb[py, px].copy()  # (n_centers, 3)

    hx = max(math.ceil(step), math.ceil(w / nx))
    hy = max(math.ceil(step), math.ceil(h / ny))

    labels = np.full((h, w), -1, dtype=np.int32)
    for _ in range(SLIC_ITERATIONS):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for c in range(n_centers):
            x0 = max(0, int(cx[c]) - hx)
            x1 = min(w, int(cx[c]) + hx + 1)
            y0 = max(0, int(cy[c]) - hy)
            y1 = min(h, int(cy[c]) + hy + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            win = rgb[y0:y1, x0:x1]
            d = ((win - ccol[c]) ** 2).sum(axis=2)
            d += spatial_w2 * ((xs[y0:y1, x0:x1] - cx[c]) ** 2
                               + (ys[y0:y1, x0:x1] - cy[c]) ** 2)
            sub = dist[y0:y1, x0:x1]
            better = d < sub
            sub[better] = d[better]
            labels[y0:y1, x0:x1][better] = c

        unassigned = labels < 0
        if unassigned.any():
            uy, ux = np.nonzero(unassigned)
            d = ((rgb[uy, ux, None, :] - ccol[None, :, :]) ** 2).sum(axis=2)
            d += spatial_w2 * ((ux[:, None] - cx[None, :]) ** 2
                               + (uy[:, None] - cy[None, :]) ** 2)
            labels[uy, ux] = np.argmin(d, axis=1)

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n_centers)
        nonempty = counts > 0
        safe = np.maximum(counts, 1)
        cx[nonempty] = (np.bincount(flat, weights=xs.ravel(),
                                    minlength=n_centers) / safe)[nonempty]
        cy[nonempty] = (np.bincount(flat, weights=ys.ravel(),
                                    minlength=n_centers) / safe)[nonempty]
        for ch in range(3):
            col = np.bincount(flat, weights=rgb[..., ch].ravel(),
                              minlength=n_centers) / safe
            ccol[nonempty, ch] = col[nonempty]

    final = _enforce_connectivity(labels, n_centers, rgb)
    return RegionSet.from_labels(final, frame_index=frame.index,
                                 scale_id=scale_id)


def _enforce_connectivity(labels: np.ndarray, n_centers: int,
                          rgb: np.ndarray) -> np.ndarray:
    """Split disconnected clusters into components; absorb tiny ones into the
    adjacent already-finalized region of most similar mean color (ties to
    the lower id). Components are visited in raster order of their first
    pixel, so the result is deterministic."""
    h, w = labels.shape
    min_size = max(1, (h * w // n_centers) // 4)
    comps = []  # (first_pixel_flat_index, mask)
    for rid in range(int(labels.max()) + 1):
        mask = labels == rid
        if not mask.any():
            continue
        cc, ncc = ndimage.label(mask, structure=FOUR_CONNECTED)
        for c in range(1, ncc + 1):
            cmask = cc == c
            comps.append((int(np.flatnonzero(cmask.ravel())[0]), cmask))
    comps.sort(key=lambda t: t[0])

    out = np.full((h, w), -1, dtype=np.int32)
    color_sums: list[np.ndarray] = []
    sizes: list[int] = []
    for _, cmask in comps:
        size = int(cmask.sum())
        csum = rgb[cmask].sum(axis=0)
        neighbor_ids = set()
        ys, xs = np.nonzero(cmask)
        for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            yy, xx = ys + dy, xs + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            neighbor_ids.update(
                int(v) for v in np.unique(out[yy[ok], xx[ok]]) if v >= 0)
        if size >= min_size or not neighbor_ids:
            out[cmask] = len(sizes)
            color_sums.append(csum)
            sizes.append(size)
        else:
            cmean = csum / size
            target = min(neighbor_ids, key=lambda fid: (
                float(np.sum((color_sums[fid] / sizes[fid] - cmean) ** 2)),
                fid))
            out[cmask] = target
            color_sums[target] = color_sums[target] + csum
            sizes[target] += size
    return out


def link_temporal(region_sets, flows, link_threshold: float = LINK_THRESHOLD
                  ) -> list[TemporalSegment]:
    """Chain regions across frames into tracks by greedy warped overlap.

    Region i at frame t links to the region at t+1 receiving the largest
    share of its flow-warped pixels, provided that share >= link_threshold
    and the target is unclaimed; claims resolve in descending share order,
    ties by lower region id. Track ids follow first-appearance order.
    """
    region_sets = list(region_sets)
    flows = list(flows)
    if not region_sets:
        raise InvalidArgument("no region sets to link")
    if len(flows) != len(region_sets) - 1:
        raise InvalidArgument(
            f"{len(region_sets)} frames need {len(region_sets) - 1} flow "
            f"fields, got {len(flows)}")

    successor: list[dict[int, int]] = []
    for t in range(len(region_sets) - 1):
        counts = pair_overlap_counts(region_sets[t].labels,
                                     region_sets[t + 1].labels, flows[t])
        areas = np.array([r.area for r in region_sets[t].regions], dtype=np.float64)
        shares = counts / areas[:, None]
        best_j = np.argmax(shares, axis=1)  # ties -> lower region id
        best_share = shares[np.arange(shares.shape[0]), best_j]
        candidates = [(-best_share[i], i, int(best_j[i]))
                      for i in range(shares.shape[0])
                      if best_share[i] >= link_threshold]
        candidates.sort()
        links: dict[int, int] = {}
        claimed: set[int] = set()
        for _, i, j in candidates:
            if j not in claimed:
                links[i] = j
                claimed.add(j)
        successor.append(links)

    predecessor: list[dict[int, int]] = [dict() for _ in region_sets]
    for t, links in enumerate(successor):
        for i, j in links.items():
            predecessor[t + 1][j] = i

    scale_id = region_sets[0].scale_id
    slot_of: dict[tuple[int, int], int] = {}
    track_members: list[list[tuple[int, int]]] = []
    for t, rs in enumerate(region_sets):
        for info in rs.regions:
            if info.id in predecessor[t]:
                slot = slot_of[(t - 1, predecessor[t][info.id])]
                track_members[slot].append((t, info.id))
            else:
                slot = len(track_members)
                track_members.append([(t, info.id)])
            slot_of[(t, info.id)] = slot
    return [TemporalSegment(track_id=tid, scale_id=scale_id,
                            members=tuple(members))
            for tid, members in enumerate(track_members)]


def segment_video(frames, config: ScaleConfig, flows,
                  link_threshold: float = LINK_THRESHOLD
                  ) -> list[ScaleSegmentation]:
    """Segment every frame at each scale level and link into tracks."""
    frames = list(frames)
    flows = list(flows)
    if len(flows) != max(0, len(frames) - 1):
        raise InvalidArgument("one flow field per consecutive frame pair required")
    out = []
    for scale_id, target in enumerate(config.initial_superpixels):
        region_sets = [segment_frame(fr, target, config.compactness,
                                     scale_id=scale_id) for fr in frames]
        tracks = link_temporal(region_sets, flows, link_threshold)
        out.append(ScaleSegmentation(scale_id=scale_id,
                                     region_sets=tuple(region_sets),
                                     tracks=tuple(tracks)))
    return out


def write_segmentation(segmentations, directory) -> None:
    """Write per-scale label maps plus the track file.

    Track file: one line per membership, `scale_id frame_index region_id
    track_id`, whitespace-separated, sorted by (scale, frame, region).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for seg in segmentations:
        for rs in seg.region_sets:
            path = directory / LABEL_FILE_PATTERN.format(
                scale=seg.scale_id, frame=rs.frame_index)
            write_label_map(rs.labels, path)
        for tr in seg.tracks:
            for frame, region in tr.members:
                rows.append((seg.scale_id, frame, region, tr.track_id))
    rows.sort()
    with open(directory / TRACK_FILE_NAME, "w") as fh:
        for row in rows:
            fh.write("%d %d %d %d\n" % row)


def read_track_file(path) -> dict[int, dict[tuple[int, int], int]]:
    """Parse track memberships: scale -> {(frame, region): track_id}."""
    memberships: dict[int, dict[tuple[int, int], int]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedInput(f"{path}:{lineno}: expected 4 fields")
            try:
                scale, frame, region, track = (int(p) for p in parts)
            except ValueError:
                raise MalformedInput(f"{path}:{lineno}: non-integer field")
            memberships.setdefault(scale, {})[(frame, region)] = track
    if not memberships:
        raise MalformedInput(f"{path}: empty track file")
    return memberships


def ingest_segmentation(directory) -> list[ScaleSegmentation]:
    """Load and validate an externally produced segmentation.

    Expects label maps named labels_sSS_fFFFFF.stlb plus tracks.txt; raises
    MalformedInput naming the offending location on any violated invariant
    (label gaps, disconnected regions, non-consecutive or overlapping
    tracks, unassigned regions).
    """
    directory = Path(directory)
    track_path = directory / TRACK_FILE_NAME
    if not track_path.exists():
        raise MalformedInput(f"{track_path}: track file missing")
    memberships = read_track_file(track_path)

    label_files: dict[int, dict[int, Path]] = {}
    for p in sorted(directory.glob("labels_s*_f*.stlb")):
        stem = p.stem  # labels_sSS_fFFFFF
        try:
            scale = int(stem.split("_")[1][1:])
            frame = int(stem.split("_")[2][1:])
        except (IndexError, ValueError):
            raise MalformedInput(f"{p}: unrecognized label-map file name")
        label_files.setdefault(scale, {})[frame] = p

    out = []
    for scale in sorted(label_files):
        frames = sorted(label_files[scale])
        if frames != list(range(len(frames))):
            raise MalformedInput(
                f"scale {scale}: label maps are not a contiguous frame range")
        region_sets = []
        for frame in frames:
            labels = read_label_map(label_files[scale][frame])
            try:
                rs = RegionSet.from_labels(labels, frame_index=frame,
                                           scale_id=scale)
            except MalformedInput as exc:
                raise MalformedInput(
                    f"scale {scale} frame {frame}: {exc}") from exc
            for info in rs.regions:
                _, ncomp = ndimage.label(rs.labels == info.id,
                                         structure=FOUR_CONNECTED)
                if ncomp != 1:
                    raise MalformedInput(
                        f"scale {scale} frame {frame}: region {info.id} "
                        f"is not 4-connected")
            region_sets.append(rs)

        if scale not in memberships:
            raise MalformedInput(f"scale {scale}: no track memberships")
        by_track: dict[int, list[tuple[int, int]]] = {}
        for (frame, region), track in sorted(memberships[scale].items()):
            if frame >= len(region_sets):
                raise MalformedInput(
                    f"scale {scale}: track file references frame {frame} "
                    f"beyond the label maps")
            if region > int(region_sets[frame].labels.max()):
                raise MalformedInput(
                    f"scale {scale} frame {frame}: track file references "
                    f"unknown region {region}")
            by_track.setdefault(track, []).append((frame, region))
        tracks = []
        for track_id in sorted(by_track):
            members = sorted(by_track[track_id])
            try:
                tracks.append(TemporalSegment(track_id=track_id,
                                              scale_id=scale,
                                              members=tuple(members)))
            except InvalidArgument as exc:
                raise MalformedInput(f"scale {scale}: {exc}") from exc
        out.append(ScaleSegmentation(scale_id=scale,
                                     region_sets=tuple(region_sets),
                                     tracks=tuple(tracks)))
    if not out:
        raise MalformedInput(f"{directory}: no label maps found")
    return out
