"""Scale fusion, saliency metrics, and the object-segmentation application.

Dataset-level scores average per frame within each video, then across
videos; the F-measure is computed from the final precision/recall pair.
The threshold sweep quantizes maps to 0..255 via round(v * 255) and
binarizes with >= at every threshold.
"""

from __future__ import annotations

import csv

import numpy as np

from .core import RegionSet, SaliencyMap
from .errors import InvalidArgument

DEFAULT_BETA2 = 0.3
SWEEP_LEVELS = 256


def fuse_scales(maps) -> SaliencyMap:
    """Pixel-wise arithmetic mean of one frame's per-scale maps."""
    maps = list(maps)
    if not maps:
        raise InvalidArgument("no maps to fuse")
    frame_index = maps[0].frame_index
    shape = maps[0].values.shape
    for m in maps:
        if m.frame_index != frame_index or m.values.shape != shape:
            raise InvalidArgument("maps to fuse must share frame and size")
    mean = np.mean([m.values for m in maps], axis=0)
    return SaliencyMap(frame_index=frame_index, values=np.clip(mean, 0.0, 1.0))


def adaptive_threshold(sal: SaliencyMap) -> np.ndarray:
    """Binarize at tau = mean + population std; salient iff value >= tau."""
    values = sal.values
    tau = float(values.mean() + values.std())
    return values >= tau


def precision_recall(mask, ground_truth) -> tuple[float, float]:
    """Pixel precision/recall; empty denominators count as perfect (an empty
    prediction on empty ground truth scores (1, 1))."""
    mask = np.asarray(mask, dtype=bool)
    gt = np.asarray(ground_truth, dtype=bool)
    if mask.shape != gt.shape:
        raise InvalidArgument("mask and ground truth sizes differ")
    tp = np.count_nonzero(mask & gt)
    fp = np.count_nonzero(mask & ~gt)
    fn = np.count_nonzero(~mask & gt)
    precision = 1.0 if tp + fp == 0 else tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall


def f_measure(precision: float, recall: float,
              beta2: float = DEFAULT_BETA2) -> float:
    denom = beta2 * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


def quantize(sal: SaliencyMap) -> np.ndarray:
    return np.round(sal.values * 255.0).astype(np.uint8)


def dataset_f_adaptive(videos_maps, videos_gts,
                       beta2: float = DEFAULT_BETA2):
    """F-Adap: per-frame adaptive-threshold (P, R), averaged per video, then
    over videos; returns (F, precision, recall)."""
    video_p, video_r = [], []
    for maps, gts in _paired_videos(videos_maps, videos_gts):
        ps, rs = [], []
        for sal, gt in zip(maps, gts):
            p, r = precision_recall(adaptive_threshold(sal), gt)
            ps.append(p)
            rs.append(r)
        video_p.append(np.mean(ps))
        video_r.append(np.mean(rs))
    precision = float(np.mean(video_p))
    recall = float(np.mean(video_r))
    return f_measure(precision, recall, beta2), precision, recall


def dataset_f_sweep(videos_maps, videos_gts, beta2: float = DEFAULT_BETA2):
    """Fixed-threshold sweep over 0..255; returns (F-Max, curve) where the
    curve rows are (threshold, precision, recall)."""
    per_video = []
    for maps, gts in _paired_videos(videos_maps, videos_gts):
        frame_p = np.empty((len(maps), SWEEP_LEVELS))
        frame_r = np.empty((len(maps), SWEEP_LEVELS))
        for fi, (sal, gt) in enumerate(zip(maps, gts)):
            q = quantize(sal)
            gt = np.asarray(gt, dtype=bool)
            n_gt = np.count_nonzero(gt)
            # counts of quantized values inside/outside the ground truth
            hist_in = np.bincount(q[gt].ravel(), minlength=SWEEP_LEVELS)
            hist_all = np.bincount(q.ravel(), minlength=SWEEP_LEVELS)
            # predicted-positive counts for threshold tau: values >= tau
            tp = np.cumsum(hist_in[::-1])[::-1]
            pp = np.cumsum(hist_all[::-1])[::-1]
            with np.errstate(invalid="ignore"):
                p = np.where(pp == 0, 1.0, tp / np.maximum(pp, 1))
                r = np.full(SWEEP_LEVELS, 1.0) if n_gt == 0 else tp / n_gt
            frame_p[fi] = p
            frame_r[fi] = r
        per_video.append((frame_p.mean(axis=0), frame_r.mean(axis=0)))
    precision = np.mean([p for p, _ in per_video], axis=0)
    recall = np.mean([r for _, r in per_video], axis=0)
    f_values = np.array([f_measure(p, r, beta2)
                         for p, r in zip(precision, recall)])
    curve = [(tau, float(precision[tau]), float(recall[tau]))
             for tau in range(SWEEP_LEVELS)]
    return float(f_values.max()), curve


def mae(sal: SaliencyMap, ground_truth) -> float:
    gt = np.asarray(ground_truth, dtype=np.float64)
    if gt.shape != sal.values.shape:
        raise InvalidArgument("map and ground truth sizes differ")
    return float(np.mean(np.abs(sal.values - gt)))


def dataset_mae(videos_maps, videos_gts) -> float:
    """Per-frame MAE averaged per video, then over videos."""
    means = []
    for maps, gts in _paired_videos(videos_maps, videos_gts):
        means.append(np.mean([mae(s, g) for s, g in zip(maps, gts)]))
    return float(np.mean(means))


def _paired_videos(videos_maps, videos_gts):
    videos_maps = list(videos_maps)
    videos_gts = list(videos_gts)
    if not videos_maps or len(videos_maps) != len(videos_gts):
        raise InvalidArgument("maps and ground truths must pair per video")
    for maps, gts in zip(videos_maps, videos_gts):
        maps, gts = list(maps), list(gts)
        if not maps or len(maps) != len(gts):
            raise InvalidArgument("each video needs matching map/gt frames")
        yield maps, gts


def majority_vote(mask, superpixels: RegionSet) -> np.ndarray:
    """Label each superpixel foreground iff >= 50% of its pixels are salient
    (ties go to foreground)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != superpixels.labels.shape:
        raise InvalidArgument("mask and superpixel sizes differ")
    n = len(superpixels.regions)
    inside = np.bincount(superpixels.labels.ravel(),
                         weights=mask.ravel().astype(np.float64), minlength=n)
    areas = np.array([r.area for r in superpixels.regions], dtype=np.float64)
    fg = inside * 2.0 >= areas
    return fg[superpixels.labels]


def vos_segment(sal: SaliencyMap, superpixels: RegionSet) -> np.ndarray:
    """Adaptive-threshold binarization followed by superpixel majority
    voting."""
    return majority_vote(adaptive_threshold(sal), superpixels)


def iou(mask, ground_truth) -> float:
    """Region similarity; both-empty counts as a perfect 1."""
    mask = np.asarray(mask, dtype=bool)
    gt = np.asarray(ground_truth, dtype=bool)
    union = np.count_nonzero(mask | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(mask & gt) / union


def region_similarity_stats(videos_masks, videos_gts,
                            recall_threshold: float = 0.5):
    """(J-mean, J-recall, J-decay) over videos of per-frame IoU sequences.

    Recall is the fraction of videos whose mean exceeds the threshold; decay
    averages (first-quartile mean - last-quartile mean) with quartiles of
    ceil(N/4) frames.
    """
    means, decays = [], []
    for masks, gts in _paired_videos(videos_masks, videos_gts):
        js = np.array([iou(m, g) for m, g in zip(masks, gts)])
        means.append(js.mean())
        q = -(-len(js) // 4)
        decays.append(js[:q].mean() - js[-q:].mean())
    means = np.asarray(means)
    return (float(means.mean()),
            float(np.mean(means > recall_threshold)),
            float(np.mean(decays)))


def write_report(path, entries) -> None:
    """Line-oriented `key=value` report plus an aligned text table."""
    entries = dict(entries)
    width = max(len(k) for k in entries)
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value:.6f}\n" if isinstance(value, float)
                     else f"{key}={value}\n")
        fh.write("\n")
        for key, value in entries.items():
            shown = f"{value:.6f}" if isinstance(value, float) else str(value)
            fh.write(f"{key.ljust(width)}  {shown}\n")


def read_report(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            out[key] = value
    return out


def write_prc(path, curve) -> None:
    """256-row CSV: threshold, precision, recall."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for tau, p, r in curve:
            writer.writerow([tau, f"{p:.9f}", f"{r:.9f}"])
