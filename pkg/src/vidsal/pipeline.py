"""End-to-end orchestration: segmentation, flow, features, foreground
probabilities, block-wise energy minimization, and scale fusion.

Stages are exposed individually so ablations (and the CLI checkpointing)
can reuse intermediates; everything is deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config
from .core import Frame, SaliencyMap
from .errors import InvalidArgument, MissingFeature
from .evaluation import fuse_scales
from .features import (AggregationParams, FeatureStore, build_rgb_store,
                       concat_std, global_feature, local_feature)
from .flow import FlowField, estimate_flow
from .segmentation import ScaleConfig, ScaleSegmentation, segment_video
from .stcrf import (BlockPlan, ThetaParams, block_scores_to_saliency,
                    build_graph, minimize, partition_blocks)
from .unary import MlpModel, fallback_omega, forward_batch


@dataclass
class PipelineResult:
    segmentations: list[ScaleSegmentation]
    flows_fwd: list[FlowField]
    flows_bwd: list[FlowField]
    store: FeatureStore
    plan: BlockPlan
    scale_maps: dict[int, list[SaliencyMap]]
    fused_maps: list[SaliencyMap]
    iteration_counts: list[int]  # one entry per (scale, block) minimization


def compute_flows(frames, cfg: Config):
    """Block-matching forward and backward flow for every frame gap."""
    fwd, bwd = [], []
    for a, b in zip(frames, frames[1:]):
        fwd.append(estimate_flow(a, b, cfg.patch, cfg.search))
        bwd.append(estimate_flow(b, a, cfg.patch, cfg.search))
    return fwd, bwd


FB_CONSISTENCY_TOL = 1.0  # pixels of round-trip error
MOVING_MAGNITUDE = 0.5  # pixels; below this a displacement counts as static


def _core_moving_mask(field, reverse, erode: int) -> np.ndarray:
    """Pixels with trustworthy motion: displacement above MOVING_MAGNITUDE,
    forward-backward round trip within FB_CONSISTENCY_TOL, and eroded by the
    matching-window half-width so pixels whose patches straddle a motion
    boundary (and therefore follow the neighboring surface) drop out."""
    from scipy.ndimage import binary_erosion

    from .flow import warp_coordinates

    tx, ty, inside = warp_coordinates(field)
    mag = np.hypot(field.vectors[..., 0], field.vectors[..., 1])
    moving = inside & (mag >= MOVING_MAGNITUDE)
    rev = reverse.vectors[ty[inside], tx[inside]]
    err = np.hypot(field.vectors[..., 0][inside] + rev[:, 0],
                   field.vectors[..., 1][inside] + rev[:, 1])
    consistent = inside.copy()
    consistent[inside] = err <= FB_CONSISTENCY_TOL
    core = moving & consistent
    if erode > 0:
        core = binary_erosion(core, structure=np.ones((3, 3), dtype=bool),
                              iterations=erode)
    return core


def region_motion(seg: ScaleSegmentation, flows_fwd, flows_bwd,
                  erode: int = 3):
    """Fraction of core moving pixels per (frame, region); the last frame
    falls back to the preceding backward field."""
    motion: dict[tuple[int, int], float] = {}
    n = len(seg.region_sets)
    for rs in seg.region_sets:
        t = rs.frame_index
        if t < n - 1:
            core = _core_moving_mask(flows_fwd[t], flows_bwd[t], erode)
        else:
            core = _core_moving_mask(flows_bwd[n - 2], flows_fwd[n - 2], erode)
        counts = np.bincount(rs.labels.ravel(),
                             weights=core.ravel().astype(np.float64),
                             minlength=len(rs.regions))
        for info in rs.regions:
            motion[(t, info.id)] = float(counts[info.id] / info.area)
    return motion


def _border_regions(rs) -> set[int]:
    labels = rs.labels
    edge = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    return set(np.unique(edge).tolist())


def compute_std_features(seg: ScaleSegmentation, store: FeatureStore,
                         block, params: AggregationParams):
    """(frame, region) -> combined local+global descriptor for one block."""
    g = global_feature(block.frames, store, scale_id=seg.scale_id)
    out = {}
    for rs in seg.region_sets:
        if rs.frame_index not in block:
            continue
        for info in rs.regions:
            track = seg.track(seg.track_of(rs.frame_index, info.id))
            loc = local_feature(track, rs.frame_index, store, params)
            out[(rs.frame_index, info.id)] = concat_std(loc, g).values
    return out


def heuristic_omegas(seg: ScaleSegmentation, block, std_features, motion):
    """Foreground probabilities without a trained model.

    Seeds: per frame, the region with the highest mean flow magnitude is
    foreground; frame-border regions (minus those) are background. Scores
    are centroid-distance ratios in descriptor space.
    """
    fg_keys, border_keys = [], []
    for rs in seg.region_sets:
        t = rs.frame_index
        if t not in block:
            continue
        best = max((motion[(t, info.id)], -info.id) for info in rs.regions)
        fg_keys.append((t, -best[1]))
        border_keys.extend((t, rid) for rid in _border_regions(rs))
    fg_set = set(fg_keys)
    bg_keys = [k for k in border_keys if k not in fg_set]
    if not bg_keys:
        return {k: 0.5 for k in std_features}
    fg_centroid = np.mean([std_features[k] for k in sorted(fg_set)], axis=0)
    bg_centroid = np.mean([std_features[k] for k in sorted(set(bg_keys))],
                          axis=0)
    return {k: fallback_omega(v, fg_centroid, bg_centroid)
            for k, v in std_features.items()}


def model_omegas(model: MlpModel, std_features):
    keys = sorted(std_features)
    X = np.stack([std_features[k] for k in keys])
    probs = forward_batch(model, X)
    return {k: float(p) for k, p in zip(keys, probs[:, 0])}


def run_crf_stage(segmentations, store, flows_fwd, flows_bwd, cfg: Config,
                  model: MlpModel | None = None,
                  theta: ThetaParams | None = None):
    """Blocks -> graphs -> min-cut -> merged per-scale maps -> fusion."""
    if theta is None:
        theta = ThetaParams(cfg.theta_u, cfg.theta_bs, cfg.theta_bt)
    params = AggregationParams(k_default=cfg.k_default, sigma=cfg.sigma)
    num_frames = len(segmentations[0].region_sets)
    plan = partition_blocks(num_frames, cfg.block_length, cfg.overlap)

    scale_maps: dict[int, list[SaliencyMap]] = {}
    iteration_counts: list[int] = []
    for seg in segmentations:
        motion = None if model is not None else region_motion(
            seg, flows_fwd, flows_bwd, erode=cfg.patch // 2)
        labelings = []
        for block in plan.blocks:
            std = compute_std_features(seg, store, block, params)
            if model is not None:
                omegas = model_omegas(model, std)
            else:
                omegas = heuristic_omegas(seg, block, std, motion)
            graph = build_graph(block, seg, std, omegas, flows_fwd,
                                flows_bwd, beta_mode=cfg.beta_norm)
            result = minimize(graph, theta)
            iteration_counts.append(result.iterations)
            labelings.append({
                (v.frame_index, v.region_id): int(lab)
                for v, lab in zip(graph.vertices, result.labels)})
        scale_maps[seg.scale_id] = block_scores_to_saliency(
            labelings, plan, seg.region_sets)

    fused = []
    for t in range(num_frames):
        fused.append(fuse_scales([scale_maps[s][t] for s in sorted(scale_maps)]))
    return plan, scale_maps, fused, iteration_counts


def run_saliency(frames: list[Frame], cfg: Config,
                 segmentations=None, flows=None,
                 store: FeatureStore | None = None,
                 model: MlpModel | None = None,
                 theta: ThetaParams | None = None) -> PipelineResult:
    """Full pipeline; any precomputed stage may be injected."""
    if len(frames) < 2:
        raise InvalidArgument("need at least two frames")
    if flows is None:
        flows_fwd, flows_bwd = compute_flows(frames, cfg)
    else:
        flows_fwd, flows_bwd = flows
        if len(flows_fwd) != len(frames) - 1 or len(flows_bwd) != len(frames) - 1:
            raise InvalidArgument("one forward and backward flow per gap required")
    if segmentations is None:
        scale_cfg = ScaleConfig(initial_superpixels=cfg.scales,
                                compactness=cfg.compactness)
        segmentations = segment_video(frames, scale_cfg, flows_fwd,
                                      cfg.link_threshold)
    if store is None:
        if cfg.provider != "rgb":
            raise MissingFeature(
                "provider 'file' needs a loaded feature store")
        store = build_rgb_store(frames, segmentations)

    plan, scale_maps, fused, iters = run_crf_stage(
        segmentations, store, flows_fwd, flows_bwd, cfg, model, theta)
    return PipelineResult(segmentations=list(segmentations),
                          flows_fwd=list(flows_fwd),
                          flows_bwd=list(flows_bwd), store=store, plan=plan,
                          scale_maps=scale_maps, fused_maps=fused,
                          iteration_counts=iters)
