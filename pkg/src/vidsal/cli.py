"""Command-line entry point.

Subcommands cover each pipeline stage so every step can also run standalone
from the previous stage's on-disk artifacts: synth, segment, flow, features,
train-unary, saliency, eval, vos. Exit codes: 0 success, 2 config error,
3 input error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import core, evaluation, features, flow, pipeline, segmentation, synth, unary
from .config import Config, load_config
from .errors import (ConfigError, InvalidArgument, InvalidGraph,
                     MalformedInput, MissingFeature, VidsalError)

FUSED_PATTERN = "sal_{frame:05d}.png"
SCALE_PATTERN = "scale{scale:02d}_{frame:05d}.png"


def _load_cfg(args) -> Config:
    overrides = {}
    if getattr(args, "scales", None):
        overrides["scales"] = tuple(
            int(s) for s in str(args.scales).split(",") if s.strip())
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "provider", None):
        overrides["provider"] = args.provider
    return load_config(getattr(args, "config", None), overrides)


def _load_flows(args, frames, cfg):
    if args.flows == "estimate":
        return pipeline.compute_flows(frames, cfg)
    flow_dir = Path(args.flows)
    fwd, bwd = [], []
    for t in range(len(frames) - 1):
        fwd.append(flow.read_flow(flow_dir / f"fwd_{t:05d}.flo"))
        bwd.append(flow.read_flow(flow_dir / f"bwd_{t:05d}.flo"))
    return fwd, bwd


def _load_masks(directory):
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in core.IMAGE_EXTENSIONS)
    if not paths:
        raise InvalidArgument(f"no mask images in {directory}")
    from PIL import Image
    return [np.asarray(Image.open(p).convert("L")) >= 128 for p in paths]


def _load_maps(directory):
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in core.IMAGE_EXTENSIONS)
    if not paths:
        raise InvalidArgument(f"no saliency maps in {directory}")
    return [core.load_saliency_map(p, frame_index=i)
            for i, p in enumerate(paths)]


def _collect_videos(directory, loader):
    """A directory of videos (subdirectories) or a single video of frames."""
    directory = Path(directory)
    subdirs = sorted(p for p in directory.iterdir() if p.is_dir())
    if subdirs:
        return [loader(d) for d in subdirs]
    return [loader(directory)]


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    clip = synth.generate_clip(num_frames=args.frames, width=args.size,
                               height=args.size, seed=cfg.seed,
                               second_object=args.two_objects)
    synth.write_clip(clip, args.output)
    print(f"wrote {len(clip.frames)} frames to {args.output}")
    return 0


def cmd_segment(args) -> int:
    cfg = _load_cfg(args)
    frames = core.load_frames(args.input)
    flows_fwd, flows_bwd = _load_flows(args, frames, cfg)
    scale_cfg = segmentation.ScaleConfig(initial_superpixels=cfg.scales,
                                         compactness=cfg.compactness)
    segs = segmentation.segment_video(frames, scale_cfg, flows_fwd,
                                      cfg.link_threshold)
    segmentation.write_segmentation(segs, args.output)
    counts = ", ".join(f"scale {s.scale_id}: {len(s.tracks)} tracks"
                       for s in segs)
    print(f"wrote segmentation to {args.output} ({counts})")
    return 0


def cmd_flow(args) -> int:
    cfg = _load_cfg(args)
    frames = core.load_frames(args.input)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    fwd, bwd = pipeline.compute_flows(frames, cfg)
    for t, (vf, vb) in enumerate(zip(fwd, bwd)):
        flow.write_flow(vf, out / f"fwd_{t:05d}.flo")
        flow.write_flow(vb, out / f"bwd_{t:05d}.flo")
    print(f"wrote {2 * len(fwd)} flow fields to {out}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_cfg(args)
    if cfg.provider == "file":
        if not args.features:
            raise InvalidArgument("provider 'file' requires --features")
        store = features.load_features(args.features)
    else:
        if not args.input or not args.segmentation:
            raise InvalidArgument(
                "provider 'rgb' requires --input and --segmentation")
        frames = core.load_frames(args.input)
        segs = segmentation.ingest_segmentation(args.segmentation)
        store = features.build_rgb_store(frames, segs)
    features.save_features(store, args.output)
    print(f"wrote {len(store.region_features)} region and "
          f"{len(store.global_features)} global features to {args.output}")
    return 0


def cmd_train_unary(args) -> int:
    cfg = _load_cfg(args)
    X, y = unary.load_training_data(args.input)
    train_cfg = unary.TrainConfig(
        iterations=cfg.train_iterations, batch_size=cfg.train_batch_size,
        momentum=cfg.train_momentum, weight_decay=cfg.train_weight_decay,
        base_lr=cfg.train_base_lr, lr_drop_every=cfg.train_lr_drop_every,
        dropout_rate=cfg.train_dropout, rng_seed=cfg.seed)
    hidden = (tuple(int(h) for h in args.hidden.split(",") if h.strip())
              if args.hidden else unary.FDNN_HIDDEN)
    model, trace = unary.train(X, y, train_cfg, hidden=hidden)
    unary.save_model(model, args.output)
    print(f"trained on {X.shape[0]} samples, final loss {trace[-1]:.6f}, "
          f"wrote {args.output}")
    return 0


def cmd_saliency(args) -> int:
    cfg = _load_cfg(args)
    frames = core.load_frames(args.input)
    flows = _load_flows(args, frames, cfg)
    segs = (segmentation.ingest_segmentation(args.segmentation)
            if args.segmentation else None)
    store = None
    if cfg.provider == "file":
        if not args.features:
            raise InvalidArgument("provider 'file' requires --features")
        store = features.load_features(args.features)
    model = unary.load_model(args.model) if args.model else None

    result = pipeline.run_saliency(frames, cfg, segmentations=segs,
                                   flows=flows, store=store, model=model)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for sal in result.fused_maps:
        core.save_saliency_map(sal, out / FUSED_PATTERN.format(
            frame=sal.frame_index))
    if args.save_scales:
        for scale_id, maps in sorted(result.scale_maps.items()):
            for sal in maps:
                core.save_saliency_map(sal, out / SCALE_PATTERN.format(
                    scale=scale_id, frame=sal.frame_index))
    print(f"wrote {len(result.fused_maps)} saliency maps to {out} "
          f"(min-cut iterations: {sorted(set(result.iteration_counts))})")
    return 0


def cmd_eval(args) -> int:
    videos_maps = _collect_videos(args.input, _load_maps)
    videos_gts = _collect_videos(args.gt, _load_masks)
    f_adap, precision, recall = evaluation.dataset_f_adaptive(
        videos_maps, videos_gts)
    f_max, curve = evaluation.dataset_f_sweep(videos_maps, videos_gts)
    mae_value = evaluation.dataset_mae(videos_maps, videos_gts)
    entries = {
        "f_adap": f_adap, "f_max": f_max, "mae": mae_value,
        "precision_adaptive": precision, "recall_adaptive": recall,
        "videos": len(videos_maps),
    }
    evaluation.write_report(args.report, entries)
    if args.prc:
        evaluation.write_prc(args.prc, curve)
    print(f"F-Adap {f_adap:.4f}  F-Max {f_max:.4f}  MAE {mae_value:.4f} "
          f"-> {args.report}")
    return 0


def cmd_vos(args) -> int:
    cfg = _load_cfg(args)
    frames = core.load_frames(args.input)
    maps = _load_maps(args.maps)
    gts = _load_masks(args.gt)
    if not len(frames) == len(maps) == len(gts):
        raise InvalidArgument("frames, maps and ground truths must align")
    if args.segmentation:
        segs = segmentation.ingest_segmentation(args.segmentation)
        finest = max(segs, key=lambda s: s.scale_id)
        region_sets = finest.region_sets
    else:
        flows_fwd, _ = _load_flows(args, frames, cfg)
        target = cfg.scales[-1]
        region_sets = [segmentation.segment_frame(fr, target, cfg.compactness)
                       for fr in frames]
    masks = [evaluation.vos_segment(sal, rs)
             for sal, rs in zip(maps, region_sets)]
    j_mean, j_recall, j_decay = evaluation.region_similarity_stats(
        [masks], [gts])
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        from PIL import Image
        for t, mask in enumerate(masks):
            Image.fromarray(mask.astype(np.uint8) * 255).save(
                out / f"vos_{t:05d}.png")
    evaluation.write_report(args.report, {
        "j_mean": j_mean, "j_recall": j_recall, "j_decay": j_decay})
    print(f"J-mean {j_mean:.4f}  J-recall {j_recall:.4f}  "
          f"J-decay {j_decay:.4f} -> {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidsal",
        description="Video salient-object detection via spatiotemporal "
                    "region graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, flows=False):
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--scales", type=str, default=None)
        if flows:
            p.add_argument("--flows", default="estimate",
                           help="'estimate' or a directory of .flo files")

    p = sub.add_parser("synth", help="generate a synthetic clip with ground truth")
    common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--two-objects", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="multi-scale segmentation + tracks")
    common(p, flows=True)
    p.add_argument("--input", required=True, help="frame directory")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("flow", help="block-matching optical flow")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("features", help="build or validate a feature file")
    common(p)
    p.add_argument("--input", help="frame directory (rgb provider)")
    p.add_argument("--segmentation", help="segmentation artifact directory")
    p.add_argument("--features", help="existing feature file (file provider)")
    p.add_argument("--provider", choices=("rgb", "file"), default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-unary", help="train the foreground scorer")
    common(p)
    p.add_argument("--input", required=True, help="training data file")
    p.add_argument("--output", required=True, help="model file")
    p.add_argument("--hidden", default=None,
                   help="comma-separated hidden sizes (default: full plan)")
    p.set_defaults(func=cmd_train_unary)

    p = sub.add_parser("saliency", help="full pipeline to fused maps")
    common(p, flows=True)
    p.add_argument("--input", required=True, help="frame directory")
    p.add_argument("--output", required=True)
    p.add_argument("--segmentation", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--provider", choices=("rgb", "file"), default=None)
    p.add_argument("--model", default=None, help="trained scorer file")
    p.add_argument("--save-scales", action="store_true")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("eval", help="saliency metrics against ground truth")
    p.add_argument("--input", required=True, help="saliency map directory")
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--prc", default=None, help="write the 256-row PRC CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("vos", help="object segmentation from saliency maps")
    common(p, flows=True)
    p.add_argument("--input", required=True, help="frame directory")
    p.add_argument("--maps", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--segmentation", default=None)
    p.add_argument("--output", default=None, help="write voted masks here")
    p.set_defaults(func=cmd_vos)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgument, MalformedInput, MissingFeature,
            FileNotFoundError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 3
    except (InvalidGraph, VidsalError) as exc:
        print(f"error: internal: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # invariant violations surface as exit 4
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
