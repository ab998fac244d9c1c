"""Command-line exporter: segmented video in, feature file out."""

from __future__ import annotations

import argparse
import sys

from .backbones import (BLOCK_BACKBONES, REGION_BACKBONES, BlockBackbone,
                        MissingWeights, RegionBackbone)
from .export import export, write_manifest, write_sidecar
from .formats import FormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featexport",
        description="Run region and clip embedding backbones over a "
                    "segmented video and write the pipeline feature file")
    parser.add_argument("--frames", required=True, help="frame directory")
    parser.add_argument("--labels", required=True,
                        help="directory with STLB label maps")
    parser.add_argument("--tracks", required=True, help="track file")
    parser.add_argument("--output", required=True, help="feature file to write")
    parser.add_argument("--region-backbone", choices=REGION_BACKBONES,
                        default="alexnet")
    parser.add_argument("--block-backbone", choices=BLOCK_BACKBONES,
                        default="conv3d")
    parser.add_argument("--region-weights", default=None,
                        help="local state-dict file for the region backbone")
    parser.add_argument("--block-weights", default=None,
                        help="local state-dict file for the block backbone")
    parser.add_argument("--dim", type=int, default=4096,
                        help="embedding width (fixed to 4096 for torchvision "
                             "backbones)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--manifest", default=None,
                        help="manifest path (default: <output>.manifest.txt)")
    parser.add_argument("--sidecar", default=None,
                        help="skip-report path (default: <output>.skipped.txt)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        region = RegionBackbone(args.region_backbone, out_dim=args.dim,
                                seed=args.seed,
                                weights_path=args.region_weights)
        block = BlockBackbone(args.block_backbone, out_dim=args.dim,
                              seed=args.seed, weights_path=args.block_weights)
        result = export(args.frames, args.labels, args.tracks, args.output,
                        region, block, batch_size=args.batch_size)
    except MissingWeights as exc:
        print(f"error: weights: {exc}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 3

    manifest = args.manifest or f"{args.output}.manifest.txt"
    sidecar = args.sidecar or f"{args.output}.skipped.txt"
    write_manifest(manifest, region, block, args.seed)
    write_sidecar(sidecar, result.skipped)
    print(f"wrote {result.region_count} region and {result.global_count} "
          f"global records to {args.output} "
          f"({len(result.skipped)} skipped)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
