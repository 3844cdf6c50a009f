"""Command-line export: fetch a CLIP vision tower, write the interchange
file, and print the output dimension plus the file's content hash (the
backend id the detection pipeline will derive from it)."""

from __future__ import annotations

import argparse
import sys

from .exporter import BACKBONES, ExportSpec, export_backbone


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmp3dad-export",
        description="Export a pretrained CLIP vision tower to a verified "
                    "TorchScript interchange file.")
    parser.add_argument("--backbone", required=True,
                        help="one of: " + ", ".join(BACKBONES))
    parser.add_argument("--out", required=True, help="output model file")
    parser.add_argument("--tag", default="ts1", help="version tag stored in metadata")
    parser.add_argument("--images", type=int, default=16,
                        help="verification images")
    parser.add_argument("--threshold", type=float, default=0.999,
                        help="minimum per-image cosine similarity")
    parser.add_argument("--seed", type=int, default=0,
                        help="verification image seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = ExportSpec(backbone_name=args.backbone, out_path=args.out,
                          version_tag=args.tag)
        result = export_backbone(spec, verify_images=args.images,
                                 threshold=args.threshold, seed=args.seed)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"output_dim={result.output_dim}")
    print(f"content_hash={result.content_hash}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
