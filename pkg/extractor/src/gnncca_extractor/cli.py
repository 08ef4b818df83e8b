"""gnncca-extract: turn detection crops into a descriptor store."""

from __future__ import annotations

import argparse
import sys

from .extract import DEFAULT_TEMPLATE, ExtractJob, JobError, extract_descriptors


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnncca-extract", description=__doc__)
    parser.add_argument("--images", required=True, help="images root directory")
    parser.add_argument("--detections", required=True, help="detections CSV")
    parser.add_argument("--out", required=True, help="descriptor store output path")
    parser.add_argument(
        "--backbone", default="hist", choices=("hist", "resnet50"),
        help="crop embedder (default: hist)",
    )
    parser.add_argument("--dim", type=int, default=512, help="descriptor width")
    parser.add_argument(
        "--image-template", default=DEFAULT_TEMPLATE,
        help="image path template with {camera} and {frame} fields",
    )
    parser.add_argument("--weights", help="local weights file for resnet50")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch", type=int, default=32)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    job = ExtractJob(
        images_root=args.images,
        detections_csv=args.detections,
        output_store=args.out,
        backbone=args.backbone,
        descriptor_dim=args.dim,
        image_template=args.image_template,
        weights_path=args.weights,
        device=args.device,
        batch_size=args.batch,
    )
    try:
        count = extract_descriptors(job)
    except JobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} descriptor rows of dim {args.dim} to {args.out}")
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
