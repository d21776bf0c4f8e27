"""Command-line entry point: glextract --model <id> --dataset <manifest>
--kinds attn_out,feat_resid -o maps/"""

from __future__ import annotations

import argparse
import sys

from .extract import MAP_KINDS, ExtractionSpec, UnsupportedModelError, extract


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="glextract",
        description="Dump per-block attention/feature maps from a pretrained "
                    "vision transformer into the map-exchange layout.",
    )
    parser.add_argument("--model", required=True,
                        help="hub identifier or local checkpoint directory")
    parser.add_argument("--dataset", required=True, help="dataset manifest JSON")
    parser.add_argument("--kinds", default=",".join(MAP_KINDS))
    parser.add_argument("-o", "--out-dir", required=True)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=8)
    args = parser.parse_args(argv)

    spec = ExtractionSpec(
        model_id=args.model,
        dataset_manifest=args.dataset,
        out_dir=args.out_dir,
        kinds=tuple(k.strip() for k in args.kinds.split(",") if k.strip()),
        device=args.device,
        batch_size=args.batch_size,
    )
    try:
        manifest = extract(spec)
    except (UnsupportedModelError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"run manifest at {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
