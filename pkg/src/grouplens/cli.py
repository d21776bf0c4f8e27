"""Command-line entry point.

Subcommands: gen {grouping|p3}, run-toy, eval {grouping|saliency}, report.
All runs are reproducible: seeds and configs are recorded in every output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline, report, stimgen, toyvit
from .errors import GrouplensError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grouplens",
        description="Synthetic grouping/pop-out stimuli, a from-scratch "
                    "transformer encoder, and grouping/saliency metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate stimulus datasets")
    gen_sub = gen.add_subparsers(dest="dataset", required=True)

    g = gen_sub.add_parser("grouping", help="similarity-grouping stimuli")
    g.add_argument("--version", choices=stimgen.VERSIONS, default="v16")
    g.add_argument("--per-dim", type=int, default=100,
                   help="stimuli per feature dimension (default 100)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--figures-per-row", type=int, default=None)
    g.add_argument("-o", "--out-dir", required=True)

    p = gen_sub.add_parser("p3", help="singleton (pop-out) stimuli")
    p.add_argument("--count", type=int, default=30,
                   help="total stimuli, split over color/orientation/size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out-dir", required=True)

    rt = sub.add_parser("run-toy", help="toy transformer forward over a dataset")
    rt.add_argument("--dataset", required=True, help="dataset manifest JSON")
    rt.add_argument("-o", "--maps-dir", required=True)
    rt.add_argument("--seed", type=int, default=0, help="weight init seed")
    rt.add_argument("--config", default=None, help="model config JSON file")
    rt.add_argument("--weights", default=None,
                    help="tensor-set index JSON to load instead of seeded init")
    rt.add_argument("--save-weights", default=None,
                    help="directory to dump the weights as a tensor file set")
    rt.add_argument("--kinds", default="attn_out,feat_resid")
    rt.add_argument("--input-side", type=int, default=pipeline.MODEL_INPUT_SIDE)

    ev = sub.add_parser("eval", help="score recorded maps")
    ev_sub = ev.add_subparsers(dest="metric", required=True)

    eg = ev_sub.add_parser("grouping", help="grouping index / attention ratio")
    eg.add_argument("--maps", required=True, help="run manifest JSON")
    eg.add_argument("--dataset", required=True, help="dataset manifest JSON")
    eg.add_argument("-o", "--out-dir", required=True)
    eg.add_argument("--grid-mode", choices=("presence", "majority"),
                    default="presence", help="mask-to-grid labeling rule")

    es = ev_sub.add_parser("saliency", help="fixations, detection rates, MSR")
    es.add_argument("--maps", required=True, help="run manifest JSON")
    es.add_argument("--dataset", required=True, help="dataset manifest JSON")
    es.add_argument("-o", "--out-dir", required=True)
    es.add_argument("--thresholds", default="15,25,50,100")
    es.add_argument("--max-fixations", type=int, default=100)
    es.add_argument("--radius", type=int, default=None,
                    help="suppression radius px (default: one token footprint)")
    es.add_argument("--kinds", default=None)
    es.add_argument("--dilation", type=int, default=0,
                    help="dilate the target mask before the hit test")
    es.add_argument("--upsampling", choices=("bilinear", "nearest"), default="bilinear")

    rp = sub.add_parser("report", help="SVG per-block curves from eval summaries")
    rp.add_argument("--grouping", default=None, help="grouping_summary.json")
    rp.add_argument("--saliency", default=None, help="saliency_summary.json")
    rp.add_argument("-o", "--out-dir", required=True)
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    if args.dataset == "grouping":
        manifest = stimgen.gen_grouping_dataset(
            args.version, args.per_dim, args.seed, args.out_dir,
            figures_per_row=args.figures_per_row,
        )
    else:
        manifest = stimgen.gen_p3_dataset(args.count, args.seed, args.out_dir)
    print(f"wrote {len(manifest.records)} stimuli, manifest at {manifest.path}")
    return 0


def _cmd_run_toy(args: argparse.Namespace) -> int:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        doc.setdefault("seed", args.seed)
        config = toyvit.ModelConfig.from_dict(doc)
    else:
        config = toyvit.ModelConfig(seed=args.seed)
    config.validate()
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    manifest_path = pipeline.run_toy(
        args.dataset, config, args.maps_dir, kinds=kinds,
        input_side=args.input_side, weights_index=args.weights,
        save_weights_dir=args.save_weights,
    )
    print(f"run manifest at {manifest_path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    if args.metric == "grouping":
        _, csv_path, json_path = pipeline.eval_grouping(
            args.maps, args.dataset, args.out_dir, grid_mode=args.grid_mode)
        print(f"grouping report at {csv_path} and {json_path}")
    else:
        thresholds = tuple(int(t) for t in args.thresholds.split(","))
        kinds = tuple(k.strip() for k in args.kinds.split(",")) if args.kinds else None
        _, _, files = pipeline.eval_saliency(
            args.maps, args.dataset, args.out_dir,
            max_fixations=args.max_fixations, thresholds=thresholds,
            radius=args.radius, kinds=kinds, detection_dilation=args.dilation,
            mode=args.upsampling,
        )
        print("saliency reports at " + ", ".join(str(p) for p in files.values()))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    if not args.grouping and not args.saliency:
        print("nothing to report: pass --grouping and/or --saliency", file=sys.stderr)
        return 1
    written = report.build_report(
        Path(args.out_dir),
        grouping_json=args.grouping, saliency_json=args.saliency,
    )
    print(f"wrote {len(written)} charts to {args.out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "run-toy":
            return _cmd_run_toy(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_report(args)
    except GrouplensError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
