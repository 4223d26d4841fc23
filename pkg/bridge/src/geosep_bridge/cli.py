"""`bridge export` command line."""

from __future__ import annotations

import argparse
import sys

from .export import MODEL_KINDS, BridgeConfig, export_predictions
from .formats import BridgeError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridge",
        description="Export ML model predictions in the geosep file formats",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="split, train, and export predictions")
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--data", required=True, help="dataset (CSV or binary)")
    p.add_argument("--seed", type=int, required=True, help="shared split seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model-seed", type=int, default=None, help="default: --seed")
    p.add_argument("--custom-spec", help="module:factory for --model custom")
    p.add_argument(
        "--verify-manifest",
        help="path to a toolkit split.json to check split agreement against",
    )
    p.set_defaults(func=cmd_export)
    return parser


def cmd_export(args) -> int:
    cfg = BridgeConfig(
        model=args.model,
        data=args.data,
        seed=args.seed,
        out=args.out,
        model_seed=args.model_seed,
        custom_spec=args.custom_spec,
        verify_manifest=args.verify_manifest,
    )
    summary = export_predictions(cfg)
    acc = summary["accuracy"]
    print(
        f"exported {args.model} predictions to {args.out} "
        f"(val acc {acc['val']:.4f}, test acc {acc['test']:.4f})"
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
