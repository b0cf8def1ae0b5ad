"""Command surface: convert / golden / dataset / fixture."""
import argparse
import json
import sys

from .errors import ToolError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dtconvert",
        description="Convert checkpoints, export golden records, "
                    "prepare datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="checkpoint -> model archive")
    p.add_argument("--source", required=True,
                   help="checkpoint directory or model id")
    p.add_argument("--out", required=True, help="archive path to write")

    p = sub.add_parser("golden", help="export per-prompt reference records")
    p.add_argument("--source", required=True)
    p.add_argument("--prompts", required=True,
                   help="text file, one prompt per line")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dataset", help="rewrite an upstream dataset")
    p.add_argument("--name", required=True)
    p.add_argument("--source", required=True,
                   help="upstream file (or directory, task-dependent)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", type=int, default=None,
                   help="subsample size; 0 disables the task default")

    p = sub.add_parser("fixture", help="build a local seeded checkpoint, "
                                       "convert it, export golden records")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            from .convert import convert_checkpoint

            summary = convert_checkpoint(args.source, args.out)
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "golden":
            from .golden import export_reference

            with open(args.prompts, "r", encoding="utf-8") as fh:
                prompts = [line.rstrip("\n") for line in fh if line.strip()]
            count = export_reference(args.source, prompts, args.out)
            print(f"wrote {count} reference records -> {args.out}")
        elif args.command == "dataset":
            from .datasets import prepare_dataset

            count = prepare_dataset(args.name, args.source, args.out,
                                    seed=args.seed, sample=args.sample)
            print(f"wrote {count} {args.name} records -> {args.out}")
        else:
            from .fixture import build_fixture

            summary = build_fixture(args.out, seed=args.seed)
            print(json.dumps(summary, sort_keys=True))
    except ToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
