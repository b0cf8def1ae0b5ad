"""Command-line surface: think, eval, ablate-momentum, replay.

Exit codes: 0 success, 2 usage (bad flags, paths, config, data), 3 format
(unreadable or incompatible archives, malformed datasets), 4 numeric
divergence. Every run writes a manifest.json capturing the resolved flags;
`replay --manifest` re-runs it and reproduces the CSV/archive outputs
byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

from .errors import (
    CompatibilityError,
    DivergenceError,
    EngineError,
    FormatError,
    ParseError,
)
from .kvstore import load_kv, save_kv
from .modelio import load_model, model_fingerprint
from .tasks import EvalConfig, evaluate, get_task, load_dataset, render_demos
from .thinking import ThinkConfig, deep_think


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="DTWT model archive")
    p.add_argument("--dataset", required=True, help="line-record dataset file")
    p.add_argument("--task", required=True, help="task id (e.g. sst2)")
    p.add_argument("--shots", type=int, default=1, help="demos per class")
    p.add_argument("--seed", type=int, default=0, help="demo sampling seed")
    p.add_argument("--eta", type=float, default=0.01, help="step size")
    p.add_argument("--beta", type=float, default=0.9, help="momentum constant")
    p.add_argument("--steps", type=int, default=15, help="optimization steps T")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepthink",
        description="Optimize demonstration KV state, then evaluate without demos.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("think", help="run the optimization stage, store the KV")
    _add_common(p)
    p.add_argument("--position-offset", type=int, default=0,
                   help="first demo position during thinking")

    p = sub.add_parser("eval", help="accuracy against a stored or swept KV")
    _add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--kv", help="DTKV archive to evaluate")
    group.add_argument("--sweep", action="store_true",
                       help="evaluate every step t = 1..steps")
    p.add_argument("--score-mode", default="sum_log_prob",
                   choices=("sum_log_prob", "sum_prob"))
    p.add_argument("--position-offset", type=int, default=None,
                   help="test position offset (default: demo length)")
    p.add_argument("--threads", type=int, default=1, help="evaluation fan-out")

    p = sub.add_parser("ablate-momentum",
                       help="compare the momentum run against beta = 0")
    _add_common(p)
    p.add_argument("--score-mode", default="sum_log_prob",
                   choices=("sum_log_prob", "sum_prob"))
    p.add_argument("--position-offset", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("--manifest", required=True)
    return parser


def _write_manifest(args: argparse.Namespace) -> None:
    record = {
        "command": args.command,
        "args": {
            k: v for k, v in sorted(vars(args).items()) if k != "command"
        },
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(c) if isinstance(c, float) else c for c in row])


def _demo_tokens(weights, args):
    spec = get_task(args.task)
    dataset = load_dataset(args.dataset)
    demos_text = render_demos(spec, dataset, args.shots, args.seed)
    if weights.tokenizer is None:
        raise EngineError("model archive carries no tokenizer tables")
    return spec, dataset, weights.tokenizer.encode(demos_text)


def cmd_think(args: argparse.Namespace) -> int:
    weights = load_model(args.model)
    _, _, demo_tokens = _demo_tokens(weights, args)
    config = ThinkConfig(
        steps=args.steps, eta=args.eta, beta=args.beta,
        demo_position_offset=args.position_offset,
    )
    result = deep_think(weights, demo_tokens, config)
    os.makedirs(args.out, exist_ok=True)
    save_kv(result.final, model_fingerprint(weights),
            os.path.join(args.out, "kv.dtkv"))
    _write_csv(
        os.path.join(args.out, "gradtrace.csv"),
        ("step", "layer", "grad_norm_k", "grad_norm_v"),
        ((tr.step, tr.layer, tr.grad_norm_k, tr.grad_norm_v)
         for tr in result.traces),
    )
    _write_manifest(args)
    print(f"stored KV after T={args.steps} steps -> {args.out}/kv.dtkv")
    return 0


def _report_rows(report, t_of_row, vanilla=False):
    rows = [(t_of_row(i), acc) for i, acc in enumerate(report.accuracies)]
    if vanilla:
        rows.append(("vanilla", report.vanilla_accuracy))
    rows += [
        ("best_t", t_of_row(report.best_step - 1)),
        ("best_accuracy", report.best_accuracy),
        ("tokens_per_example_ours", report.tokens_per_example_ours),
        ("tokens_per_example_baseline", report.tokens_per_example_baseline),
        ("attn_elements_ours", report.attn_elements_ours),
        ("attn_elements_baseline", report.attn_elements_baseline),
        ("attn_ratio", report.attn_ratio),
    ]
    return rows


def cmd_eval(args: argparse.Namespace) -> int:
    weights = load_model(args.model)
    spec, dataset, demo_tokens = _demo_tokens(weights, args)
    eval_config = EvalConfig(
        n_shot=args.shots, seed=args.seed, score_mode=args.score_mode,
        t_max=args.steps, position_offset=args.position_offset,
        threads=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)

    if args.sweep:
        think_config = ThinkConfig(
            steps=args.steps, eta=args.eta, beta=args.beta,
            record_snapshots=True,
        )
        result = deep_think(weights, demo_tokens, think_config)
        report = evaluate(weights, result, spec, dataset, eval_config)
        rows = _report_rows(report, lambda i: i + 1, vanilla=True)
        best_t = report.best_step
    else:
        state = load_kv(args.kv, model_fingerprint(weights))
        report = evaluate(weights, state, spec, dataset, eval_config)
        rows = _report_rows(report, lambda i: state.step)
        best_t = state.step

    _write_csv(os.path.join(args.out, "report.csv"), ("t", "accuracy"), rows)
    _write_manifest(args)
    print(
        f"best accuracy {report.best_accuracy:.4f} at t={best_t}; "
        f"tokens/example {report.tokens_per_example_ours:.1f} vs "
        f"{report.tokens_per_example_baseline:.1f} baseline"
    )
    return 0


def cmd_ablate_momentum(args: argparse.Namespace) -> int:
    weights = load_model(args.model)
    spec, dataset, demo_tokens = _demo_tokens(weights, args)
    eval_config = EvalConfig(
        n_shot=args.shots, seed=args.seed, score_mode=args.score_mode,
        t_max=args.steps, position_offset=args.position_offset,
        threads=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for beta in (args.beta, 0.0):
        think_config = ThinkConfig(
            steps=args.steps, eta=args.eta, beta=beta, record_snapshots=True,
        )
        result = deep_think(weights, demo_tokens, think_config)
        report = evaluate(weights, result, spec, dataset, eval_config)
        rows.append(
            (beta, report.best_step, report.best_accuracy,
             report.vanilla_accuracy)
        )
    _write_csv(
        os.path.join(args.out, "ablation.csv"),
        ("beta", "best_t", "best_accuracy", "vanilla_accuracy"),
        rows,
    )
    _write_manifest(args)
    for beta, best_t, best_acc, _ in rows:
        print(f"beta={beta}: best accuracy {best_acc:.4f} at t={best_t}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            record = json.load(fh)
        command = record["command"]
        stored = record["args"]
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"unreadable manifest {args.manifest}: {exc}") from exc

    argv = [command]
    for key, value in sorted(stored.items()):
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        else:
            argv.extend([flag, str(value)])
    return _dispatch(build_parser().parse_args(argv))


_COMMANDS = {
    "think": cmd_think,
    "eval": cmd_eval,
    "ablate-momentum": cmd_ablate_momentum,
    "replay": cmd_replay,
}


def _dispatch(args: argparse.Namespace) -> int:
    return _COMMANDS[args.command](args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, CompatibilityError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
