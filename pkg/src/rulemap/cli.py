"""Command-line entry points.

Exit codes: 0 success, 1 domain error (invalid map, missing config, cache
miss, ...), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .client import ChatClient, DecodingConfig
from .core import Branch, Mode, RuleMap, evaluate, evaluate_with_assignment, validate
from .dsl import ParseFailure, load_rulemap
from .errors import RulemapError
from .leaves import CaseRecord, EvaluatorEnv, FailurePolicy, LeafPolicy


def _print_issues(report) -> None:
    for issue in report.issues:
        node = f" [{issue.node_id}]" if issue.node_id else ""
        print(f"{issue.severity}{node} {issue.code}: {issue.message}")


def _print_trace(rulemap: RuleMap, trace) -> None:
    depth = {rulemap.root: 0}
    for nid in rulemap.walk_ids():
        node = rulemap.nodes[nid]
        if isinstance(node.kind, Branch):
            for cid in node.kind.children:
                depth[cid] = depth[nid] + 1
        entry = trace.entry(nid)
        if entry.value is None:
            shown = "skipped"
        else:
            shown = "true" if entry.value else "false"
        suffix = ""
        if entry.flags:
            suffix = f"  ({', '.join(entry.flags)})"
        label = node.label or (node.kind.question if not isinstance(
            node.kind, Branch) else "")
        name = f"{nid}" + (f" — {label}" if label else "")
        print("  " * depth[nid] + f"{name}: {shown}{suffix}")
    print(f"root={'true' if trace.root_value else 'false'}")


def _parse_what_if(pairs: list[str]) -> dict[str, bool]:
    overrides: dict[str, bool] = {}
    for pair in pairs:
        if "=" not in pair:
            raise RulemapError(f"--what-if expects leaf=bool, got {pair!r}")
        key, _, raw = pair.partition("=")
        norm = raw.strip().lower()
        if norm in ("true", "1", "yes", "ja"):
            overrides[key.strip()] = True
        elif norm in ("false", "0", "no", "nein"):
            overrides[key.strip()] = False
        else:
            raise RulemapError(f"--what-if value must be boolean, got {raw!r}")
    return overrides


def cmd_validate(args) -> int:
    rulemap = load_rulemap(args.map)
    report = validate(rulemap)
    _print_issues(report)
    if report.ok:
        leaves = len(rulemap.leaf_ids())
        print(f"ok: {rulemap.id} v{rulemap.version} "
              f"({len(rulemap.nodes)} nodes, {leaves} leaves)")
        return 0
    return 1


def cmd_eval(args) -> int:
    rulemap = load_rulemap(args.map)
    mode = Mode.SHORT_CIRCUIT if args.mode == "short" else Mode.FULL
    overrides = _parse_what_if(args.what_if or [])
    leaf_ids = set(rulemap.leaf_ids())

    if leaf_ids <= set(overrides):
        trace = evaluate_with_assignment(rulemap, overrides, mode)
    else:
        if args.case_text:
            text = args.case_text
        elif args.case_file:
            text = Path(args.case_file).read_text(encoding="utf-8")
        else:
            raise RulemapError(
                "need --case-text or --case-file (or --what-if values for "
                "every leaf)")
        case = CaseRecord(id=args.case_id, text=text)
        env = EvaluatorEnv(
            client=ChatClient.from_env(),
            policy=LeafPolicy(decoding=DecodingConfig(model=args.model)),
            failure_policy=(FailurePolicy.LENIENT
                            if args.failure_policy == "lenient"
                            else FailurePolicy.STRICT),
        )
        trace = evaluate(rulemap, case, env, mode, overrides=overrides)
    if args.json:
        print(trace.to_json(indent=2))
    else:
        _print_trace(rulemap, trace)
    return 0


def cmd_bench(args) -> int:
    from .bench.runner import orchestrate

    results = orchestrate(args.config)
    from .bench.report import render_report

    print(render_report(results), end="")
    return 0


def cmd_report(args) -> int:
    from .bench.report import render_from_document

    doc = json.loads(Path(args.results).read_text(encoding="utf-8"))
    print(render_from_document(doc), end="")
    return 0


def cmd_serve(args) -> int:
    from .service import run_server

    run_server(args.store, args.port, host=args.host,
               seed=args.seed_fixtures)
    return 0


def cmd_dataset(args) -> int:
    from .bench.data import generate_synthetic_dataset, write_dataset_csv

    rows = generate_synthetic_dataset(
        n_rows=args.rows, seed=args.seed, disagreements=args.disagreements,
        expert_rows=args.expert_rows, expert_positives=args.expert_positives)
    write_dataset_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rulemap",
        description="Rule-tree workbench: validate and evaluate rulemaps, "
                    "run benchmarks, serve the editing API.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a rulemap file")
    p.add_argument("map", help="path to .rmap (DSL) or .json (canonical)")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("eval", help="evaluate one case against a rulemap")
    p.add_argument("map")
    p.add_argument("--case-text")
    p.add_argument("--case-file")
    p.add_argument("--case-id", default="cli-case")
    p.add_argument("--mode", choices=("full", "short"), default="full")
    p.add_argument("--what-if", action="append", metavar="LEAF=BOOL",
                   help="override a leaf value (repeatable)")
    p.add_argument("--model", default="stub-model")
    p.add_argument("--failure-policy", choices=("strict", "lenient"),
                   default="strict")
    p.add_argument("--json", action="store_true",
                   help="print the full trace as JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="run the benchmark matrix from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("report", help="render a report.json to markdown")
    p.add_argument("--results", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8099)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", required=True)
    p.add_argument("--seed-fixtures", action="store_true",
                   help="load the bundled example rulemaps into the store")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("dataset", help="generate the synthetic dataset fixture")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=1000)
    p.add_argument("--seed", type=int, default=640)
    p.add_argument("--disagreements", type=int, default=132)
    p.add_argument("--expert-rows", type=int, default=102)
    p.add_argument("--expert-positives", type=int, default=9)
    p.set_defaults(fn=cmd_dataset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ParseFailure as exc:
        for error in exc.errors:
            print(f"parse error at {error.span}: {error.message}",
                  file=sys.stderr)
        return 1
    except RulemapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
