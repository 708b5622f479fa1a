"""Command-line entry point: ``regionbench <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import builtin_corpus, load_corpus
from .oracle import load_program, run_program, validate_trace
from .prompt import build_prompt
from .report import FORMATS, report_run_dir
from .runner import RunConfig, evaluate, replay
from .scenarios import load_scenario
from .topology import bridged_graph, extract_graph, load_adjacency, verify_against


def _cmd_extract_graph(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.grid)
    graph = extract_graph(scenario.grid)
    if args.json:
        print(json.dumps(graph.to_dict(), indent=2))
    else:
        for r, nbrs in graph.to_dict().items():
            print(f"Region {r}: [{', '.join(map(str, nbrs))}]")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.grid)
    declared = load_adjacency(Path(args.declared).read_text(encoding="utf-8"))
    diff = verify_against(extract_graph(scenario.grid), declared)
    print(diff.to_json() if args.json else diff.to_text())
    return 0 if diff.empty else 1


def _cmd_prompt(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, phase=args.phase)
    corpus = load_corpus(args.corpus) if args.corpus else builtin_corpus()
    matches = [r for r in corpus if r.id == args.instruction_id]
    if not matches:
        print(f"unknown instruction id {args.instruction_id!r}", file=sys.stderr)
        return 2
    bundle = build_prompt(scenario, extract_graph(scenario.grid), matches[0])
    sys.stdout.write(bundle.text)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    program = load_program(Path(args.program).read_text(encoding="utf-8"))
    result = run_program(scenario, program)
    graph = extract_graph(scenario.grid)
    if result.final_grid.block_in_pit:
        graph = bridged_graph(result.final_grid, graph)
    check = validate_trace(result.trace, graph)
    print(" -> ".join(map(str, result.trace)))
    if not check.valid:
        print(f"trace leaves the region graph at {check.offending}", file=sys.stderr)
        return 1
    return 0


def _print_pairs(result) -> None:
    for p in result.pairs:
        print(f"{p.environment}/{p.partition}/{p.phase} {p.instruction_id}: M={p.mean:.4f} std={p.std:.4f} K={p.k}")


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    result = evaluate(config)
    _print_pairs(result)
    print(f"wrote {config.out_path}")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    before = (Path(args.run) / "scores.csv").read_bytes()
    result = replay(args.run)
    after = (Path(args.run) / "scores.csv").read_bytes()
    _print_pairs(result)
    print("scores.csv reproduced exactly" if before == after else "scores.csv CHANGED on replay")
    return 0 if before == after else 1


def _cmd_report(args: argparse.Namespace) -> int:
    for path in report_run_dir(args.run_dir, args.format):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regionbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-graph", help="print the region adjacency list of a grid")
    p.add_argument("grid", help="grid file or builtin name (e.g. builtin:ant-maze-iv)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_extract_graph)

    p = sub.add_parser("verify", help="diff a grid's adjacency against a declared list")
    p.add_argument("grid")
    p.add_argument("declared", help="JSON mapping region -> neighbour list")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("prompt", help="render the prompt for one instruction")
    p.add_argument("scenario")
    p.add_argument("instruction_id")
    p.add_argument("--corpus", help="corpus JSON (default: shipped corpus)")
    p.add_argument("--phase")
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("simulate", help="compile a directive program into a region trace")
    p.add_argument("scenario")
    p.add_argument("program")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("evaluate", help="run an evaluation from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("replay", help="re-evaluate a run from its response cache only")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="write report tables or boxplots for a run")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
