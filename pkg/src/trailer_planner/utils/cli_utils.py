"""
CLI utilities for the trailer planner.
Contains the argument parser and console summaries for each command.
"""

import argparse
from typing import List, Optional

from src.trailer_planner.planner.search import PLANNER_IDS


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int, help='Seed for sampling and training (default: TRAILER_PLANNER_SEED or 0)')
    parser.add_argument('--config', help='JSON file of per-section config overrides')
    parser.add_argument('--out', help='Output file or directory')
    parser.add_argument('--threads', type=int, help='Worker processes/threads')
    parser.add_argument('--time-cap-s', dest='time_cap_s', type=float, help='Planning wall-clock cap in seconds')
    parser.add_argument('--log-level', dest='log_level', help='Logging level (default: TRAILER_PLANNER_LOG_LEVEL)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Kinodynamic planner for a tractor with three trailers')
    sub = parser.add_subparsers(dest='command', required=True)

    gen_mps = sub.add_parser('gen-mps', help='Generate the motion-primitive library')
    _add_global_flags(gen_mps)

    gen_data = sub.add_parser('gen-costdata', help='Generate the cost-to-go training dataset')
    _add_global_flags(gen_data)

    train = sub.add_parser('train', help='Train the cost-to-go network')
    train.add_argument('--dataset', required=True, help='Dataset CSV produced by gen-costdata')
    _add_global_flags(train)

    plan = sub.add_parser('plan', help='Plan one scenario')
    plan.add_argument('scenario', help='Scenario JSON file')
    plan.add_argument('--planner', choices=PLANNER_IDS, default='deagt')
    plan.add_argument('--library', help='Motion-primitive library (overrides the scenario)')
    plan.add_argument('--net', help='Cost-to-go network (overrides the scenario)')
    plan.add_argument('--dump-tree', dest='dump_tree', action='store_true', help='Store and draw the search tree')
    _add_global_flags(plan)

    bench = sub.add_parser('bench', help='Benchmark planners over a scenario corpus')
    bench.add_argument('corpus', help='Directory of scenario files')
    bench.add_argument('--planners', nargs='+', choices=PLANNER_IDS, default=['deagt', 'iagt_rs'])
    bench.add_argument('--library', help='Motion-primitive library (overrides the scenarios)')
    bench.add_argument('--net', help='Cost-to-go network (overrides the scenarios)')
    _add_global_flags(bench)

    plot = sub.add_parser('plot', help='Render a scenario and optional plan result to SVG')
    plot.add_argument('scenario', help='Scenario JSON file')
    plot.add_argument('--result', help='PlanResult JSON written by plan')
    _add_global_flags(plot)
    return parser


DEFAULT_OUTPUTS = {
    'gen-mps': 'data/output/library.json.gz',
    'gen-costdata': 'data/output/costdata.csv',
    'train': 'data/output/costnet.json',
    'plan': 'data/output/plans',
    'bench': 'data/output/bench.csv',
    'plot': 'data/output/plot.svg',
}


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = DEFAULT_OUTPUTS[args.command]
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    if args.time_cap_s is not None and args.time_cap_s <= 0:
        parser.error("--time-cap-s must be positive")
    return args


def display_summary(command: str, result, out: str) -> None:
    """Display a summary of a command's outcome to the console."""
    print(f"\n========= {command.upper()} SUMMARY =========")
    if command == 'gen-mps':
        library, report = result
        print(f"Primitives: {len(library)} in {len(library.steering_values)} steering buckets")
        print(f"Feasible solves: {report.feasible}/{report.attempted} ({report.feasible_fraction:.1%})")
        print(f"Mirrored copies added: {report.mirrored_added}")
    elif command == 'gen-costdata':
        print(f"Rows: {len(result)} (feasible fraction {result.feasible_fraction:.1%})")
    elif command == 'train':
        print(f"Epochs: {result.metadata.get('epochs')}")
        print(f"Held-out RMSE: {result.metadata.get('val_rmse', float('nan')):.4f}")
    elif command == 'plan':
        print(f"Planner: {result.planner} - status: {result.status}")
        print(f"MPs explored: {result.mps_explored}, nodes expanded: {result.nodes_expanded}")
        print(f"Planning time: {result.wall_time_s:.2f}s")
        if result.success:
            print(f"Path length: {result.path_length:.2f} m")
            print(f"Terminal error: {[round(float(e), 4) for e in result.terminal_error]}")
    elif command == 'bench':
        print(result.to_text())
    print(f"Output written to {out}")
