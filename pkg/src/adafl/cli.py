"""Command-line front end.

Usage:
    python run_experiment.py run config.json --seed 7          # Run one experiment
    python run_experiment.py run config.json --variant fedavg-0.1
    python run_experiment.py schedule config.json              # Print the fraction schedule
    python run_experiment.py validate config.json              # Parse and validate only
    python run_experiment.py compare config.json --seeds 1 2 3 # Base + variants over seeds
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RunConfig, load_config
from .errors import AdaflError
from .harness import compare_variants, run_single
from .metrics import communication_cost
from .results import write_result
from .selection import cohort_size

logger = logging.getLogger(__name__)

COMPARISON_FILENAME = 'comparison.json'


def configure_logging(verbose: bool = False):
    """Send package logs to the current stderr with an [ADAFL] tag."""
    package_logger = logging.getLogger(__package__)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('[ADAFL] %(message)s'))
    package_logger.addHandler(handler)
    package_logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    package_logger.propagate = False


def _fmt_acc(value: Optional[float]) -> str:
    return 'n/a' if value is None else f'{value:.4f}'


def cmd_run(config: RunConfig, args) -> int:
    if args.variant:
        config = config.variant(args.variant)

    result = run_single(config)
    paths = write_result(result, config.harness.output_dir)
    summary = result.summary

    print(f"\n--- Experiment Complete ---")
    print(f"Rounds: {summary['rounds']} (seed {result.seed})")
    print(f"Average of last {summary['metric_window']}: {_fmt_acc(summary['average_last'])}")
    print(f"Best accuracy: {_fmt_acc(summary['best_accuracy'])} (round {summary['best_round']})")
    print(f"Total cost: {summary['total_cost']} units")
    for entry in summary['targets']:
        if entry['stopping_round'] is None:
            print(f"Target {entry['target']}: not reached")
        else:
            print(f"Target {entry['target']}: round {entry['stopping_round']} ({entry['cost']} units)")
    print(f"Trace saved to: {paths['trace']}")
    print(f"Summary saved to: {paths['summary']}")
    return 0


def cmd_schedule(config: RunConfig, args) -> int:
    fed = config.federation
    schedule = fed.schedule()
    M = fed.num_clients

    print(f"Fraction schedule: {fed.gamma_start} -> {fed.gamma_end} in {fed.num_fractions} "
          f"step(s) over {fed.num_rounds} rounds, M={M}")
    print(f"{'Block':<7}{'Rounds':<15}{'Gamma':<10}{'K':<6}{'Cost':>8}")
    for b, (first, last, gamma) in enumerate(schedule.blocks(), start=1):
        K = cohort_size(gamma, M)
        print(f"{b:<7}{f'{first}-{last}':<15}{gamma:<10g}{K:<6}{(last - first + 1) * K:>8}")
    print(f"Projected max cost: {communication_cost(schedule, fed.num_rounds, M)} units")
    return 0


def cmd_validate(config: RunConfig, args) -> int:
    fed = config.federation
    print(f"Config OK: {config.source}")
    print(f"  Strategy: {fed.local.strategy}, attention: {'on' if fed.attention else 'off'}")
    print(f"  Clients: {fed.num_clients}, rounds: {fed.num_rounds}, data: {fed.data.source}/{fed.data.partition}")
    if config.variants:
        print(f"  Variants: {', '.join(sorted(config.variants))}")
    return 0


def cmd_compare(config: RunConfig, args) -> int:
    comparison = compare_variants(config, seeds=args.seeds, variants=args.variant or None)
    comparison['config'] = config.echo()

    output_dir = Path(config.harness.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    out_path = output_dir / COMPARISON_FILENAME
    with open(out_path, 'w', encoding='utf-8') as f:
        json.dump(comparison, f, indent=2)

    window = config.harness.metrics.metric_window
    print(f"\n--- Comparison over seeds {comparison['seeds']} ---")
    print(f"{'Variant':<24}{f'Avg-{window}':>10}{'Best':>10}{'Std':>10}{'Cost':>10}")
    for name, row in comparison['variants'].items():
        cost = 'n/a' if row['total_cost'] is None else f"{row['total_cost']:.0f}"
        std = 'n/a' if row['accuracy_std_last'] is None else f"{row['accuracy_std_last']:.4f}"
        print(f"{name:<24}{_fmt_acc(row['average_last']):>10}{_fmt_acc(row['best_accuracy']):>10}{std:>10}{cost:>10}")
        for entry in row['targets']:
            if entry['stopping_round'] is None:
                print(f"    target {entry['target']}: reached in {entry['reached']}/{row['runs']} runs")
            else:
                print(f"    target {entry['target']}: round {entry['stopping_round']:.0f} ({entry['cost']:.0f} units)")
    print(f"Comparison saved to: {out_path}")
    return 0


COMMANDS = {
    'run': cmd_run,
    'schedule': cmd_schedule,
    'validate': cmd_validate,
    'compare': cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('config', help='Path to a JSON run config')
    common.add_argument('--seed', type=int, help='Experiment seed (overrides config)')
    common.add_argument('--out', help='Output directory (overrides harness.output_dir)')
    common.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='Dotted config override, e.g. selection.alpha=0.8 (repeatable)')
    common.add_argument('--verbose', action='store_true', help='Log per-round detail')

    parser = argparse.ArgumentParser(description='Federated-learning simulator with adaptive client selection')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', parents=[common], help='Run one experiment and write trace + summary')
    run.add_argument('--variant', help='Run a named variant from the config instead of the base')
    sub.add_parser('schedule', parents=[common], help='Print the fraction schedule and projected cost')
    sub.add_parser('validate', parents=[common], help='Parse and validate a config')
    compare = sub.add_parser('compare', parents=[common], help='Run base and variants over several seeds')
    compare.add_argument('--seeds', type=int, nargs='+', help='Seeds (default: harness.seeds)')
    compare.add_argument('--variant', action='append', help='Restrict to these variants (repeatable)')
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch a subcommand. Returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    configure_logging(args.verbose)
    try:
        config = load_config(args.config, overrides=args.override, seed=args.seed, output_dir=args.out)
        return COMMANDS[args.command](config, args)
    except (AdaflError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())
