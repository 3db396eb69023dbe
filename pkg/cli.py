"""
Command-line entry point for the opportunistic RL benchmark.

    python cli.py run --env river_swim --agent opp_ucrl2 --episodes 1000 \
        --seeds 1..20 --variation binary:eps0=0,eps1=0,rho=0.5 --out results/rs
    python cli.py grid --config experiment.yaml --grid grid.yaml --select-at 1000 --out results/grid
    python cli.py reproduce --figure binary --out results/binary

Exit status: 0 on success, 2 on configuration errors, 1 on runtime failures.
"""
import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Dict, Mapping

from config import (
    AGENT_KINDS,
    Config,
    ConfigError,
    ExperimentConfig,
    config_from_mapping,
    load_yaml,
    merge_flags,
    to_mapping,
    with_overrides,
)
from environments import EnvironmentId
from experiment import (
    GridSearchError,
    aggregate,
    default_grid,
    grid_search,
    reduction,
    run_experiment,
)
from results import (
    export_results,
    record_run,
    write_comparison,
    write_leaderboard,
    write_yaml,
)
from variation import VariationError, parse_variation_spec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

PRESET_EPISODES = 1000
PRESET_SEEDS = '1..20'
REPRODUCE_PRESETS = {
    'binary': {'kind': 'binary', 'eps0': 0.0, 'eps1': 0.0, 'rho': 0.5},
    'beta': {'kind': 'beta', 'alpha': 2.0, 'beta': 2.0, 'threshold_rho': 0.05},
    'periodic': {'kind': 'periodic', 'eps0': 0.1, 'eps1': 0.2},
}
FAMILIES = (('ucrl2', 'opp_ucrl2'), ('psrl', 'opp_psrl'))


def _execute(config: ExperimentConfig):
    """Run every seed and aggregate; returns (curves, aggregate, elapsed seconds)."""
    started = time.perf_counter()
    curves = run_experiment(config)
    agg = aggregate(curves, allow_single=True)
    return curves, agg, time.perf_counter() - started


def _variation_flags(spec: str) -> Dict[str, float]:
    try:
        process = parse_variation_spec(spec)
    except VariationError as e:
        raise ConfigError(str(e), key=e.key) from e
    return {'variation.kind': process.kind,
            **{f'variation.{name}': value for name, value in process.params().items()}}


def cmd_run(args) -> int:
    """Run one experiment from a config file or a complete flag set."""
    document = load_yaml(args.config) if args.config else None
    if document is None and args.env is None:
        raise ConfigError('is required when --config is not given (--env)', key='environment')
    if document is None and args.agent is None:
        raise ConfigError('is required when --config is not given (--agent)', key='agent.kind')
    if document is None and args.variation is None:
        raise ConfigError('is required when --config is not given (--variation)',
                          key='variation.kind')

    flags = {
        'environment': args.env,
        'agent.kind': args.agent,
        'agent.delta': args.delta,
        'agent.scale': args.scale,
        'agent.prior_value': args.prior_value,
        'agent.alpha_floor': args.alpha_floor,
        'variation.threshold_rho': args.threshold_rho,
        'episodes': args.episodes,
        'seeds': args.seeds,
        'output': args.out,
        'jobs': args.jobs,
    }
    if args.variation is not None:
        flags.update(_variation_flags(args.variation))
    config = config_from_mapping(merge_flags(document, flags))

    logger.info('=' * 60)
    logger.info(f'{config.environment.value} / {config.agent.kind}: '
                f'{config.num_episodes} episodes x {len(config.seeds)} seeds')
    logger.info('=' * 60)

    curves, agg, elapsed = _execute(config)
    export_results(curves, agg, config, config.output_dir, elapsed_seconds=elapsed)
    record_run(config.output_dir, 'run', config, agg)

    logger.info(f'Final mean cumulative regret: {agg.final_mean:.4f} '
                f'± {agg.final_ci:.4f} ({elapsed:.1f}s)')
    return EXIT_OK


def _flatten_grid(document: Mapping, prefix: str = '') -> Dict[str, list]:
    """Accept both ``agent.delta: [...]`` and nested ``agent: {delta: [...]}`` grids."""
    grid = {}
    for key, value in document.items():
        name = f'{prefix}{key}'
        if isinstance(value, Mapping):
            grid.update(_flatten_grid(value, prefix=f'{name}.'))
        elif isinstance(value, list):
            grid[name] = value
        else:
            raise ConfigError(f'expected a list of values, got {value!r}', key=f'grid.{name}')
    return grid


def cmd_grid(args) -> int:
    """Grid-search a base config and write the leaderboard and the winner."""
    base = config_from_mapping(load_yaml(args.config))
    changes = {}
    if args.out is not None:
        changes['output_dir'] = args.out
    if args.jobs is not None:
        changes['jobs'] = args.jobs
    base = replace(base, **changes)

    grid = _flatten_grid(load_yaml(args.grid))
    select_at = args.select_at or base.num_episodes
    try:
        result = grid_search(base, grid, select_at)
    except GridSearchError as e:
        raise ConfigError(str(e), key='grid') from e

    out = Path(base.output_dir)
    write_leaderboard(result, out / 'leaderboard.csv')
    write_yaml(result.best, out / 'best.yaml')
    write_yaml({
        'best': result.best,
        'best_metric': result.best_metric,
        'selection_episode': select_at,
        'num_assignments': len(result.leaderboard),
        'grid': grid,
        'config': to_mapping(base),
    }, out / 'grid_summary.yaml')
    record_run(out, 'grid', with_overrides(base, result.best), grid=result)

    logger.info(f'Best assignment: {result.best} (mean regret {result.best_metric:.4f} '
                f'at episode {select_at})')
    return EXIT_OK


def cmd_reproduce(args) -> int:
    """Run the 3 environments x 4 agents matrix of one variation scenario."""
    out = Path(args.out)
    variation = REPRODUCE_PRESETS[args.figure]
    rows = []

    logger.info('=' * 60)
    logger.info(f'Reproducing the {args.figure} scenario into {out}')
    logger.info('=' * 60)

    for environment in EnvironmentId:
        for baseline, opportunistic in FAMILIES:
            finals = {}
            for kind in (baseline, opportunistic):
                cell = out / environment.value / kind
                config = config_from_mapping({
                    'environment': environment.value,
                    'agent': {'kind': kind},
                    'variation': dict(variation),
                    'episodes': args.episodes,
                    'seeds': args.seeds,
                    'output': str(cell),
                    'jobs': Config.JOBS if args.jobs is None else args.jobs,
                })
                if args.tune:
                    result = grid_search(config, default_grid(kind), args.select_at or config.num_episodes)
                    write_leaderboard(result, cell / 'leaderboard.csv')
                    config = with_overrides(config, result.best)
                    logger.info(f'{environment.value}/{kind}: tuned {result.best}')

                curves, agg, elapsed = _execute(config)
                export_results(curves, agg, config, cell, elapsed_seconds=elapsed,
                               extra={'figure': args.figure})
                record_run(out, 'reproduce', config, agg)
                finals[kind] = agg.final_mean

            rows.append({
                'environment': environment.value,
                'family': baseline,
                'baseline': baseline,
                'opportunistic': opportunistic,
                'baseline_final': finals[baseline],
                'opp_final': finals[opportunistic],
                'reduction_pct': reduction(finals[baseline], finals[opportunistic]),
            })

    write_comparison(rows, out / 'comparison.csv')

    logger.info(f'{"environment":<15}{"family":<8}{"baseline":>12}{"opp":>12}{"reduction":>11}')
    for row in rows:
        logger.info(f'{row["environment"]:<15}{row["family"]:<8}{row["baseline_final"]:>12.3f}'
                    f'{row["opp_final"]:>12.3f}{row["reduction_pct"]:>10.1f}%')
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cli.py',
        description='Opportunistic episodic RL benchmark (UCRL2/OppUCRL2, PSRL/OppPSRL).')
    subparsers = parser.add_subparsers(dest='command', required=True)

    env_names = [e.value for e in EnvironmentId]
    jobs_help = 'max parallel seeds, 0 = all cores (default: OPPRL_JOBS or all cores)'

    run = subparsers.add_parser('run', help='run one experiment')
    run.add_argument('--config', metavar='PATH', help='YAML experiment config (default: none)')
    run.add_argument('--env', choices=env_names, help='environment (default: none)')
    run.add_argument('--agent', choices=AGENT_KINDS, help='agent kind (default: none)')
    run.add_argument('--episodes', type=int, metavar='K',
                     help=f'number of episodes (default: {Config.DEFAULT_EPISODES})')
    run.add_argument('--seeds', metavar='SEEDS',
                     help='seed list such as "1..20" or "1,2,7" (default: 1..20)')
    run.add_argument('--variation', metavar='SPEC',
                     help='variation process "kind:key=val,...", kind in '
                          'binary|periodic|beta|constant (default: none)')
    run.add_argument('--threshold-rho', type=float,
                     help=f'quantile for l_min/l_max (default: {Config.DEFAULT_THRESHOLD_RHO})')
    run.add_argument('--delta', type=float,
                     help=f'UCRL2 confidence parameter (default: {Config.DEFAULT_DELTA})')
    run.add_argument('--scale', type=float,
                     help=f'confidence width multiplier (default: {Config.DEFAULT_SCALE})')
    run.add_argument('--prior-value', type=float,
                     help=f'PSRL Dirichlet prior (default: {Config.DEFAULT_PRIOR_VALUE})')
    run.add_argument('--alpha-floor', type=float,
                     help=f'OppPSRL concentration floor (default: {Config.DEFAULT_ALPHA_FLOOR})')
    run.add_argument('--out', metavar='DIR', help=f'output directory (default: {Config.OUTPUT_DIR})')
    run.add_argument('--jobs', type=int, help=jobs_help)
    run.set_defaults(handler=cmd_run)

    grid = subparsers.add_parser('grid', help='grid-search hyperparameters')
    grid.add_argument('--config', metavar='PATH', required=True, help='YAML base config (required)')
    grid.add_argument('--grid', metavar='PATH', required=True,
                      help='YAML mapping of parameter -> list of values (required)')
    grid.add_argument('--select-at', type=int, metavar='K',
                      help='episode whose mean cumulative regret is minimized (default: last)')
    grid.add_argument('--out', metavar='DIR', help='output directory (default: config output)')
    grid.add_argument('--jobs', type=int, help=jobs_help)
    grid.set_defaults(handler=cmd_grid)

    reproduce = subparsers.add_parser('reproduce', help='run a full scenario preset')
    reproduce.add_argument('--figure', choices=sorted(REPRODUCE_PRESETS), required=True,
                           help='variation scenario (required)')
    reproduce.add_argument('--out', metavar='DIR', default=Config.OUTPUT_DIR,
                           help=f'output directory (default: {Config.OUTPUT_DIR})')
    reproduce.add_argument('--episodes', type=int, default=PRESET_EPISODES, metavar='K',
                           help=f'episodes per run (default: {PRESET_EPISODES})')
    reproduce.add_argument('--seeds', default=PRESET_SEEDS,
                           help=f'seed list (default: {PRESET_SEEDS})')
    reproduce.add_argument('--tune', action='store_true',
                           help='grid-search each cell with the default grid first (default: off)')
    reproduce.add_argument('--select-at', type=int, metavar='K',
                           help='selection episode for --tune (default: last)')
    reproduce.add_argument('--jobs', type=int, help=jobs_help)
    reproduce.set_defaults(handler=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        Config.validate()
    except ConfigError as e:
        print(f'Configuration error: {e}', file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(
        level=Config.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f'Configuration error: {e}')
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f'{args.command} failed: {e}', exc_info=True)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
