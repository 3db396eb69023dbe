"""
Result persistence: per-episode and aggregate CSVs, YAML summaries and the
SQLite run ledger.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import pandas as pd
import yaml

from config import Config, ExperimentConfig, to_mapping
from experiment import AggregateCurve, GridSearchResult, RegretCurve, aggregate_matrix
from models import GridTrialRecord, RunRecord, get_session

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = ['episode', 'seed', 'algorithm', 'environment', 'L_k',
                   'episode_regret', 'cum_regret']
AGGREGATE_COLUMNS = ['episode', 'mean_cum_regret', 'ci_half_width']
COMPARISON_COLUMNS = ['environment', 'family', 'baseline', 'opportunistic',
                      'baseline_final', 'opp_final', 'reduction_pct']

EPISODES_FILE = 'episodes.csv'
AGGREGATE_FILE = 'aggregate.csv'
SUMMARY_FILE = 'summary.yaml'


class ExportError(OSError):
    """Writing or reading a result file failed; the message names the path."""


class ExportPaths(NamedTuple):
    episodes: Path
    aggregate: Path
    summary: Path


def _write_csv(frame: pd.DataFrame, path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=Config.CSV_FLOAT_FORMAT,
                     lineterminator='\n', encoding='utf-8')
    except OSError as e:
        raise ExportError(f'cannot write {path}: {e}') from e


def _write_yaml(document: Mapping, path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            yaml.safe_dump(document, f, sort_keys=False, allow_unicode=True)
    except OSError as e:
        raise ExportError(f'cannot write {path}: {e}') from e


def episode_frame(curves: Sequence[RegretCurve], algorithm: str, environment: str) -> pd.DataFrame:
    """Long-format per-episode table, seeds in run order."""
    frames = []
    for curve in curves:
        num_episodes = len(curve)
        frames.append(pd.DataFrame({
            'episode': range(1, num_episodes + 1),
            'seed': [curve.seed] * num_episodes,
            'algorithm': [algorithm] * num_episodes,
            'environment': [environment] * num_episodes,
            'L_k': curve.variation_trace,
            'episode_regret': curve.per_episode_regret,
            'cum_regret': curve.cumulative,
        }))
    return pd.concat(frames, ignore_index=True)[EPISODE_COLUMNS]


def aggregate_frame(agg: AggregateCurve) -> pd.DataFrame:
    return pd.DataFrame({
        'episode': range(1, len(agg.mean) + 1),
        'mean_cum_regret': agg.mean,
        'ci_half_width': agg.ci_half_width,
    })[AGGREGATE_COLUMNS]


def summary_document(config: ExperimentConfig, agg: AggregateCurve,
                     elapsed_seconds: Optional[float] = None,
                     extra: Optional[Mapping] = None) -> Dict:
    document = {
        'config': to_mapping(config),
        'num_seeds': agg.num_seeds,
        'final_episode': len(agg.mean),
        'final_mean_cum_regret': agg.final_mean,
        # undefined for a single seed
        'final_ci_half_width': agg.final_ci if agg.num_seeds > 1 else None,
        'wall_clock_seconds': None if elapsed_seconds is None else round(float(elapsed_seconds), 3),
    }
    if extra:
        document.update(extra)
    return document


def export_results(curves: Sequence[RegretCurve],
                   agg: AggregateCurve,
                   config: ExperimentConfig,
                   path,
                   elapsed_seconds: Optional[float] = None,
                   extra: Optional[Mapping] = None) -> ExportPaths:
    """
    Write the per-episode CSV, the aggregate CSV and the YAML summary into ``path``.

    Args:
        curves: Per-seed regret curves, in seed order
        agg: Their aggregate
        config: Config echoed into the summary
        path: Output directory
        elapsed_seconds: Wall-clock time of the experiment
        extra: Additional summary entries

    Returns:
        Paths of the three files
    """
    out = Path(path)
    paths = ExportPaths(out / EPISODES_FILE, out / AGGREGATE_FILE, out / SUMMARY_FILE)

    _write_csv(episode_frame(curves, config.agent.kind, config.environment.value), paths.episodes)
    _write_csv(aggregate_frame(agg), paths.aggregate)
    _write_yaml(summary_document(config, agg, elapsed_seconds, extra), paths.summary)

    logger.info(f'Results written to {out}')
    return paths


def read_episode_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding='utf-8')
    except OSError as e:
        raise ExportError(f'cannot read {path}: {e}') from e


def aggregate_from_frame(frame: pd.DataFrame) -> AggregateCurve:
    """Re-aggregate a per-episode table as exported by :func:`export_results`."""
    matrix = frame.pivot(index='seed', columns='episode', values='cum_regret')
    return aggregate_matrix(matrix.sort_index(axis=1).to_numpy())


def write_comparison(rows: List[Mapping], path) -> Path:
    path = Path(path)
    _write_csv(pd.DataFrame(rows, columns=COMPARISON_COLUMNS), path)
    return path


def write_leaderboard(result: GridSearchResult, path) -> Path:
    """Grid leaderboard sorted ascending by the selection metric."""
    path = Path(path)
    names = sorted(result.best)
    rows = [{'rank': rank, **trial.assignment, 'metric': trial.metric}
            for rank, trial in enumerate(result.leaderboard, start=1)]
    _write_csv(pd.DataFrame(rows, columns=['rank', *names, 'metric']), path)
    return path


def write_yaml(document: Mapping, path) -> Path:
    path = Path(path)
    _write_yaml(document, path)
    return path


def record_run(out_dir, command: str, config: ExperimentConfig,
               agg: Optional[AggregateCurve] = None,
               grid: Optional[GridSearchResult] = None) -> int:
    """
    Upsert a run (and its grid trials) into ``<out_dir>/<Config.RESULTS_DB>``.

    A run is keyed by command, environment, algorithm, output directory and
    the serialized config, so repeating a command leaves one row per run.
    """
    session = get_session(Path(out_dir) / Config.RESULTS_DB)
    key = dict(
        command=command,
        environment=config.environment.value,
        algorithm=config.agent.kind,
        output_dir=str(out_dir),
        config_yaml=yaml.safe_dump(to_mapping(config), sort_keys=False),
    )
    try:
        record = session.query(RunRecord).filter_by(**key).one_or_none()
        if record is None:
            record = RunRecord(**key)
            session.add(record)
        else:
            logger.debug(f'Replacing ledger entry {record.id} for {command} '
                         f'{key["environment"]}/{key["algorithm"]}')
        record.num_episodes = config.num_episodes
        record.num_seeds = len(config.seeds)
        record.final_mean_regret = agg.final_mean if agg is not None else None
        record.final_ci_half_width = (agg.final_ci if agg is not None and agg.num_seeds > 1
                                      else None)
        record.trials = [
            GridTrialRecord(rank=rank, assignment=json.dumps(trial.assignment, sort_keys=True),
                            metric=trial.metric)
            for rank, trial in enumerate(grid.leaderboard if grid is not None else (), start=1)
        ]
        session.commit()
        return record.id
    except Exception:
        session.rollback()
        raise
    finally:
        engine = session.get_bind()
        session.close()
        engine.dispose()
