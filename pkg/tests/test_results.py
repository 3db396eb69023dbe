import numpy as np
import pandas as pd
import pytest
import yaml

from config import Config
from experiment import GridSearchResult, GridTrial, RegretCurve, aggregate, run_experiment
from models import GridTrialRecord, RunRecord, get_session
import results
from results import (
    AGGREGATE_COLUMNS,
    EPISODE_COLUMNS,
    ExportError,
    aggregate_from_frame,
    export_results,
    read_episode_csv,
    record_run,
    write_comparison,
    write_leaderboard,
)


def _header(path):
    with open(path, encoding='utf-8') as f:
        return f.readline().rstrip('\n')


@pytest.fixture
def exported(make_config, tmp_path):
    config = make_config(num_episodes=6, seeds=(1, 2, 3))
    curves = run_experiment(config)
    agg = aggregate(curves)
    paths = export_results(curves, agg, config, tmp_path / 'run', elapsed_seconds=1.25)
    return config, curves, agg, paths


class TestExport:

    def test_headers(self, exported):
        _, _, _, paths = exported
        assert _header(paths.episodes) == ','.join(EPISODE_COLUMNS)
        assert _header(paths.aggregate) == ','.join(AGGREGATE_COLUMNS)
        assert _header(paths.episodes) == 'episode,seed,algorithm,environment,L_k,episode_regret,cum_regret'

    def test_row_counts(self, exported):
        _, _, _, paths = exported
        assert len(pd.read_csv(paths.episodes)) == 6 * 3
        assert len(pd.read_csv(paths.aggregate)) == 6

    def test_single_row(self, make_config, tmp_path):
        config = make_config(num_episodes=1, seeds=(7,))
        curves = run_experiment(config)
        paths = export_results(curves, aggregate(curves, allow_single=True), config, tmp_path)
        frame = pd.read_csv(paths.episodes)
        assert len(frame) == 1
        assert frame.loc[0, 'seed'] == 7
        summary = yaml.safe_load(paths.summary.read_text(encoding='utf-8'))
        assert summary['final_ci_half_width'] is None

    def test_twelve_significant_digits(self, make_config, tmp_path):
        config = make_config(num_episodes=1, seeds=(1, 2))
        curves = [RegretCurve(1, np.array([1 / 3]), np.array([0.5]), np.array([2 / 3])),
                  RegretCurve(2, np.array([2 / 3]), np.array([1.0]), np.array([2 / 3]))]
        paths = export_results(curves, aggregate(curves), config, tmp_path)
        lines = paths.episodes.read_text(encoding='utf-8').splitlines()
        assert lines[1].endswith(',0.5,0.333333333333,0.333333333333')

    def test_round_trip_reaggregation(self, exported):
        _, _, agg, paths = exported
        again = aggregate_from_frame(read_episode_csv(paths.episodes))
        np.testing.assert_allclose(again.mean, agg.mean, atol=1e-9)
        np.testing.assert_allclose(again.ci_half_width, agg.ci_half_width, atol=1e-9)

    def test_summary_echoes_config(self, exported):
        config, _, agg, paths = exported
        summary = yaml.safe_load(paths.summary.read_text(encoding='utf-8'))
        assert summary['config']['environment'] == 'river_swim'
        assert summary['config']['agent']['kind'] == config.agent.kind
        assert summary['config']['seeds'] == [1, 2, 3]
        assert summary['final_mean_cum_regret'] == pytest.approx(agg.final_mean)
        assert summary['wall_clock_seconds'] == 1.25

    def test_unwritable_path(self, exported, tmp_path):
        config, curves, agg, _ = exported
        blocker = tmp_path / 'file'
        blocker.write_text('x')
        with pytest.raises(ExportError, match='file'):
            export_results(curves, agg, config, blocker / 'sub')

    def test_missing_csv(self, tmp_path):
        with pytest.raises(ExportError):
            read_episode_csv(tmp_path / 'absent.csv')


class TestTables:

    def test_leaderboard_sorted(self, tmp_path):
        result = GridSearchResult(
            best={'agent.delta': 0.1}, best_metric=1.0,
            leaderboard=[GridTrial({'agent.delta': 0.1}, 1.0), GridTrial({'agent.delta': 0.5}, 3.0)])
        frame = pd.read_csv(write_leaderboard(result, tmp_path / 'leaderboard.csv'))
        assert list(frame.columns) == ['rank', 'agent.delta', 'metric']
        assert list(frame['metric']) == [1.0, 3.0]

    def test_comparison_header(self, tmp_path):
        path = write_comparison([{
            'environment': 'river_swim', 'family': 'ucrl2', 'baseline': 'ucrl2',
            'opportunistic': 'opp_ucrl2', 'baseline_final': 10.0, 'opp_final': 8.0,
            'reduction_pct': 20.0,
        }], tmp_path / 'comparison.csv')
        assert _header(path) == ('environment,family,baseline,opportunistic,'
                                 'baseline_final,opp_final,reduction_pct')


class TestLedger:

    def test_run_and_trials_recorded(self, exported, tmp_path):
        config, _, agg, _ = exported
        grid = GridSearchResult({'agent.delta': 0.1}, 1.0, [GridTrial({'agent.delta': 0.1}, 1.0)])
        run_id = record_run(tmp_path, 'grid', config, agg, grid=grid)

        session = get_session(tmp_path / Config.RESULTS_DB)
        try:
            record = session.get(RunRecord, run_id)
            assert record.command == 'grid'
            assert record.num_seeds == 3
            assert record.final_mean_regret == pytest.approx(agg.final_mean)
            assert session.query(GridTrialRecord).filter_by(run_id=run_id).count() == 1
        finally:
            session.close()

    def test_repeated_run_keeps_one_row(self, exported, tmp_path):
        config, _, agg, _ = exported
        first = record_run(tmp_path, 'run', config, agg)
        assert record_run(tmp_path, 'run', config, agg) == first
        record_run(tmp_path, 'reproduce', config, agg)

        session = get_session(tmp_path / Config.RESULTS_DB)
        try:
            assert session.query(RunRecord).count() == 2
        finally:
            session.close()

    def test_repeated_grid_replaces_trials(self, exported, tmp_path):
        config, _, agg, _ = exported
        trials = [GridTrial({'agent.delta': 0.1}, 1.0), GridTrial({'agent.delta': 0.5}, 2.0)]
        record_run(tmp_path, 'grid', config, agg,
                   grid=GridSearchResult({'agent.delta': 0.1}, 1.0, trials))
        run_id = record_run(tmp_path, 'grid', config, agg,
                            grid=GridSearchResult({'agent.delta': 0.1}, 1.0, trials[:1]))

        session = get_session(tmp_path / Config.RESULTS_DB)
        try:
            assert session.query(GridTrialRecord).count() == 1
            assert session.query(GridTrialRecord).one().run_id == run_id
        finally:
            session.close()

    def test_engine_released_after_record(self, exported, tmp_path, monkeypatch):
        config, _, agg, _ = exported
        engines = []

        def tracking_session(db_path):
            session = get_session(db_path)
            engines.append(session.get_bind())
            return session

        monkeypatch.setattr(results, 'get_session', tracking_session)
        record_run(tmp_path, 'run', config, agg)
        assert len(engines) == 1
        assert engines[0].pool.checkedin() == 0
