import pandas as pd
import pytest
import yaml

import cli
from config import Config
from models import RunRecord, get_session


def _run_args(out, *extra):
    return ['run', '--env', 'river_swim', '--agent', 'opp_ucrl2', '--episodes', '3',
            '--seeds', '1..2', '--variation', 'binary:eps0=0,eps1=0,rho=0.5',
            '--out', str(out), '--jobs', '1', *extra]


def _summary(directory):
    return yaml.safe_load((directory / 'summary.yaml').read_text(encoding='utf-8'))


class TestRun:

    def test_writes_three_files(self, tmp_path):
        out = tmp_path / 'rs'
        assert cli.main(_run_args(out)) == cli.EXIT_OK
        for name in ('episodes.csv', 'aggregate.csv', 'summary.yaml'):
            assert (out / name).is_file()
        assert (out / Config.RESULTS_DB).is_file()
        assert _summary(out)['config']['agent']['kind'] == 'opp_ucrl2'

    def test_repeated_run_keeps_ledger_size(self, tmp_path):
        out = tmp_path / 'rs'
        assert cli.main(_run_args(out)) == cli.EXIT_OK
        assert cli.main(_run_args(out)) == cli.EXIT_OK
        assert _ledger_rows(out) == 1

    def test_seed_range_expands(self, tmp_path):
        out = tmp_path / 'many'
        args = ['run', '--env', 'frozen_lake', '--agent', 'psrl', '--episodes', '1',
                '--seeds', '1..20', '--variation', 'constant:value=1', '--out', str(out),
                '--jobs', '1']
        assert cli.main(args) == cli.EXIT_OK
        assert _summary(out)['config']['seeds'] == list(range(1, 21))
        assert len(pd.read_csv(out / 'episodes.csv')) == 20

    def test_missing_env_without_config(self, tmp_path):
        args = ['run', '--agent', 'ucrl2', '--variation', 'constant', '--out', str(tmp_path)]
        assert cli.main(args) == cli.EXIT_CONFIG

    def test_bad_variation_spec(self, tmp_path):
        args = _run_args(tmp_path)
        args[args.index('--variation') + 1] = 'binary:eps0=0.9,eps1=0.5'
        assert cli.main(args) == cli.EXIT_CONFIG

    def test_unknown_environment_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            cli.main(['run', '--env', 'pong', '--agent', 'ucrl2'])
        assert excinfo.value.code == 2

    def test_config_file(self, tmp_path):
        config_path = tmp_path / 'experiment.yaml'
        out = tmp_path / 'from_file'
        config_path.write_text(yaml.safe_dump({
            'environment': 'river_swim',
            'agent': {'kind': 'ucrl2'},
            'variation': {'kind': 'periodic', 'eps0': 0.1, 'eps1': 0.2},
            'episodes': 2,
            'seeds': [5],
            'output': str(out),
            'jobs': 1,
        }), encoding='utf-8')
        assert cli.main(['run', '--config', str(config_path)]) == cli.EXIT_OK
        assert _summary(out)['final_ci_half_width'] is None

        conflicting = ['run', '--config', str(config_path), '--episodes', '4']
        assert cli.main(conflicting) == cli.EXIT_CONFIG

    def test_runtime_failure(self, tmp_path, monkeypatch):
        def explode(config):
            raise RuntimeError('worker died')

        monkeypatch.setattr(cli, 'run_experiment', explode)
        assert cli.main(_run_args(tmp_path)) == cli.EXIT_RUNTIME


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(['run', '--help'])
    assert excinfo.value.code == 0
    text = capsys.readouterr().out
    for flag in ('--config', '--env', '--agent', '--episodes', '--seeds', '--variation',
                 '--out', '--jobs'):
        assert flag in text
    assert 'default' in text


class TestGrid:

    def test_single_point_grid(self, tmp_path):
        config_path = tmp_path / 'base.yaml'
        grid_path = tmp_path / 'grid.yaml'
        out = tmp_path / 'grid'
        config_path.write_text(yaml.safe_dump({
            'environment': 'river_swim',
            'agent': {'kind': 'opp_ucrl2'},
            'variation': {'kind': 'binary', 'rho': 0.5},
            'episodes': 3,
            'seeds': '1..2',
            'jobs': 1,
        }), encoding='utf-8')
        grid_path.write_text(yaml.safe_dump({'agent': {'delta': [0.1]}}), encoding='utf-8')

        args = ['grid', '--config', str(config_path), '--grid', str(grid_path),
                '--select-at', '3', '--out', str(out)]
        assert cli.main(args) == cli.EXIT_OK

        leaderboard = pd.read_csv(out / 'leaderboard.csv')
        assert len(leaderboard) == 1
        assert list(leaderboard.columns) == ['rank', 'agent.delta', 'metric']
        best = yaml.safe_load((out / 'best.yaml').read_text(encoding='utf-8'))
        summary = yaml.safe_load((out / 'grid_summary.yaml').read_text(encoding='utf-8'))
        assert best == {'agent.delta': 0.1}
        assert summary['best'] == best

    def test_empty_grid(self, tmp_path):
        config_path = tmp_path / 'base.yaml'
        grid_path = tmp_path / 'grid.yaml'
        config_path.write_text(yaml.safe_dump({
            'environment': 'river_swim', 'agent': {'kind': 'ucrl2'},
            'variation': {'kind': 'constant'}, 'episodes': 2, 'seeds': [1], 'jobs': 1,
        }), encoding='utf-8')
        grid_path.write_text('{}', encoding='utf-8')
        args = ['grid', '--config', str(config_path), '--grid', str(grid_path),
                '--out', str(tmp_path / 'out')]
        assert cli.main(args) == cli.EXIT_CONFIG


class TestReproduce:

    def _reproduce(self, out):
        return cli.main(['reproduce', '--figure', 'binary', '--episodes', '3', '--seeds', '1..2',
                         '--jobs', '1', '--out', str(out)])

    def test_matrix_and_comparison(self, tmp_path):
        out = tmp_path / 'binary'
        assert self._reproduce(out) == cli.EXIT_OK
        assert len(list(out.glob('*/*/aggregate.csv'))) == 12
        comparison = pd.read_csv(out / 'comparison.csv')
        assert len(comparison) == 6
        assert set(comparison['family']) == {'ucrl2', 'psrl'}

    def test_identical_invocations_identical_csvs(self, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        assert self._reproduce(first) == cli.EXIT_OK
        assert self._reproduce(second) == cli.EXIT_OK
        csvs = sorted(p.relative_to(first) for p in first.rglob('*.csv'))
        assert len(csvs) == 12 * 2 + 1
        for relative in csvs:
            assert (first / relative).read_bytes() == (second / relative).read_bytes()

    def test_repeated_invocation_keeps_ledger_size(self, tmp_path):
        out = tmp_path / 'binary'
        assert self._reproduce(out) == cli.EXIT_OK
        assert self._reproduce(out) == cli.EXIT_OK
        assert _ledger_rows(out) == 12


def _ledger_rows(out):
    session = get_session(out / Config.RESULTS_DB)
    try:
        return session.query(RunRecord).count()
    finally:
        session.close()
