import pytest
import yaml

from config import (
    AgentSettings,
    Config,
    ConfigError,
    config_from_mapping,
    load_experiment_config,
    merge_flags,
    parse_seeds,
    to_mapping,
    with_overrides,
)
from environments import EnvironmentId
from variation import BetaIid, NormalizationThresholds


def _document(**changes):
    document = {
        'environment': 'cliff_walking',
        'agent': {'kind': 'opp_psrl', 'prior_value': 0.5},
        'variation': {'kind': 'beta', 'alpha': 2, 'beta': 2, 'threshold_rho': 0.1},
        'episodes': 50,
        'seeds': '1..3',
        'output': 'out/cliff',
        'jobs': 1,
    }
    document.update(changes)
    return document


class TestSeeds:

    def test_range_expands_inclusive(self):
        assert parse_seeds('1..20') == tuple(range(1, 21))

    def test_mixed(self):
        assert parse_seeds('1..3,9, 12') == (1, 2, 3, 9, 12)
        assert parse_seeds([4, '6..7']) == (4, 6, 7)
        assert parse_seeds(5) == (5,)

    @pytest.mark.parametrize('value', ['', '3..1', 'a', '1,1', True])
    def test_invalid(self, value):
        with pytest.raises(ConfigError) as excinfo:
            parse_seeds(value)
        assert excinfo.value.key == 'seeds'


class TestConfigFromMapping:

    def test_full_document(self):
        config = config_from_mapping(_document())
        assert config.environment is EnvironmentId.CLIFF_WALKING
        assert config.agent == AgentSettings(kind='opp_psrl', prior_value=0.5)
        assert config.variation == BetaIid(2.0, 2.0)
        assert config.threshold_rho == 0.1
        assert config.seeds == (1, 2, 3)
        assert config.num_episodes == 50

    def test_explicit_thresholds(self):
        variation = {'kind': 'beta', 'l_min': 0.2, 'l_max': 0.7}
        config = config_from_mapping(_document(variation=variation))
        assert config.normalization_thresholds() == NormalizationThresholds(0.2, 0.7)

    @pytest.mark.parametrize('changes, key', [
        ({'environment': 'lunar_lander'}, 'environment'),
        ({'agent': {'kind': 'dqn'}}, 'agent.kind'),
        ({'agent': {'kind': 'ucrl2', 'delta': 2.0}}, 'agent.delta'),
        ({'agent': {'kind': 'ucrl2', 'gamma': 0.9}}, 'agent.gamma'),
        ({'variation': {'kind': 'binary', 'eps0': 0.7, 'eps1': 0.5}}, 'variation.eps0'),
        ({'variation': {'kind': 'beta', 'threshold_rho': 0.6}}, 'variation.threshold_rho'),
        ({'variation': {'kind': 'beta', 'l_min': 0.2}}, 'variation.l_min'),
        ({'episodes': 0}, 'episodes'),
        ({'episodes': 2.5}, 'episodes'),
        ({'jobs': -1}, 'jobs'),
        ({'colour': 'blue'}, 'colour'),
    ])
    def test_errors_name_the_key(self, changes, key):
        with pytest.raises(ConfigError) as excinfo:
            config_from_mapping(_document(**changes))
        assert excinfo.value.key == key
        assert str(excinfo.value).startswith(f'{key}:')

    def test_missing_environment(self):
        document = _document()
        del document['environment']
        with pytest.raises(ConfigError, match='environment'):
            config_from_mapping(document)

    def test_mapping_round_trip(self):
        config = config_from_mapping(_document())
        assert config_from_mapping(to_mapping(config)) == config

    def test_load_from_file(self, tmp_path):
        path = tmp_path / 'experiment.yaml'
        path.write_text(yaml.safe_dump(_document()), encoding='utf-8')
        assert load_experiment_config(path) == config_from_mapping(_document())

    def test_load_bad_yaml(self, tmp_path):
        path = tmp_path / 'broken.yaml'
        path.write_text('agent: [unclosed', encoding='utf-8')
        with pytest.raises(ConfigError, match='invalid YAML'):
            load_experiment_config(path)

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='cannot read'):
            load_experiment_config(tmp_path / 'absent.yaml')


class TestOverrides:

    def test_flags_fill_an_empty_document(self):
        merged = merge_flags(None, {'environment': 'river_swim', 'agent.kind': 'ucrl2',
                                    'agent.delta': None})
        assert merged == {'environment': 'river_swim', 'agent': {'kind': 'ucrl2'}}

    def test_conflict_with_file_is_an_error(self):
        with pytest.raises(ConfigError) as excinfo:
            merge_flags(_document(), {'episodes': 10})
        assert excinfo.value.key == 'episodes'

    def test_flags_extend_a_document(self):
        merged = merge_flags(_document(), {'agent.alpha_floor': 0.01})
        assert merged['agent'] == {'kind': 'opp_psrl', 'prior_value': 0.5, 'alpha_floor': 0.01}

    def test_with_overrides(self):
        config = config_from_mapping(_document())
        tuned = with_overrides(config, {'agent.prior_value': 2.0, 'variation.threshold_rho': 0.2,
                                        'episodes': 7})
        assert tuned.agent.prior_value == 2.0
        assert tuned.threshold_rho == 0.2
        assert tuned.num_episodes == 7
        assert config.agent.prior_value == 0.5

    def test_bare_agent_keys(self):
        config = config_from_mapping(_document())
        assert with_overrides(config, {'alpha_floor': 0.1}).agent.alpha_floor == 0.1

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            with_overrides(config_from_mapping(_document()), {'variation.alpha': 3})


class TestEnvironmentConfig:

    def test_validate_defaults(self):
        assert Config.validate()

    def test_resolve_jobs(self):
        assert Config.resolve_jobs(3) == 3
        assert Config.resolve_jobs(0) >= 1

    def test_bad_log_level(self, monkeypatch):
        monkeypatch.setattr(Config, 'LOG_LEVEL', 'CHATTY')
        with pytest.raises(ConfigError) as excinfo:
            Config.validate()
        assert excinfo.value.key == 'OPPRL_LOG_LEVEL'

    def test_agent_family(self):
        settings = AgentSettings(kind='opp_ucrl2')
        assert settings.family == 'ucrl2'
        assert settings.opportunistic
