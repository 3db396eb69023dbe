import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml
from dotenv import load_dotenv

from environments import EnvironmentId
from variation import (
    NormalizationThresholds,
    VariationError,
    VariationProcess,
    resolve_thresholds,
    variation_from_mapping,
)

load_dotenv()


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending dotted config key."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key or 'config'
        super().__init__(f'{self.key}: {message}')


class Config:
    """Application configuration."""

    # Output
    OUTPUT_DIR = os.getenv('OPPRL_OUTPUT_DIR', 'results')
    RESULTS_DB = os.getenv('OPPRL_RESULTS_DB', 'runs.db')
    LOG_LEVEL = os.getenv('OPPRL_LOG_LEVEL', 'INFO').upper()
    JOBS = int(os.getenv('OPPRL_JOBS', 0))  # 0 = all cores

    # Experiment
    DEFAULT_EPISODES = 1000
    DEFAULT_SEEDS = tuple(range(1, 21))
    DEFAULT_THRESHOLD_RHO = 0.05

    # Agents
    DEFAULT_DELTA = 0.05
    DEFAULT_SCALE = 1.0
    DEFAULT_PRIOR_VALUE = 1.0
    DEFAULT_ALPHA_FLOOR = 1e-3

    # Reporting
    CI_Z = 1.96
    CSV_FLOAT_FORMAT = '%.12g'

    # Grid search
    GRID_DELTA = (0.01, 0.05, 0.1, 0.5)
    GRID_SCALE = (0.1, 0.5, 1.0)
    GRID_PRIOR_VALUE = (0.1, 1.0)
    GRID_ALPHA_FLOOR = (1e-3, 0.1, 1.0)

    @staticmethod
    def validate():
        """Validate environment-derived configuration."""
        if Config.JOBS < 0:
            raise ConfigError(f'must be >= 0, got {Config.JOBS}', key='OPPRL_JOBS')
        if not isinstance(logging.getLevelName(Config.LOG_LEVEL), int):
            raise ConfigError(f'unknown log level {Config.LOG_LEVEL!r}', key='OPPRL_LOG_LEVEL')
        return True

    @staticmethod
    def resolve_jobs(jobs: Optional[int] = None) -> int:
        """Worker count; 0 or None means every available core."""
        jobs = Config.JOBS if jobs is None else jobs
        return jobs if jobs > 0 else (os.cpu_count() or 1)


AGENT_KINDS = ('ucrl2', 'opp_ucrl2', 'psrl', 'opp_psrl')
AGENT_KEYS = ('delta', 'scale', 'prior_value', 'alpha_floor')


@dataclass(frozen=True)
class AgentSettings:
    kind: str
    delta: float = Config.DEFAULT_DELTA
    scale: float = Config.DEFAULT_SCALE
    prior_value: float = Config.DEFAULT_PRIOR_VALUE
    alpha_floor: float = Config.DEFAULT_ALPHA_FLOOR

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f'unknown agent kind {self.kind!r}; expected one of {AGENT_KINDS}',
                              key='agent.kind')
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError(f'must lie in (0, 1], got {self.delta}', key='agent.delta')
        for name in ('scale', 'prior_value', 'alpha_floor'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'must be > 0, got {getattr(self, name)}', key=f'agent.{name}')

    @property
    def family(self) -> str:
        return self.kind.replace('opp_', '')

    @property
    def opportunistic(self) -> bool:
        return self.kind.startswith('opp_')


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentId
    agent: AgentSettings
    variation: VariationProcess
    num_episodes: int = Config.DEFAULT_EPISODES
    seeds: Tuple[int, ...] = Config.DEFAULT_SEEDS
    thresholds: Optional[NormalizationThresholds] = None
    threshold_rho: float = Config.DEFAULT_THRESHOLD_RHO
    output_dir: str = Config.OUTPUT_DIR
    jobs: int = 1

    def __post_init__(self):
        if self.num_episodes < 1:
            raise ConfigError(f'must be >= 1, got {self.num_episodes}', key='episodes')
        if not self.seeds:
            raise ConfigError('at least one seed is required', key='seeds')
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f'seeds must be distinct, got {list(self.seeds)}', key='seeds')
        if any(seed < 0 for seed in self.seeds):
            raise ConfigError(f'seeds must be nonnegative, got {list(self.seeds)}', key='seeds')
        if self.jobs < 0:
            raise ConfigError(f'must be >= 0, got {self.jobs}', key='jobs')
        # fail early on thresholds that cannot be resolved
        self.normalization_thresholds()

    def normalization_thresholds(self) -> NormalizationThresholds:
        try:
            return resolve_thresholds(self.variation, self.thresholds, self.threshold_rho)
        except VariationError as e:
            raise ConfigError(str(e), key=e.key) from e


def parse_seeds(value) -> Tuple[int, ...]:
    """
    Expand a seed specification.

    Accepts an int, a list of ints, or a string such as ``"1..20"`` or
    ``"1..5,9,12"`` (ranges are inclusive).
    """
    if isinstance(value, bool):
        raise ConfigError(f'expected seeds, got {value!r}', key='seeds')
    if isinstance(value, int):
        return (value,)
    if isinstance(value, (list, tuple)):
        seeds = []
        for item in value:
            seeds.extend(parse_seeds(item))
        return _distinct(seeds)
    if not isinstance(value, str) or not value.strip():
        raise ConfigError(f'expected seeds, got {value!r}', key='seeds')

    seeds = []
    for part in value.split(','):
        part = part.strip()
        try:
            low, sep, high = part.partition('..')
            low = int(low)
            high = int(high) if sep else low
        except ValueError:
            raise ConfigError(f'cannot parse seed {part!r}', key='seeds') from None
        if high < low:
            raise ConfigError(f'empty seed range {part!r}', key='seeds')
        seeds.extend(range(low, high + 1))
    return _distinct(seeds)


def _distinct(seeds) -> Tuple[int, ...]:
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f'seeds must be distinct, got {seeds}', key='seeds')
    return tuple(seeds)


def _number(value, key: str, cast=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f'must be a number, got {value!r}', key=key)
    if cast is int and int(value) != value:
        raise ConfigError(f'must be an integer, got {value!r}', key=key)
    return cast(value)


TOP_LEVEL_KEYS = ('environment', 'agent', 'variation', 'episodes', 'seeds', 'output', 'jobs')
THRESHOLD_KEYS = ('threshold_rho', 'l_min', 'l_max')


def config_from_mapping(mapping: Mapping) -> ExperimentConfig:
    """Build an ExperimentConfig from the nested mapping of a config file."""
    if not isinstance(mapping, Mapping):
        raise ConfigError('config document must be a mapping')
    for key in mapping:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError('unknown key', key=str(key))

    if mapping.get('environment') is None:
        raise ConfigError('is required', key='environment')
    try:
        environment = EnvironmentId(mapping['environment'])
    except ValueError:
        raise ConfigError(f'unknown environment {mapping["environment"]!r}; expected one of '
                          f'{[e.value for e in EnvironmentId]}', key='environment') from None

    agent_map = mapping.get('agent')
    if not isinstance(agent_map, Mapping) or agent_map.get('kind') is None:
        raise ConfigError('is required', key='agent.kind')
    agent_params = {}
    for key, value in agent_map.items():
        if key == 'kind':
            continue
        if key not in AGENT_KEYS:
            raise ConfigError('unknown key', key=f'agent.{key}')
        agent_params[key] = _number(value, f'agent.{key}')
    agent = AgentSettings(kind=agent_map['kind'], **agent_params)

    variation_map = mapping.get('variation')
    if not isinstance(variation_map, Mapping):
        raise ConfigError('is required', key='variation.kind')
    process_map = {k: v for k, v in variation_map.items() if k not in THRESHOLD_KEYS}
    try:
        process = variation_from_mapping(process_map)
    except VariationError as e:
        raise ConfigError(str(e), key=e.key) from e

    thresholds = None
    if 'l_min' in variation_map or 'l_max' in variation_map:
        if 'l_min' not in variation_map or 'l_max' not in variation_map:
            raise ConfigError('l_min and l_max must be given together', key='variation.l_min')
        try:
            thresholds = NormalizationThresholds(
                _number(variation_map['l_min'], 'variation.l_min'),
                _number(variation_map['l_max'], 'variation.l_max'))
        except VariationError as e:
            raise ConfigError(str(e), key=e.key) from e
    threshold_rho = _number(variation_map.get('threshold_rho', Config.DEFAULT_THRESHOLD_RHO),
                            'variation.threshold_rho')

    return ExperimentConfig(
        environment=environment,
        agent=agent,
        variation=process,
        thresholds=thresholds,
        threshold_rho=threshold_rho,
        num_episodes=_number(mapping.get('episodes', Config.DEFAULT_EPISODES), 'episodes', int),
        seeds=parse_seeds(mapping.get('seeds', list(Config.DEFAULT_SEEDS))),
        output_dir=str(mapping.get('output', Config.OUTPUT_DIR)),
        jobs=_number(mapping.get('jobs', Config.JOBS), 'jobs', int),
    )


def load_yaml(path) -> Dict[str, Any]:
    """Read a YAML document, surfacing I/O and syntax problems as ConfigError."""
    path = Path(path)
    try:
        with open(path, encoding='utf-8') as f:
            document = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f'cannot read {path}: {e}', key='config') from e
    except yaml.YAMLError as e:
        raise ConfigError(f'invalid YAML in {path}: {e}', key='config') from e
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError(f'{path} must contain a mapping', key='config')
    return document


def load_experiment_config(path) -> ExperimentConfig:
    return config_from_mapping(load_yaml(path))


def merge_flags(document: Optional[Mapping], flags: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Overlay dotted-key flag values onto a config document.

    A key set both in the document and on the command line is an error
    rather than a silent override.
    """
    merged = _deep_copy(document or {})
    for dotted, value in flags.items():
        if value is None:
            continue
        parts = dotted.split('.')
        node = merged
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError('expected a mapping', key=part)
        if document is not None and parts[-1] in node:
            raise ConfigError('set both in the config file and on the command line', key=dotted)
        node[parts[-1]] = value
    return merged


def _deep_copy(mapping: Mapping) -> Dict[str, Any]:
    return {k: _deep_copy(v) if isinstance(v, Mapping) else v for k, v in mapping.items()}


def with_overrides(config: ExperimentConfig, assignment: Mapping[str, Any]) -> ExperimentConfig:
    """
    Apply grid-search assignments.

    Keys are ``agent.<name>`` (bare agent names are accepted too),
    ``variation.threshold_rho`` or ``episodes``.
    """
    agent_changes, config_changes = {}, {}
    for key, value in assignment.items():
        name = key[len('agent.'):] if key.startswith('agent.') else key
        if name in AGENT_KEYS:
            agent_changes[name] = _number(value, f'agent.{name}')
        elif key == 'variation.threshold_rho':
            config_changes['threshold_rho'] = _number(value, key)
        elif key == 'episodes':
            config_changes['num_episodes'] = _number(value, key, int)
        else:
            raise ConfigError('not a tunable parameter', key=key)
    if agent_changes:
        config_changes['agent'] = replace(config.agent, **agent_changes)
    return replace(config, **config_changes)


def to_mapping(config: ExperimentConfig) -> Dict[str, Any]:
    """Plain mapping echo of a config, in config-file layout."""
    variation = {'kind': config.variation.kind, **config.variation.params()}
    if config.thresholds is not None:
        variation['l_min'] = config.thresholds.l_min
        variation['l_max'] = config.thresholds.l_max
    variation['threshold_rho'] = config.threshold_rho
    return {
        'environment': config.environment.value,
        'agent': {
            'kind': config.agent.kind,
            'delta': config.agent.delta,
            'scale': config.agent.scale,
            'prior_value': config.agent.prior_value,
            'alpha_floor': config.agent.alpha_floor,
        },
        'variation': variation,
        'episodes': config.num_episodes,
        'seeds': list(config.seeds),
        'output': config.output_dir,
        'jobs': config.jobs,
    }
