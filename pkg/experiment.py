"""
Regret accounting and the multi-seed episodic experiment loop.

Regret is the expected actual regret: each episode contributes
L_k * (V*_1(start) - V^{pi_k}_1(start)), with both values computed exactly.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from agents import MdpShape, make_agent
from config import Config, ExperimentConfig, with_overrides
from environments import make_environment
from mdp import FiniteHorizonMdp, Policy, evaluate_policy, optimal_values, run_episode
from variation import normalize, sample_variation

logger = logging.getLogger(__name__)

REGRET_TOLERANCE = 1e-9


class AggregationError(ValueError):
    """Raised when curves cannot be aggregated."""


class GridSearchError(ValueError):
    """Raised for an empty or malformed grid."""


class Streams(NamedTuple):
    variation: np.random.Generator
    transitions: np.random.Generator
    agent: np.random.Generator


def seed_streams(seed: int) -> Streams:
    """
    Three independent generators derived from one seed.

    The variation stream is shared by every algorithm run with the same seed,
    which makes comparisons between algorithms paired.
    """
    children = np.random.SeedSequence(seed).spawn(3)
    return Streams(*(np.random.default_rng(child) for child in children))


@dataclass(frozen=True, eq=False)
class RegretCurve:
    seed: int
    per_episode_regret: np.ndarray
    variation_trace: np.ndarray
    value_gaps: np.ndarray
    cumulative: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'cumulative', np.cumsum(self.per_episode_regret))

    def __len__(self):
        return len(self.per_episode_regret)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative[-1])


@dataclass(frozen=True, eq=False)
class AggregateCurve:
    mean: np.ndarray
    ci_half_width: np.ndarray
    num_seeds: int

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_ci(self) -> float:
        return float(self.ci_half_width[-1])


@dataclass
class GridTrial:
    assignment: Dict[str, float]
    metric: float


@dataclass
class GridSearchResult:
    best: Dict[str, float]
    best_metric: float
    leaderboard: List[GridTrial]


def value_gap(truth: FiniteHorizonMdp, policy: Policy, optimal_value: Optional[float] = None) -> float:
    """V*_1(start) - V^pi_1(start)."""
    if optimal_value is None:
        optimal_value = optimal_values(truth)[0].initial(truth.start_state)
    return optimal_value - evaluate_policy(truth, policy).initial(truth.start_state)


def episode_regret(truth: FiniteHorizonMdp, policy: Policy, level: float,
                   optimal_value: Optional[float] = None) -> float:
    """Expected actual regret of one episode, weighted by L_k."""
    return level * value_gap(truth, policy, optimal_value)


def run_single(config: ExperimentConfig, seed: int) -> RegretCurve:
    """
    One seeded run of ``config.num_episodes`` episodes.

    Per episode: draw L_k, normalize it, let the agent plan, score the policy
    exactly, then play the episode on the true model and feed it back.
    """
    truth = make_environment(config.environment)
    shape = MdpShape.from_mdp(truth)
    thresholds = config.normalization_thresholds()
    optimal_value = optimal_values(truth)[0].initial(truth.start_state)
    agent = make_agent(config.agent, shape)
    streams = seed_streams(seed)

    num_episodes = config.num_episodes
    regrets = np.zeros(num_episodes)
    levels = np.zeros(num_episodes)
    gaps = np.zeros(num_episodes)

    for k in range(1, num_episodes + 1):
        level = sample_variation(config.variation, k, streams.variation)
        policy = agent.plan(k, normalize(level, thresholds), streams.agent)

        gap = value_gap(truth, policy, optimal_value)
        levels[k - 1] = level
        gaps[k - 1] = gap
        regrets[k - 1] = level * gap
        if regrets[k - 1] < -REGRET_TOLERANCE:
            logger.warning(f'Negative regret {regrets[k - 1]:.3g} at episode {k} (seed {seed})')

        agent.observe(run_episode(truth, policy, streams.transitions))
        logger.debug(f'{agent.name} seed={seed} k={k} L={level:.4f} regret={regrets[k - 1]:.6g}')

    curve = RegretCurve(seed, regrets, levels, gaps)
    logger.info(f'{config.environment.value}/{config.agent.kind} seed {seed}: '
                f'cumulative regret {curve.final_regret:.4f} after {num_episodes} episodes')
    return curve


def run_experiment(config: ExperimentConfig) -> List[RegretCurve]:
    """One run per seed, returned in ``config.seeds`` order whatever the schedule."""
    jobs = min(Config.resolve_jobs(config.jobs), len(config.seeds))
    if jobs == 1:
        return [run_single(config, seed) for seed in config.seeds]
    return Parallel(n_jobs=jobs)(delayed(run_single)(config, seed) for seed in config.seeds)


def aggregate(curves: Sequence[RegretCurve], allow_single: bool = False) -> AggregateCurve:
    """
    Per-episode mean cumulative regret with a normal-approximation 95% CI.

    A single curve is only accepted with ``allow_single``; its half-width is
    reported as zero.
    """
    if not curves or (len(curves) < 2 and not allow_single):
        raise AggregationError(f'need at least 2 curves to aggregate, got {len(curves)}')
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise AggregationError(f'curves have different lengths: {sorted(lengths)}')

    cumulative = np.vstack([c.cumulative for c in curves])
    return aggregate_matrix(cumulative)


def aggregate_matrix(cumulative: np.ndarray) -> AggregateCurve:
    """Aggregate a (num_seeds, K) matrix of cumulative regret."""
    num_seeds = cumulative.shape[0]
    mean = cumulative.mean(axis=0)
    if num_seeds < 2:
        half_width = np.zeros_like(mean)
    else:
        half_width = Config.CI_Z * cumulative.std(axis=0, ddof=1) / np.sqrt(num_seeds)
    return AggregateCurve(mean, half_width, num_seeds)


def default_grid(agent_kind: str) -> Dict[str, Sequence[float]]:
    """Grid searched by ``reproduce --tune`` for one agent kind."""
    if agent_kind.endswith('ucrl2'):
        return {'agent.delta': Config.GRID_DELTA, 'agent.scale': Config.GRID_SCALE}
    grid = {'agent.prior_value': Config.GRID_PRIOR_VALUE}
    if agent_kind == 'opp_psrl':
        grid['agent.alpha_floor'] = Config.GRID_ALPHA_FLOOR
    return grid


def grid_search(base: ExperimentConfig,
                grid: Mapping[str, Sequence[float]],
                selection_episodes: int,
                runner: Callable[[ExperimentConfig], List[RegretCurve]] = run_experiment
                ) -> GridSearchResult:
    """
    Exhaustive search minimizing mean cumulative regret at ``selection_episodes``.

    Assignments are visited in lexicographic parameter-name order, then in
    value-list order; the first assignment reaching the minimum wins ties.
    """
    if not grid:
        raise GridSearchError('grid is empty')
    for name, values in grid.items():
        if isinstance(values, (str, bytes)) or not isinstance(values, Sequence) or not values:
            raise GridSearchError(f'grid entry {name!r} needs a nonempty list of values')
    if not 1 <= selection_episodes <= base.num_episodes:
        raise GridSearchError(f'selection episode {selection_episodes} outside '
                              f'[1, {base.num_episodes}]')

    names = sorted(grid)
    trials = []
    best = None
    for combo in itertools.product(*(grid[name] for name in names)):
        assignment = dict(zip(names, combo))
        curves = runner(with_overrides(base, assignment))
        metric = float(np.mean([c.cumulative[selection_episodes - 1] for c in curves]))
        trials.append(GridTrial(assignment, metric))
        logger.info(f'grid {assignment}: mean regret at episode {selection_episodes} = {metric:.4f}')
        if best is None or metric < best.metric:
            best = trials[-1]

    leaderboard = sorted(trials, key=lambda t: t.metric)
    return GridSearchResult(dict(best.assignment), best.metric, leaderboard)


def reduction(baseline: float, opportunistic: float) -> float:
    """Percentage regret reduction of the opportunistic agent over its baseline."""
    if baseline == 0:
        return float('nan')
    return 100.0 * (baseline - opportunistic) / baseline
