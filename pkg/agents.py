"""
Episodic learning agents: UCRL2 / OppUCRL2 (optimistic planning with finite
horizon extended value iteration) and PSRL / OppPSRL (Dirichlet posterior
sampling).

Every agent follows the same episodic contract: it sees the normalized
variation factor before the episode, emits a policy, then ingests the
trajectory.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from config import AgentSettings, Config
from mdp import FiniteHorizonMdp, Policy, Trajectory, ValueTable, backward_induction

logger = logging.getLogger(__name__)


class MdpShape(NamedTuple):
    """What an agent knows up front: sizes, horizon, rewards and discount."""
    num_states: int
    num_actions: int
    horizon: int
    rewards: np.ndarray
    discount: float

    @classmethod
    def from_mdp(cls, mdp: FiniteHorizonMdp) -> 'MdpShape':
        return cls(mdp.num_states, mdp.num_actions, mdp.horizon, mdp.rewards, mdp.discount)


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    """N(s, a) and N(s, a, s'); pair counts are always the row sums of triple counts."""
    pair_counts: np.ndarray
    triple_counts: np.ndarray

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> 'TransitionCounts':
        return cls(np.zeros((num_states, num_actions), dtype=np.int64),
                   np.zeros((num_states, num_actions, num_states), dtype=np.int64))


@dataclass(frozen=True)
class OfuConfig:
    delta: float = Config.DEFAULT_DELTA
    scale: float = Config.DEFAULT_SCALE
    opportunistic: bool = False

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f'delta must lie in (0, 1], got {self.delta}')
        if self.scale <= 0:
            raise ValueError(f'scale must be > 0, got {self.scale}')


@dataclass(frozen=True, eq=False)
class DirichletPosterior:
    concentration: np.ndarray
    prior_value: float

    def __post_init__(self):
        if self.prior_value <= 0:
            raise ValueError(f'prior_value must be > 0, got {self.prior_value}')
        if not np.all(self.concentration > 0):
            raise ValueError('every Dirichlet concentration must be > 0')

    @classmethod
    def uniform(cls, num_states: int, num_actions: int, prior_value: float) -> 'DirichletPosterior':
        return cls(np.full((num_states, num_actions, num_states), float(prior_value)), prior_value)

    def mean(self) -> np.ndarray:
        return self.concentration / self.concentration.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PsrlConfig:
    prior_value: float = Config.DEFAULT_PRIOR_VALUE
    alpha_floor: float = Config.DEFAULT_ALPHA_FLOOR
    opportunistic: bool = False

    def __post_init__(self):
        if self.prior_value <= 0:
            raise ValueError(f'prior_value must be > 0, got {self.prior_value}')
        if self.alpha_floor <= 0:
            raise ValueError(f'alpha_floor must be > 0, got {self.alpha_floor}')


class EviResult(NamedTuple):
    transitions: np.ndarray
    policy: Policy
    values: ValueTable


def empirical_transitions(counts: TransitionCounts) -> np.ndarray:
    """N(s,a,s')/N(s,a); unvisited pairs get a uniform row."""
    num_states = counts.triple_counts.shape[-1]
    pair = counts.pair_counts[:, :, np.newaxis]
    uniform = np.full(counts.triple_counts.shape, 1.0 / num_states)
    return np.where(pair > 0, counts.triple_counts / np.maximum(pair, 1), uniform)


def confidence_width(n, num_states: int, num_actions: int, t_k: float, delta: float,
                     l_tilde: float, scale: float = 1.0):
    """
    L1 radius of the plausible transition set for one or many (s, a) pairs.

    ``t_k`` is floored at 1 inside the logarithm so the first episode is defined.
    """
    log_term = np.log(2.0 * num_states * num_actions * max(t_k, 1) / delta)
    width = scale * np.sqrt(2.0 * num_states * (1.0 - l_tilde) * log_term / np.maximum(1, n))
    return width if np.ndim(width) else float(width)


def descending_value_order(values: np.ndarray) -> np.ndarray:
    """States sorted by value, highest first; ties go to the lowest index."""
    return np.lexsort((np.arange(len(values)), -values))


def optimistic_rows(p_hat: np.ndarray, widths: np.ndarray, order: np.ndarray) -> np.ndarray:
    """
    Most optimistic rows inside the L1 balls, for a batch of rows.

    The best state (``order[0]``) gains up to d/2 of mass, which is then taken
    from the other states in ascending value order until each row sums to 1.

    Args:
        p_hat: (N, S) rows on the simplex
        widths: (N,) L1 radii
        order: Permutation of states, descending value

    Returns:
        (N, S) optimistic rows
    """
    p_tilde = p_hat.copy()
    best = order[0]
    p_tilde[:, best] = np.minimum(1.0, p_hat[:, best] + widths / 2.0)

    ascending = order[:0:-1]
    excess = np.maximum(p_tilde.sum(axis=1) - 1.0, 0.0)[:, np.newaxis]
    rest = p_tilde[:, ascending]
    # a state keeps whatever its cumulative mass exceeds the excess by
    p_tilde[:, ascending] = np.clip(np.cumsum(rest, axis=1) - excess, 0.0, rest)
    return p_tilde


def inner_max_probability(p_hat_row: np.ndarray, d: float, order: np.ndarray) -> np.ndarray:
    """Single-row form of :func:`optimistic_rows`."""
    return optimistic_rows(np.asarray(p_hat_row, dtype=float)[np.newaxis, :],
                           np.array([d], dtype=float), np.asarray(order))[0]


def extended_value_iteration(p_hat: np.ndarray, widths: np.ndarray, rewards: np.ndarray,
                             horizon: int, discount: float = 1.0) -> EviResult:
    """
    Finite-horizon extended value iteration.

    Backward pass over h = H..1; at each step the states are re-sorted by
    V_{h+1} and every (s, a) row is replaced by its optimistic version before
    the Bellman backup. The optimistic tensor returned is the one built for the
    first step.
    """
    num_states, num_actions = rewards.shape
    flat_p = p_hat.reshape(num_states * num_actions, num_states)
    flat_d = np.asarray(widths, dtype=float).reshape(-1)

    values = np.zeros((num_states, horizon + 1))
    actions = np.zeros((num_states, horizon), dtype=int)
    rows = np.arange(num_states)
    p_tilde = flat_p

    for h in range(horizon - 1, -1, -1):
        order = descending_value_order(values[:, h + 1])
        p_tilde = optimistic_rows(flat_p, flat_d, order)
        q = rewards + discount * (p_tilde @ values[:, h + 1]).reshape(num_states, num_actions)
        actions[:, h] = np.argmax(q, axis=1)
        values[:, h] = q[rows, actions[:, h]]

    return EviResult(p_tilde.reshape(num_states, num_actions, num_states),
                     Policy(actions), ValueTable(values))


def opp_ucrl2_plan(counts: TransitionCounts, l_tilde: float, k: int,
                   shape: MdpShape, config: OfuConfig) -> Policy:
    """
    Optimistic policy for episode k.

    The baseline (``config.opportunistic`` false) ignores ``l_tilde`` and uses
    the plain UCRL2 width.
    """
    t_k = shape.horizon * (k - 1)
    effective = l_tilde if config.opportunistic else 0.0
    p_hat = empirical_transitions(counts)
    widths = confidence_width(counts.pair_counts, shape.num_states, shape.num_actions,
                              t_k, config.delta, effective, config.scale)
    logger.debug(f'episode {k}: widest confidence radius {widths.max():.4g} at L~={effective:.3g}')
    return extended_value_iteration(p_hat, widths, shape.rewards, shape.horizon,
                                     shape.discount).policy


def record_trajectory(counts: TransitionCounts, trajectory: Trajectory) -> TransitionCounts:
    """Counts after adding every (s, a, s') of the trajectory."""
    pair = counts.pair_counts.copy()
    triple = counts.triple_counts.copy()
    for t in trajectory:
        pair[t.state, t.action] += 1
        triple[t.state, t.action, t.next_state] += 1
    return TransitionCounts(pair, triple)


def sample_transitions(concentration: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draw one transition tensor, each row from Dirichlet(concentration[s, a]).

    Rows are built from Gamma draws taken in C order (ascending s' within each
    row). A row whose draws all underflow to zero becomes a point mass picked
    in proportion to its concentration.
    """
    draws = rng.gamma(concentration)
    totals = draws.sum(axis=-1, keepdims=True)
    degenerate = totals[..., 0] == 0.0
    if np.any(degenerate):
        for s, a in np.argwhere(degenerate):
            alpha = concentration[s, a]
            draws[s, a, rng.choice(alpha.size, p=alpha / alpha.sum())] = 1.0
        totals = draws.sum(axis=-1, keepdims=True)
    return draws / totals


def opp_psrl_plan(posterior: DirichletPosterior, l_tilde: float, config: PsrlConfig,
                  shape: MdpShape, rng: np.random.Generator) -> Policy:
    """
    Sample an MDP from the (possibly rescaled) posterior and act optimally for it.

    Scaling by ``l_tilde`` is transient: the stored posterior is not modified.
    """
    alpha = posterior.concentration
    if config.opportunistic:
        alpha = np.maximum(l_tilde * alpha, config.alpha_floor)
        logger.debug(f'posterior scaled by L~={l_tilde:.3g}, total concentration {alpha.sum():.4g}')
    sampled = sample_transitions(alpha, rng)
    _, policy = backward_induction(sampled, shape.rewards, shape.horizon, shape.discount)
    return policy


def posterior_update(posterior: DirichletPosterior, trajectory: Trajectory) -> DirichletPosterior:
    """Conjugate update: one unit of concentration per observed transition."""
    concentration = posterior.concentration.copy()
    for t in trajectory:
        concentration[t.state, t.action, t.next_state] += 1.0
    return DirichletPosterior(concentration, posterior.prior_value)


class EpisodicAgent(ABC):
    """Observe L~_k, emit a policy, ingest the trajectory."""

    def __init__(self, shape: MdpShape, name: str):
        self.shape = shape
        self.name = name

    @abstractmethod
    def plan(self, k: int, l_tilde: float, rng: Optional[np.random.Generator] = None) -> Policy:
        """Policy for episode k (1-based)."""

    @abstractmethod
    def observe(self, trajectory: Trajectory):
        """Ingest the trajectory of the episode just played."""

    def __repr__(self):
        return f'<{type(self).__name__} {self.name}>'


class Ucrl2Agent(EpisodicAgent):

    def __init__(self, shape: MdpShape, config: OfuConfig, name: str = ''):
        super().__init__(shape, name or ('opp_ucrl2' if config.opportunistic else 'ucrl2'))
        self.config = config
        self.counts = TransitionCounts.zeros(shape.num_states, shape.num_actions)

    def plan(self, k: int, l_tilde: float, rng: Optional[np.random.Generator] = None) -> Policy:
        return opp_ucrl2_plan(self.counts, l_tilde, k, self.shape, self.config)

    def observe(self, trajectory: Trajectory):
        self.counts = record_trajectory(self.counts, trajectory)


class PsrlAgent(EpisodicAgent):

    def __init__(self, shape: MdpShape, config: PsrlConfig, name: str = ''):
        super().__init__(shape, name or ('opp_psrl' if config.opportunistic else 'psrl'))
        self.config = config
        self.posterior = DirichletPosterior.uniform(shape.num_states, shape.num_actions,
                                                    config.prior_value)

    def plan(self, k: int, l_tilde: float, rng: Optional[np.random.Generator] = None) -> Policy:
        if rng is None:
            raise ValueError('posterior sampling needs a random stream')
        return opp_psrl_plan(self.posterior, l_tilde, self.config, self.shape, rng)

    def observe(self, trajectory: Trajectory):
        self.posterior = posterior_update(self.posterior, trajectory)


def make_agent(settings: AgentSettings, shape: MdpShape) -> EpisodicAgent:
    """Build the agent named by ``settings.kind``."""
    if settings.family == 'ucrl2':
        config = OfuConfig(delta=settings.delta, scale=settings.scale,
                           opportunistic=settings.opportunistic)
        return Ucrl2Agent(shape, config, name=settings.kind)
    config = PsrlConfig(prior_value=settings.prior_value, alpha_floor=settings.alpha_floor,
                        opportunistic=settings.opportunistic)
    return PsrlAgent(shape, config, name=settings.kind)
