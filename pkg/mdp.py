"""
Finite-horizon tabular MDPs: model validation, exact dynamic-programming
oracles and stochastic episode simulation.
"""
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, NamedTuple, Optional, Tuple

import numpy as np

ROW_SUM_TOLERANCE = 1e-9


class MdpValidationError(ValueError):
    """Raised when raw tables do not describe a valid finite-horizon MDP."""


@dataclass(frozen=True, eq=False)
class FiniteHorizonMdp:
    """Ground-truth episodic model.

    ``transitions`` is indexed (s, a, s') and ``rewards`` (s, a). Arrays are
    made read-only by :func:`build_mdp`, so instances can be shared between
    concurrent runs.
    """
    num_states: int
    num_actions: int
    horizon: int
    transitions: np.ndarray
    rewards: np.ndarray
    discount: float = 1.0
    start_state: int = 0
    terminal_states: FrozenSet[int] = field(default_factory=frozenset)
    name: str = ''

    def __repr__(self):
        return (f'<FiniteHorizonMdp {self.name or "unnamed"}: S={self.num_states} '
                f'A={self.num_actions} H={self.horizon} gamma={self.discount}>')


@dataclass(frozen=True)
class Policy:
    """Deterministic nonstationary policy; ``actions[s, h]`` for steps h = 0..H-1."""
    actions: np.ndarray

    def __post_init__(self):
        actions = np.asarray(self.actions)
        if actions.ndim != 2 or not np.issubdtype(actions.dtype, np.integer):
            raise MdpValidationError(
                f'policy actions must be a 2-d integer array, got {actions.dtype} {actions.shape}')
        if actions.size and actions.min() < 0:
            raise MdpValidationError(f'negative action index {int(actions.min())} in policy')
        object.__setattr__(self, 'actions', actions)

    def action(self, state: int, step: int) -> int:
        return int(self.actions[state, step])

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)


@dataclass(frozen=True, eq=False)
class ValueTable:
    """``values[s, h]`` for h = 0..H; the last column is identically zero."""
    values: np.ndarray

    def initial(self, state: int) -> float:
        return float(self.values[state, 0])


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class Trajectory:
    """Exactly H chained transitions starting from the model's start state."""
    steps: Tuple[Transition, ...]

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward for t in self.steps))


def build_mdp(transitions,
              rewards,
              horizon: int,
              discount: float = 1.0,
              start_state: int = 0,
              terminal_states: Iterable[int] = (),
              name: str = '') -> FiniteHorizonMdp:
    """
    Validate raw tables and build an immutable model.

    Rows within ``ROW_SUM_TOLERANCE`` of 1 are renormalized; anything further
    off is rejected.

    Args:
        transitions: Array-like of shape (S, A, S)
        rewards: Array-like of shape (S, A)
        horizon: Episode length H
        discount: Discount factor in (0, 1]
        start_state: State every episode starts from
        terminal_states: Absorbing zero-reward states
        name: Optional label

    Returns:
        Validated FiniteHorizonMdp

    Raises:
        MdpValidationError: On any dimension, simplex or terminal-state violation
    """
    p = np.array(transitions, dtype=float)
    r = np.array(rewards, dtype=float)

    if p.ndim != 3 or p.shape[0] != p.shape[2]:
        raise MdpValidationError(f'dimension mismatch: transitions must be (S, A, S), got {p.shape}')
    num_states, num_actions = p.shape[0], p.shape[1]
    if num_states < 1 or num_actions < 1:
        raise MdpValidationError('dimension mismatch: need at least one state and one action')
    if r.shape != (num_states, num_actions):
        raise MdpValidationError(
            f'dimension mismatch: rewards must be {(num_states, num_actions)}, got {r.shape}')
    if int(horizon) != horizon or horizon < 1:
        raise MdpValidationError(f'horizon must be a positive integer, got {horizon}')
    if not 0.0 < discount <= 1.0:
        raise MdpValidationError(f'discount must lie in (0, 1], got {discount}')
    if not 0 <= start_state < num_states:
        raise MdpValidationError(f'start_state {start_state} out of range for S={num_states}')
    if not np.all(np.isfinite(p)) or not np.all(np.isfinite(r)):
        raise MdpValidationError('tables must be finite')
    if np.any(p < 0):
        s, a, _ = np.argwhere(p < 0)[0]
        raise MdpValidationError(f'negative transition probability at (s={s}, a={a})')

    sums = p.sum(axis=2)
    off = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
    if np.any(off):
        s, a = np.argwhere(off)[0]
        raise MdpValidationError(f'row sum {sums[s, a]:.12g} != 1 at (s={s}, a={a})')
    p /= sums[:, :, np.newaxis]

    terminals = frozenset(int(s) for s in terminal_states)
    for s in terminals:
        if not 0 <= s < num_states:
            raise MdpValidationError(f'terminal state {s} out of range for S={num_states}')
        if np.any(p[s, :, s] != 1.0) or np.any(r[s] != 0.0):
            raise MdpValidationError(
                f'non-absorbing/ nonzero-reward terminal state {s}')

    p.setflags(write=False)
    r.setflags(write=False)
    return FiniteHorizonMdp(
        num_states=num_states,
        num_actions=num_actions,
        horizon=int(horizon),
        transitions=p,
        rewards=r,
        discount=float(discount),
        start_state=int(start_state),
        terminal_states=terminals,
        name=name,
    )


def backward_induction(transitions: np.ndarray,
                       rewards: np.ndarray,
                       horizon: int,
                       discount: float = 1.0) -> Tuple[ValueTable, Policy]:
    """Optimal values and greedy policy for explicit tables (lowest action wins ties)."""
    num_states = rewards.shape[0]
    values = np.zeros((num_states, horizon + 1))
    actions = np.zeros((num_states, horizon), dtype=int)
    rows = np.arange(num_states)

    for h in range(horizon - 1, -1, -1):
        q = rewards + discount * (transitions @ values[:, h + 1])
        actions[:, h] = np.argmax(q, axis=1)
        values[:, h] = q[rows, actions[:, h]]

    return ValueTable(values), Policy(actions)


def optimal_values(mdp: FiniteHorizonMdp) -> Tuple[ValueTable, Policy]:
    """V* and a greedy optimal policy by backward induction."""
    return backward_induction(mdp.transitions, mdp.rewards, mdp.horizon, mdp.discount)


def check_policy(mdp: FiniteHorizonMdp, policy: Policy):
    """Raise :class:`MdpValidationError` unless ``policy`` covers every (s, h) of ``mdp``."""
    expected = (mdp.num_states, mdp.horizon)
    if policy.actions.shape != expected:
        raise MdpValidationError(f'policy shape {policy.actions.shape} != {expected}')
    if policy.actions.size and policy.actions.max() >= mdp.num_actions:
        raise MdpValidationError(
            f'action index {int(policy.actions.max())} out of range for {mdp.num_actions} actions')


def evaluate_policy(mdp: FiniteHorizonMdp, policy: Policy) -> ValueTable:
    """Exact V^pi by backward induction, sharing the Q-backup of :func:`optimal_values`."""
    check_policy(mdp, policy)
    num_states = mdp.num_states
    values = np.zeros((num_states, mdp.horizon + 1))
    rows = np.arange(num_states)

    for h in range(mdp.horizon - 1, -1, -1):
        q = mdp.rewards + mdp.discount * (mdp.transitions @ values[:, h + 1])
        values[:, h] = q[rows, policy.actions[:, h]]

    return ValueTable(values)


def step(mdp: FiniteHorizonMdp, state: int, action: int,
         rng: np.random.Generator) -> Tuple[int, float]:
    """
    Sample one transition.

    The next state is drawn by inverse-CDF sampling over P(.|s, a) in
    ascending state order, consuming exactly one uniform from ``rng``.
    """
    row = mdp.transitions[state, action]
    cdf = np.cumsum(row)
    u = rng.random()
    next_state = int(np.searchsorted(cdf, u, side='right'))
    if next_state >= mdp.num_states:
        # u landed past a cdf that rounds just below 1
        next_state = int(np.flatnonzero(row)[-1])
    return next_state, float(mdp.rewards[state, action])


def run_episode(mdp: FiniteHorizonMdp, policy: Policy,
                rng: np.random.Generator,
                start_state: Optional[int] = None) -> Trajectory:
    """Roll out exactly H steps; terminal states keep self-looping with zero reward."""
    check_policy(mdp, policy)
    state = mdp.start_state if start_state is None else start_state
    steps = []
    for h in range(mdp.horizon):
        action = policy.action(state, h)
        next_state, reward = step(mdp, state, action, rng)
        steps.append(Transition(state, action, reward, next_state))
        state = next_state
    return Trajectory(tuple(steps))


def rollout_deterministic(mdp: FiniteHorizonMdp, policy: Policy) -> Trajectory:
    """Follow the most likely successor at every step (exact for deterministic models)."""
    state = mdp.start_state
    steps = []
    for h in range(mdp.horizon):
        action = policy.action(state, h)
        next_state = int(np.argmax(mdp.transitions[state, action]))
        steps.append(Transition(state, action, float(mdp.rewards[state, action]), next_state))
        state = next_state
    return Trajectory(tuple(steps))
