"""
Benchmark environments as FiniteHorizonMdp values: River Swim, Cliff Walking
and a non-slippery Frozen Lake.
"""
from enum import Enum

import numpy as np

from mdp import FiniteHorizonMdp, build_mdp


class EnvironmentId(str, Enum):
    RIVER_SWIM = 'river_swim'
    CLIFF_WALKING = 'cliff_walking'
    FROZEN_LAKE = 'frozen_lake'


# River Swim
RIVER_SWIM_STATES = 6
RIVER_SWIM_HORIZON = 15
LEFT, RIGHT = 0, 1
# (move right, stay, move left) for a RIGHT attempt
RIVER_SWIM_RIGHT_PROBS = {
    'interior': (0.35, 0.60, 0.05),
    'leftmost': (0.40, 0.60, 0.0),
    'rightmost': (0.0, 0.60, 0.40),
}
RIVER_SWIM_SMALL_REWARD = 0.005
RIVER_SWIM_LARGE_REWARD = 1.0

# Grid worlds share the action encoding
UP, DOWN, GRID_RIGHT, GRID_LEFT = 0, 1, 2, 3
GRID_MOVES = {
    UP: (-1, 0),
    DOWN: (1, 0),
    GRID_RIGHT: (0, 1),
    GRID_LEFT: (0, -1),
}

CLIFF_ROWS, CLIFF_COLS = 4, 12
CLIFF_HORIZON = 50
CLIFF_STEP_REWARD = -1.0
CLIFF_FALL_REWARD = -100.0

FROZEN_LAKE_MAP = (
    'SFFF',
    'FHFH',
    'FFFH',
    'HFFG',
)
FROZEN_LAKE_HORIZON = 20
FROZEN_LAKE_DISCOUNT = 0.95
FROZEN_LAKE_GOAL_REWARD = 1.0
FROZEN_LAKE_HOLE_REWARD = -1.0


def cell_index(row: int, col: int, num_cols: int) -> int:
    """Row-major state index of a grid cell."""
    return row * num_cols + col


def _move(row: int, col: int, action: int, num_rows: int, num_cols: int):
    """Deterministic grid move; stepping off the grid leaves the agent in place."""
    d_row, d_col = GRID_MOVES[action]
    new_row, new_col = row + d_row, col + d_col
    if not (0 <= new_row < num_rows and 0 <= new_col < num_cols):
        return row, col
    return new_row, new_col


def river_swim() -> FiniteHorizonMdp:
    """Six-state chain: LEFT always succeeds, RIGHT fights the current."""
    n = RIVER_SWIM_STATES
    transitions = np.zeros((n, 2, n))
    rewards = np.zeros((n, 2))

    for s in range(n):
        transitions[s, LEFT, max(s - 1, 0)] = 1.0

        if s == 0:
            p_right, p_stay, p_left = RIVER_SWIM_RIGHT_PROBS['leftmost']
        elif s == n - 1:
            p_right, p_stay, p_left = RIVER_SWIM_RIGHT_PROBS['rightmost']
        else:
            p_right, p_stay, p_left = RIVER_SWIM_RIGHT_PROBS['interior']
        transitions[s, RIGHT, min(s + 1, n - 1)] += p_right
        transitions[s, RIGHT, s] += p_stay
        transitions[s, RIGHT, max(s - 1, 0)] += p_left

    rewards[0, LEFT] = RIVER_SWIM_SMALL_REWARD
    rewards[n - 1, RIGHT] = RIVER_SWIM_LARGE_REWARD

    return build_mdp(transitions, rewards, horizon=RIVER_SWIM_HORIZON,
                     discount=1.0, start_state=0, name=EnvironmentId.RIVER_SWIM.value)


CLIFF_START = cell_index(CLIFF_ROWS - 1, 0, CLIFF_COLS)
CLIFF_GOAL = cell_index(CLIFF_ROWS - 1, CLIFF_COLS - 1, CLIFF_COLS)
CLIFF_CELLS = frozenset(cell_index(CLIFF_ROWS - 1, col, CLIFF_COLS)
                        for col in range(1, CLIFF_COLS - 1))


def cliff_walking() -> FiniteHorizonMdp:
    """4x12 grid; entering the cliff costs -100 and sends the agent back to start."""
    n = CLIFF_ROWS * CLIFF_COLS
    transitions = np.zeros((n, len(GRID_MOVES), n))
    rewards = np.zeros((n, len(GRID_MOVES)))

    for row in range(CLIFF_ROWS):
        for col in range(CLIFF_COLS):
            s = cell_index(row, col, CLIFF_COLS)
            for action in GRID_MOVES:
                if s == CLIFF_GOAL:
                    transitions[s, action, s] = 1.0
                    continue
                landed = cell_index(*_move(row, col, action, CLIFF_ROWS, CLIFF_COLS), CLIFF_COLS)
                if landed in CLIFF_CELLS:
                    transitions[s, action, CLIFF_START] = 1.0
                    rewards[s, action] = CLIFF_FALL_REWARD
                else:
                    transitions[s, action, landed] = 1.0
                    rewards[s, action] = CLIFF_STEP_REWARD

    return build_mdp(transitions, rewards, horizon=CLIFF_HORIZON, discount=1.0,
                     start_state=CLIFF_START, terminal_states=[CLIFF_GOAL],
                     name=EnvironmentId.CLIFF_WALKING.value)


def frozen_lake() -> FiniteHorizonMdp:
    """Deterministic 4x4 Frozen Lake; holes and the goal are absorbing."""
    num_rows, num_cols = len(FROZEN_LAKE_MAP), len(FROZEN_LAKE_MAP[0])
    n = num_rows * num_cols
    transitions = np.zeros((n, len(GRID_MOVES), n))
    rewards = np.zeros((n, len(GRID_MOVES)))

    tiles = ''.join(FROZEN_LAKE_MAP)
    terminals = [s for s, tile in enumerate(tiles) if tile in 'HG']

    for row in range(num_rows):
        for col in range(num_cols):
            s = cell_index(row, col, num_cols)
            for action in GRID_MOVES:
                if s in terminals:
                    transitions[s, action, s] = 1.0
                    continue
                landed = cell_index(*_move(row, col, action, num_rows, num_cols), num_cols)
                transitions[s, action, landed] = 1.0
                # reward belongs to the move that enters the cell
                if tiles[landed] == 'G':
                    rewards[s, action] = FROZEN_LAKE_GOAL_REWARD
                elif tiles[landed] == 'H':
                    rewards[s, action] = FROZEN_LAKE_HOLE_REWARD

    return build_mdp(transitions, rewards, horizon=FROZEN_LAKE_HORIZON,
                     discount=FROZEN_LAKE_DISCOUNT, start_state=tiles.index('S'),
                     terminal_states=terminals, name=EnvironmentId.FROZEN_LAKE.value)


ENVIRONMENTS = {
    EnvironmentId.RIVER_SWIM: river_swim,
    EnvironmentId.CLIFF_WALKING: cliff_walking,
    EnvironmentId.FROZEN_LAKE: frozen_lake,
}


def make_environment(name) -> FiniteHorizonMdp:
    """Build an environment from its EnvironmentId or string name."""
    return ENVIRONMENTS[EnvironmentId(name)]()
