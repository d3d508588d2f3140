"""Benchmark environments: DoubleChain, GridWorld, random MDPs, initial-state reduction."""
from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .mdp import TabularMDP

LEFT, RIGHT = 0, 1
# GridWorld action order and (d_row, d_col) moves.
GRID_MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))
GRID_ACTION_NAMES = ("left", "right", "up", "down")


def make_double_chain(L: int, H: int, slip: float = 0.1, gamma: float = 1.0) -> TabularMDP:
    """Chain of ``L`` states starting in the middle, reward 1 at the right end.

    Action 0 moves left and action 1 moves right; with probability ``slip`` the
    agent moves the other way. Moves past either end leave the agent in place.
    """
    if L < 3 or L % 2 == 0:
        raise ParameterError(f"chain length must be odd and at least 3, got {L}")
    if H < 1:
        raise ParameterError("horizon must be positive")
    if not 0.0 <= slip < 0.5:
        raise ParameterError(f"slip must lie in [0, 0.5), got {slip}")
    kernel = np.zeros((L, 2, L))
    for s in range(L):
        left, right = max(s - 1, 0), min(s + 1, L - 1)
        kernel[s, LEFT, left] += 1.0 - slip
        kernel[s, LEFT, right] += slip
        kernel[s, RIGHT, right] += 1.0 - slip
        kernel[s, RIGHT, left] += slip
    reward = np.zeros((L, 2))
    reward[L - 1, :] = 1.0
    return TabularMDP(
        P=np.broadcast_to(kernel, (H, L, 2, L)),
        r=np.broadcast_to(reward, (H, L, 2)),
        gamma=gamma,
        initial_state=(L - 1) // 2,
        stationary=True,
    )


def grid_index(cell: tuple[int, int], side: int) -> int:
    row, col = cell
    return row * side + col


def grid_cell(state: int, side: int) -> tuple[int, int]:
    return divmod(state, side)


def make_gridworld(
    side: int,
    H: int,
    slip: float = 0.05,
    reward_cell: tuple[int, int] = (16, 16),
    start_cell: tuple[int, int] | None = None,
    gamma: float = 1.0,
) -> TabularMDP:
    """Square grid with four moves; a slip sends the agent in one of the three other directions."""
    if side < 1 or H < 1:
        raise ParameterError("side and horizon must be positive")
    if not 0.0 <= slip <= 1.0:
        raise ParameterError(f"slip must lie in [0, 1], got {slip}")
    if start_cell is None:
        start_cell = (side // 2, side // 2)
    for name, cell in (("reward_cell", reward_cell), ("start_cell", start_cell)):
        if not (0 <= cell[0] < side and 0 <= cell[1] < side):
            raise ParameterError(f"{name} {tuple(cell)} lies outside the {side}x{side} grid")
    S = side * side
    kernel = np.zeros((S, 4, S))
    for s in range(S):
        row, col = grid_cell(s, side)
        targets = []
        for dr, dc in GRID_MOVES:
            r2 = min(max(row + dr, 0), side - 1)
            c2 = min(max(col + dc, 0), side - 1)
            targets.append(grid_index((r2, c2), side))
        for a in range(4):
            for b, target in enumerate(targets):
                kernel[s, a, target] += (1.0 - slip) if a == b else slip / 3.0
    reward = np.zeros((S, 4))
    reward[grid_index(reward_cell, side), :] = 1.0
    return TabularMDP(
        P=np.broadcast_to(kernel, (H, S, 4, S)),
        r=np.broadcast_to(reward, (H, S, 4)),
        gamma=gamma,
        initial_state=grid_index(start_cell, side),
        stationary=True,
    )


def add_initial_state(mdp: TabularMDP, p0: np.ndarray) -> TabularMDP:
    """Fold an initial-state distribution into a fresh start state.

    The new state has index ``S`` and every action from it draws the original
    first state from ``p0``. The returned MDP has horizon ``H + 1``, a zero reward
    at its first step and an undiscounted first transition, so values at the new
    state equal ``p0``-averaged values of the original MDP.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (mdp.S,) or np.any(p0 < 0.0) or abs(p0.sum() - 1.0) > 1e-12:
        raise ParameterError("p0 must be a probability vector over the original states")
    H, S, A = mdp.H, mdp.S, mdp.A
    P = np.zeros((H + 1, S + 1, A, S + 1))
    P[0, :, :, :S] = p0
    P[1:, :S, :, :S] = mdp.P
    P[1:, S, :, S] = 1.0
    r = np.zeros((H + 1, S + 1, A))
    r[1:, :S] = mdp.r
    return TabularMDP(
        P=P,
        r=r,
        gamma=mdp.gamma,
        initial_state=S,
        stationary=False,
        step_discount=np.concatenate(([1.0], mdp.step_discount)),
    )


def lift_policy(policy: np.ndarray) -> np.ndarray:
    """Extend a policy of the original MDP to the MDP built by :func:`add_initial_state`."""
    policy = np.asarray(policy, dtype=np.int64)
    H, S = policy.shape
    lifted = np.zeros((H + 1, S + 1), dtype=np.int64)
    lifted[1:, :S] = policy
    return lifted


def make_random_mdp(
    S: int,
    A: int,
    H: int,
    gamma: float,
    rng: np.random.Generator,
    stationary: bool = False,
) -> TabularMDP:
    """Random MDP: exponential weights normalised per row, uniform rewards, start state 0."""
    if min(S, A, H) < 1:
        raise ParameterError("S, A and H must be positive")
    shape = (1 if stationary else H, S, A, S)
    weights = rng.exponential(size=shape)
    P = weights / weights.sum(axis=-1, keepdims=True)
    if stationary:
        P = np.broadcast_to(P, (H, S, A, S))
    r = rng.random((H, S, A))
    return TabularMDP(P=P, r=r, gamma=gamma, initial_state=0, stationary=stationary)


def random_reward(H: int, S: int, A: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((H, S, A))
