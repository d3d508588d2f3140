"""Finite-horizon tabular MDPs: exact planning, evaluation, simulation, occupancies.

Steps are 0-indexed internally: step ``h`` runs over ``0..H-1`` and layer ``H`` of
every value table is the all-zero terminal layer. Policies are integer arrays of
shape ``(H, S)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionError, ParameterError

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Episodic MDP with per-step kernels ``P[h, s, a, s']`` and rewards ``r[h, s, a]``.

    ``step_discount[h]`` multiplies the step ``h+1`` value in the Bellman backup of
    step ``h``. It defaults to ``gamma`` everywhere; the initial-state reduction is
    the only constructor that uses a non-constant sequence.
    """

    P: np.ndarray
    r: np.ndarray
    gamma: float = 1.0
    initial_state: int = 0
    stationary: bool = False
    step_discount: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        P = np.array(self.P, dtype=np.float64)
        r = np.array(self.r, dtype=np.float64)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise DimensionError(f"transitions must have shape (H, S, A, S), got {P.shape}")
        H, S, A, _ = P.shape
        if H < 1 or S < 1 or A < 1:
            raise DimensionError(f"empty MDP dimensions {P.shape}")
        if r.shape != (H, S, A):
            raise DimensionError(f"rewards must have shape {(H, S, A)}, got {r.shape}")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 <= self.initial_state < S:
            raise ParameterError(f"initial state {self.initial_state} outside [0, {S})")
        if np.any(P < 0.0) or not np.all(np.isfinite(P)):
            raise ParameterError("transition probabilities must be finite and non-negative")
        if np.max(np.abs(P.sum(axis=-1) - 1.0)) > ROW_SUM_TOL:
            raise ParameterError("transition rows must sum to 1")
        if np.any(r < 0.0) or np.any(r > 1.0):
            raise ParameterError("rewards must lie in [0, 1]")
        if self.stationary and not all(np.array_equal(P[0], P[h]) for h in range(1, H)):
            raise ParameterError("stationary MDP must use the same kernel at every step")
        if self.step_discount is None:
            d = np.full(H, float(self.gamma))
        else:
            d = np.array(self.step_discount, dtype=np.float64)
            if d.shape != (H,) or np.any(d <= 0.0) or np.any(d > 1.0):
                raise ParameterError("step_discount must be H factors in (0, 1]")
        for arr in (P, r, d):
            arr.flags.writeable = False
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "step_discount", d)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def H(self) -> int:
        return self.P.shape[0]

    @property
    def S(self) -> int:
        return self.P.shape[1]

    @property
    def A(self) -> int:
        return self.P.shape[2]

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.P, axis=-1)
        c[..., -1] = 1.0
        c.flags.writeable = False
        return c

    @cached_property
    def ceilings(self) -> np.ndarray:
        """Largest attainable value at each step, shape ``(H+1,)``; last entry is 0."""
        return value_ceilings(self.step_discount)


@dataclass(frozen=True)
class ValueTable:
    V: np.ndarray  # (H+1, S)
    Q: np.ndarray  # (H+1, S, A)

    def initial_value(self, state: int) -> float:
        return float(self.V[0, state])


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (H+1,) s_1 .. s_{H+1}
    actions: np.ndarray  # (H,)
    rewards: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.actions)


def sigma(h: int, gamma: float) -> float:
    """Discounted horizon mass ``1 + gamma + ... + gamma**(h-1)``."""
    return float(sum(gamma**i for i in range(h)))


def value_ceilings(step_discount: np.ndarray) -> np.ndarray:
    d = np.asarray(step_discount, dtype=np.float64)
    H = len(d)
    c = np.zeros(H + 1)
    for h in range(H - 1, -1, -1):
        c[h] = 1.0 + d[h] * c[h + 1]
    return c


def _check_reward(mdp: TabularMDP, reward: np.ndarray | None) -> np.ndarray:
    if reward is None:
        return mdp.r
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (mdp.H, mdp.S, mdp.A):
        raise DimensionError(f"reward must have shape {(mdp.H, mdp.S, mdp.A)}, got {reward.shape}")
    if np.any(reward < 0.0) or np.any(reward > 1.0):
        raise ParameterError("reward entries must lie in [0, 1]")
    return reward


def check_policy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy)
    if policy.shape != (mdp.H, mdp.S):
        raise DimensionError(f"policy must have shape {(mdp.H, mdp.S)}, got {policy.shape}")
    if not np.issubdtype(policy.dtype, np.integer):
        raise DimensionError("policy entries must be integer action indices")
    if np.any(policy < 0) or np.any(policy >= mdp.A):
        raise ParameterError(f"policy actions must lie in [0, {mdp.A})")
    return policy.astype(np.int64, copy=False)


def eval_policy(mdp: TabularMDP, policy: np.ndarray, reward: np.ndarray | None = None) -> ValueTable:
    """Backward induction for the Q and V functions of a deterministic policy."""
    policy = check_policy(mdp, policy)
    return eval_policy_kernel(mdp.P, _check_reward(mdp, reward), mdp.step_discount, policy)


def plan_optimal(mdp: TabularMDP, reward: np.ndarray | None = None) -> tuple[np.ndarray, ValueTable]:
    """Optimal policy by backward induction; ties go to the lowest action index."""
    return plan_optimal_kernel(mdp.P, _check_reward(mdp, reward), mdp.step_discount)


def plan_optimal_kernel(
    P: np.ndarray, reward: np.ndarray, step_discount: np.ndarray
) -> tuple[np.ndarray, ValueTable]:
    """Same as :func:`plan_optimal` on raw arrays (used for empirical kernels)."""
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H + 1, S, A))
    policy = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = reward[h] + step_discount[h] * (P[h] @ V[h + 1])
        policy[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return policy, ValueTable(V, Q)


def eval_policy_kernel(
    P: np.ndarray, reward: np.ndarray, step_discount: np.ndarray, policy: np.ndarray
) -> ValueTable:
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H + 1, S, A))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        Q[h] = reward[h] + step_discount[h] * (P[h] @ V[h + 1])
        V[h] = Q[h][idx, policy[h]]
    return ValueTable(V, Q)


def sample_episode(mdp: TabularMDP, policy: np.ndarray, rng: np.random.Generator) -> Trajectory:
    """Roll out one episode from the initial state; rewards are the MDP's own."""
    policy = check_policy(mdp, policy)
    H = mdp.H
    u = rng.random(H)
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    s = mdp.initial_state
    for h in range(H):
        a = policy[h, s]
        states[h] = s
        actions[h] = a
        rewards[h] = mdp.r[h, s, a]
        s = min(int(np.searchsorted(mdp.cdf[h, s, a], u[h], side="right")), mdp.S - 1)
    states[H] = s
    return Trajectory(states, actions, rewards)


def occupancy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """State-action reach probabilities ``p_h(s, a)``, shape ``(H, S, A)``."""
    policy = check_policy(mdp, policy)
    H, S, A = mdp.H, mdp.S, mdp.A
    occ = np.zeros((H, S, A))
    state_dist = np.zeros(S)
    state_dist[mdp.initial_state] = 1.0
    idx = np.arange(S)
    for h in range(H):
        occ[h, idx, policy[h]] = state_dist
        state_dist = np.einsum("sa,sat->t", occ[h], mdp.P[h])
    return occ


def accumulate_pseudo_counts(
    occupancies: Sequence[np.ndarray], shape: tuple[int, int, int] | None = None
) -> np.ndarray:
    """Pseudo-counts: the sum of per-episode occupancy tables."""
    if len(occupancies) == 0:
        if shape is None:
            raise DimensionError("shape is required for an empty occupancy history")
        return np.zeros(shape)
    total = np.zeros_like(np.asarray(occupancies[0], dtype=np.float64))
    for occ in occupancies:
        occ = np.asarray(occ, dtype=np.float64)
        if occ.shape != total.shape:
            raise DimensionError("occupancy tables must share one shape")
        total += occ
    return total


def discounted_weights(mdp: TabularMDP) -> np.ndarray:
    """Weight of the step-h reward in the return: product of earlier step discounts."""
    return np.concatenate(([1.0], np.cumprod(mdp.step_discount[:-1])))


def monte_carlo_value(
    mdp: TabularMDP,
    policy: np.ndarray,
    reward: np.ndarray | None,
    num_rollouts: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Sample mean of the discounted return over independent rollouts, with its standard error."""
    if num_rollouts < 1:
        raise ParameterError("num_rollouts must be at least 1")
    policy = check_policy(mdp, policy)
    reward = _check_reward(mdp, reward)
    weights = discounted_weights(mdp)
    states = np.full(num_rollouts, mdp.initial_state, dtype=np.int64)
    returns = np.zeros(num_rollouts)
    for h in range(mdp.H):
        actions = policy[h, states]
        returns += weights[h] * reward[h, states, actions]
        u = rng.random(num_rollouts)
        cdf = mdp.cdf[h, states, actions]
        states = np.minimum((cdf <= u[:, None]).sum(axis=1), mdp.S - 1)
    mean = float(returns.mean())
    stderr = float(returns.std(ddof=1) / np.sqrt(num_rollouts)) if num_rollouts > 1 else 0.0
    return mean, stderr
