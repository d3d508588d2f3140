"""Comparison agents: uniformly random exploration and generative-model sampling.

Both take their budget in transitions. The ``*_snapshots`` helpers return the data
seen after each prefix of a nested schedule, which is what the error curves need;
the single-budget functions are thin wrappers around them.
"""
from __future__ import annotations

import numpy as np

from .empirical import EmpiricalState
from .errors import ParameterError
from .mdp import TabularMDP


def _check_budgets(budgets) -> list[int]:
    out = [int(n) for n in budgets]
    if any(n < 0 for n in out):
        raise ParameterError("transition budgets must be non-negative")
    return out


def random_policy_snapshots(mdp: TabularMDP, budgets, rng: np.random.Generator) -> list[EmpiricalState]:
    """Counts after ``ceil(n / H)`` uniformly random episodes, for every ``n`` in ``budgets``."""
    budgets = _check_budgets(budgets)
    H, S, A = mdp.H, mdp.S, mdp.A
    episodes = [-(-n // H) for n in budgets]
    total = max(episodes, default=0)
    states = np.empty((total, H + 1), dtype=np.int64)
    actions = rng.integers(0, A, size=(total, H))
    u = rng.random((total, H))
    states[:, 0] = mdp.initial_state
    for h in range(H):
        cdf = mdp.cdf[h, states[:, h], actions[:, h]]
        states[:, h + 1] = np.minimum((cdf <= u[:, h : h + 1]).sum(axis=1), S - 1)
    out = []
    steps = np.broadcast_to(np.arange(H), (total, H))
    for k in episodes:
        st = EmpiricalState.empty(H, S, A)
        np.add.at(st.n_sa, (steps[:k], states[:k, :-1], actions[:k]), 1)
        np.add.at(st.n_sas, (steps[:k], states[:k, :-1], actions[:k], states[:k, 1:]), 1)
        st.t = k
        out.append(st)
    return out


def run_random_policy(mdp: TabularMDP, num_transitions: int, rng: np.random.Generator) -> EmpiricalState:
    """Uniformly random episodes until at least ``num_transitions`` transitions are collected."""
    return random_policy_snapshots(mdp, [num_transitions], rng)[0]


def _quota(n: int, cells: int) -> np.ndarray:
    q = np.full(cells, n // cells, dtype=np.int64)
    q[: n % cells] += 1
    return q


def generative_model_snapshots(
    mdp: TabularMDP, budgets, rng: np.random.Generator, pooled: bool = False
) -> list[EmpiricalState]:
    """Round-robin generative sampling; prefixes of one draw sequence give nested snapshots.

    Per-step mode cycles over ``(h, s, a)`` in lexicographic order. Pooled mode
    (stationary kernels only) cycles over ``(s, a)`` and spreads each pair's draws
    over the steps in turn, so pooled counts follow the ``(s, a)`` allocation.
    """
    budgets = _check_budgets(budgets)
    H, S, A = mdp.H, mdp.S, mdp.A
    if pooled and not mdp.stationary:
        raise ParameterError("pooled generative sampling needs a stationary MDP")
    cells = S * A if pooled else H * S * A
    top = max(budgets, default=0)
    depth = -(-top // cells)
    u = rng.random((cells, depth))
    if pooled:
        cdf = np.broadcast_to(mdp.cdf[0].reshape(cells, 1, S), (cells, depth, S))
    else:
        cdf = np.broadcast_to(mdp.cdf.reshape(cells, 1, S), (cells, depth, S))
    nxt = np.minimum((cdf <= u[..., None]).sum(axis=-1), S - 1)  # (cells, depth)
    out = []
    for n in budgets:
        q = _quota(n, cells)
        st = EmpiricalState.empty(H, S, A)
        for c in range(cells):
            k = q[c]
            if k == 0:
                continue
            draws = nxt[c, :k]
            if pooled:
                s, a = divmod(c, A)
                steps = np.arange(k) % H
                np.add.at(st.n_sa, (steps, s, a), 1)
                np.add.at(st.n_sas, (steps, s, a, draws), 1)
            else:
                h, rest = divmod(c, S * A)
                s, a = divmod(rest, A)
                st.n_sa[h, s, a] = k
                st.n_sas[h, s, a] = np.bincount(draws, minlength=S)
        st.t = -(-n // H)
        out.append(st)
    return out


def run_generative_model(
    mdp: TabularMDP, num_transitions: int, rng: np.random.Generator, pooled: bool = False
) -> EmpiricalState:
    """``floor(n / (S A H))`` draws per ``(h, s, a)`` plus a round-robin remainder."""
    return generative_model_snapshots(mdp, [num_transitions], rng, pooled)[0]
