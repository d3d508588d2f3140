"""Visit counts and the empirical transition model built from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .mdp import Trajectory


@dataclass
class EmpiricalState:
    """Counts ``n_h(s, a)`` and ``n_h(s, a, s')`` after ``t`` episodes.

    Mutable accumulator: :meth:`update` changes it in place.
    """

    t: int
    n_sa: np.ndarray  # (H, S, A) int64
    n_sas: np.ndarray  # (H, S, A, S) int64

    @classmethod
    def empty(cls, H: int, S: int, A: int) -> "EmpiricalState":
        return cls(0, np.zeros((H, S, A), dtype=np.int64), np.zeros((H, S, A, S), dtype=np.int64))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.n_sa.shape

    def copy(self) -> "EmpiricalState":
        return EmpiricalState(self.t, self.n_sa.copy(), self.n_sas.copy())

    def update(self, trajectory: Trajectory) -> "EmpiricalState":
        H = self.n_sa.shape[0]
        s, a = trajectory.states, trajectory.actions
        if len(a) != H or len(s) != H + 1:
            raise ValueError(f"trajectory must have {H} steps")
        steps = np.arange(H)
        self.n_sa[steps, s[:-1], a] += 1
        self.n_sas[steps, s[:-1], a, s[1:]] += 1
        self.t += 1
        return self

    def pooled_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """Counts summed over steps, shapes ``(S, A)`` and ``(S, A, S)``."""
        return self.n_sa.sum(axis=0), self.n_sas.sum(axis=0)

    def p_hat(self, pooled: bool = False) -> np.ndarray:
        """Empirical kernel ``(H, S, A, S)``; rows never visited are uniform."""
        H, S, A = self.n_sa.shape
        if pooled:
            n_sa, n_sas = self.pooled_counts()
            return np.broadcast_to(_normalise(n_sa, n_sas), (H, S, A, S)).copy()
        return _normalise(self.n_sa, self.n_sas)

    def state_visits(self) -> np.ndarray:
        """Visits per state summed over steps and actions."""
        return self.n_sa.sum(axis=(0, 2))

    @property
    def transitions(self) -> int:
        return int(self.n_sa.sum())


def update_counts(state: EmpiricalState, trajectory: Trajectory) -> EmpiricalState:
    return state.update(trajectory)


def _normalise(n_sa: np.ndarray, n_sas: np.ndarray) -> np.ndarray:
    S = n_sas.shape[-1]
    out = np.full(n_sas.shape, 1.0 / S)
    visited = n_sa > 0
    out[visited] = n_sas[visited] / n_sa[visited][:, None]
    return out


@njit(cache=True)
def pooled_nb(n_sa, n_sas):
    H, S, A = n_sa.shape
    psa = np.zeros((1, S, A), dtype=np.int64)
    psas = np.zeros((1, S, A, S), dtype=np.int64)
    for h in range(H):
        for s in range(S):
            for a in range(A):
                psa[0, s, a] += n_sa[h, s, a]
                for s2 in range(S):
                    psas[0, s, a, s2] += n_sas[h, s, a, s2]
    return psa, psas


@njit(cache=True)
def p_hat_row_nb(n_sa, n_sas, hc, s, a, out):
    S = out.shape[0]
    n = n_sa[hc, s, a]
    if n == 0:
        for i in range(S):
            out[i] = 1.0 / S
    else:
        for i in range(S):
            out[i] = n_sas[hc, s, a, i] / n
    return n


@njit(cache=True)
def simulate_episode_nb(cdf, s1, policy, u, n_sa, n_sas):
    """Roll one episode with pre-drawn uniforms ``u`` and add it to the counts."""
    H, S = policy.shape
    s = s1
    for h in range(H):
        a = policy[h, s]
        row = cdf[h, s, a]
        nxt = 0
        while nxt < S - 1 and row[nxt] <= u[h]:
            nxt += 1
        n_sa[h, s, a] += 1
        n_sas[h, s, a, nxt] += 1
        s = nxt


@njit(cache=True)
def greedy_nb(table, policy):
    """Row-wise argmax over actions with lowest-index ties; ``table`` is ``(H+1, S, A)``."""
    H, S = policy.shape
    A = table.shape[2]
    for h in range(H):
        for s in range(S):
            best = 0
            for a in range(1, A):
                if table[h, s, a] > table[h, s, best]:
                    best = a
            policy[h, s] = best
