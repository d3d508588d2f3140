"""Best-policy identification: BPI-UCRL and a boosting wrapper for weak PAC learners.

BPI-UCRL keeps optimistic and pessimistic Q-values built from KL confidence balls
around the empirical kernel. It explores greedily with respect to the optimistic
values, stops when the two bounds agree to within ``epsilon`` at the initial
state, and recommends the greedy policy for the pessimistic values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .confidence import PER_STEP, POOLED, ThresholdSpec, beta_nb, kl_ball_max_row, kl_ball_min_row
from .empirical import EmpiricalState, greedy_nb, p_hat_row_nb, pooled_nb, simulate_episode_nb
from .errors import DimensionError, ParameterError
from .mdp import TabularMDP, _check_reward, monte_carlo_value

CHUNK = 2048


@dataclass(frozen=True)
class ConfidenceBounds:
    Qu: np.ndarray  # (H+1, S, A) optimistic
    Ql: np.ndarray  # (H+1, S, A) pessimistic
    Vu: np.ndarray  # (H+1, S)
    Vl: np.ndarray  # (H+1, S)

    def gap(self, state: int) -> float:
        return float(self.Vu[0, state] - self.Vl[0, state])


@dataclass
class BPIResult:
    policy: np.ndarray  # recommendation
    tau: int | None
    budget_exhausted: bool
    state: EmpiricalState
    bounds: ConfidenceBounds
    gaps: np.ndarray  # gaps[t] = upper minus lower value at the initial state after t episodes
    checkpoints: list[dict] = field(default_factory=list)

    @property
    def stopped(self) -> bool:
        return self.tau is not None


@njit(cache=True)
def q_bounds_nb(n_sa, n_sas, reward, leading_log, d, pooled, Qu, Ql, Vu, Vl):
    H, S, A = n_sa.shape
    if pooled:
        c_sa, c_sas = pooled_nb(n_sa, n_sas)
    else:
        c_sa, c_sas = n_sa, n_sas
    row = np.empty(S)
    p = np.empty(S)
    for s in range(S):
        Vu[H, s] = 0.0
        Vl[H, s] = 0.0
        for a in range(A):
            Qu[H, s, a] = 0.0
            Ql[H, s, a] = 0.0
    for h in range(H - 1, -1, -1):
        hc = 0 if pooled else h
        vu = Vu[h + 1]
        vl = Vl[h + 1]
        for s in range(S):
            for a in range(A):
                n = p_hat_row_nb(c_sa, c_sas, hc, s, a, row)
                alpha = math.inf if n == 0 else beta_nb(n, leading_log, S) / n
                Qu[h, s, a] = reward[h, s, a] + d[h] * kl_ball_max_row(row, vu, alpha, p)
                Ql[h, s, a] = reward[h, s, a] + d[h] * kl_ball_min_row(row, vl, alpha, p)
            bu = Qu[h, s, 0]
            bl = Ql[h, s, 0]
            for a in range(1, A):
                bu = max(bu, Qu[h, s, a])
                bl = max(bl, Ql[h, s, a])
            Vu[h, s] = bu
            Vl[h, s] = bl


@njit(cache=True)
def bpi_loop_nb(cdf, s1, n_sa, n_sas, t0, t_end, uniforms, reward, leading_log, d, pooled,
                epsilon, Qu, Ql, Vu, Vl, policy, trace):
    t = t0
    while True:
        q_bounds_nb(n_sa, n_sas, reward, leading_log, d, pooled, Qu, Ql, Vu, Vl)
        gap = Vu[0, s1] - Vl[0, s1]
        trace[t] = gap
        if gap <= epsilon:
            return t, True
        if t >= t_end:
            return t, False
        greedy_nb(Qu, policy)
        simulate_episode_nb(cdf, s1, policy, uniforms[t - t0], n_sa, n_sas)
        t += 1


def _empty_bounds(H: int, S: int, A: int) -> ConfidenceBounds:
    return ConfidenceBounds(
        np.empty((H + 1, S, A)), np.empty((H + 1, S, A)), np.empty((H + 1, S)), np.empty((H + 1, S))
    )


def compute_q_confidence(
    state: EmpiricalState,
    reward: np.ndarray,
    spec: ThresholdSpec,
    gamma=1.0,
) -> ConfidenceBounds:
    """Optimistic and pessimistic Q-values; ``gamma`` may be a per-step discount vector."""
    H, S, A = state.shape
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (H, S, A):
        raise DimensionError(f"reward must have shape {(H, S, A)}, got {reward.shape}")
    d = np.asarray(gamma, dtype=np.float64)
    d = np.full(H, float(d)) if d.ndim == 0 else d
    b = _empty_bounds(H, S, A)
    q_bounds_nb(state.n_sa, state.n_sas, reward, spec.leading_log, d, spec.mode == POOLED,
                b.Qu, b.Ql, b.Vu, b.Vl)
    return b


def _greedy(table: np.ndarray) -> np.ndarray:
    H = table.shape[0] - 1
    policy = np.empty((H, table.shape[1]), dtype=np.int64)
    greedy_nb(np.asarray(table, dtype=np.float64), policy)
    return policy


def bpi_sampling_policy(bounds: ConfidenceBounds) -> np.ndarray:
    return _greedy(bounds.Qu)


def bpi_recommend(bounds: ConfidenceBounds) -> np.ndarray:
    return _greedy(bounds.Ql)


def bpi_should_stop(bounds: ConfidenceBounds, epsilon: float, initial_state: int = 0) -> bool:
    return bool(bounds.Vu[0, initial_state] - bounds.Vl[0, initial_state] <= epsilon)


def run_bpi_ucrl(
    mdp: TabularMDP,
    reward: np.ndarray | None,
    epsilon: float,
    delta: float,
    spec: ThresholdSpec | None,
    rng: np.random.Generator,
    budget: int,
    checkpoints=None,
    stopping: bool = True,
) -> BPIResult:
    """Explore with optimistic values until the value gap at the initial state is at most ``epsilon``.

    Without a stop, the result carries ``budget_exhausted=True`` and the
    recommendation for the data gathered so far.
    """
    if epsilon < 0.0:
        raise ParameterError("epsilon must be non-negative")
    if budget < 0:
        raise ParameterError("budget must be non-negative")
    reward = _check_reward(mdp, reward)
    spec = spec or ThresholdSpec(delta, mdp.S, mdp.A, mdp.H, PER_STEP)
    H, S, A = mdp.H, mdp.S, mdp.A
    state = EmpiricalState.empty(H, S, A)
    b = _empty_bounds(H, S, A)
    policy = np.empty((H, S), dtype=np.int64)
    trace = np.empty(budget + 1)
    cdf = np.ascontiguousarray(mdp.cdf)
    pooled = spec.mode == POOLED
    s1 = mdp.initial_state
    marks = sorted({int(c) for c in (checkpoints or []) if 0 <= int(c) <= budget})
    log: list[dict] = []
    thr = float(epsilon) if stopping else -math.inf
    t, stopped = 0, False
    for target in marks + [budget]:
        while True:
            end = min(target, t + CHUNK)
            u = rng.random((end - t, H))
            t, stopped = bpi_loop_nb(cdf, s1, state.n_sa, state.n_sas, t, end, u, reward,
                                     spec.leading_log, mdp.step_discount, pooled, thr,
                                     b.Qu, b.Ql, b.Vu, b.Vl, policy, trace)
            if stopped or t >= target:
                break
        state.t = t
        if target in marks and t == target:
            log.append({
                "t": t,
                "upper": float(b.Vu[0, s1]),
                "lower": float(b.Vl[0, s1]),
                "gap": float(trace[t]),
                "recommendation": bpi_recommend(b),
                "visits": state.state_visits(),
                "state": state.copy(),
            })
        if stopped:
            break
    return BPIResult(
        policy=bpi_recommend(b),
        tau=t if stopped else None,
        budget_exhausted=not stopped,
        state=state,
        bounds=b,
        gaps=trace[: t + 1].copy(),
        checkpoints=log,
    )


def boosting_rollouts(H: int, epsilon: float, M: int, delta: float) -> int:
    """Rollouts per candidate so that all ``M`` value estimates are ``epsilon``-accurate w.p. ``1 - delta``."""
    if M < 1 or epsilon <= 0.0 or not 0.0 < delta < 1.0:
        raise ParameterError("need M >= 1, epsilon > 0 and delta in (0, 1)")
    return int(math.ceil(H**2 / (2.0 * epsilon**2) * math.log(M / delta)))


def boost_and_select(
    weak_agent: Callable[[np.random.Generator], np.ndarray],
    M: int,
    N: int,
    mdp: TabularMDP,
    reward: np.ndarray | None,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run ``M`` independent weak learners and keep the policy with the best Monte Carlo value."""
    if M < 1:
        raise ParameterError("M must be at least 1")
    if N < 1:
        raise ParameterError("N must be at least 1")
    seeds = rng.spawn(M)
    policies = [np.asarray(weak_agent(seeds[i])) for i in range(M)]
    if M == 1:
        return policies[0]
    estimates = [monte_carlo_value(mdp, pol, reward, N, rng)[0] for pol in policies]
    return policies[int(np.argmax(estimates))]
