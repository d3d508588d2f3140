"""Reward-free exploration: RF-UCRL and the W-bonus variant (RF-Express style).

Both agents play the greedy policy with respect to an upper bound on the
estimation error of every policy's value and stop once the bound at the initial
state is small. The per-episode loop runs in compiled code; uniforms come in
blocks from the caller's generator so runs stay reproducible per seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .confidence import PER_STEP, POOLED, ThresholdSpec, beta_nb, kl_event_holds
from .empirical import EmpiricalState, greedy_nb, p_hat_row_nb, pooled_nb, simulate_episode_nb
from .errors import DimensionError, ParameterError
from .mdp import TabularMDP, eval_policy_kernel, value_ceilings

CHUNK = 4096

_MODE_E = 0
_MODE_W = 1


@dataclass(frozen=True)
class RFConfig:
    epsilon: float
    delta: float
    clipped: bool = True
    stationary_pooled: bool = False
    budget: int = 10**6  # episodes

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.budget < 0:
            raise ParameterError("budget must be non-negative")

    def threshold_spec(self, mdp: TabularMDP) -> ThresholdSpec:
        mode = POOLED if self.stationary_pooled else PER_STEP
        return ThresholdSpec(self.delta, mdp.S, mdp.A, mdp.H, mode)


@dataclass
class RunResult:
    """Outcome of one exploration run.

    ``stop_values[t]`` is the stopping statistic computed from the first ``t``
    episodes, so ``tau`` is the first index where it crossed the threshold.
    """

    state: EmpiricalState
    tau: int | None
    budget_exhausted: bool
    stop_values: np.ndarray
    bounds: np.ndarray
    policy: np.ndarray
    checkpoints: list[dict] = field(default_factory=list)

    @property
    def stopped(self) -> bool:
        return self.tau is not None


def _discounts(gamma, H: int) -> np.ndarray:
    d = np.asarray(gamma, dtype=np.float64)
    if d.ndim == 0:
        d = np.full(H, float(d))
    if d.shape != (H,):
        raise DimensionError(f"need {H} step discounts, got shape {d.shape}")
    return d


@njit(cache=True)
def error_bounds_nb(n_sa, n_sas, leading_log, clip, d, clipped, pooled, E):
    """Backward recursion for the error bound table ``E`` of shape ``(H+1, S, A)``."""
    H, S, A = n_sa.shape
    if pooled:
        c_sa, c_sas = pooled_nb(n_sa, n_sas)
    else:
        c_sa, c_sas = n_sa, n_sas
    row = np.empty(S)
    nxt = np.empty(S)
    for s in range(S):
        for a in range(A):
            E[H, s, a] = 0.0
    for h in range(H - 1, -1, -1):
        for s2 in range(S):
            m = E[h + 1, s2, 0]
            for b in range(1, A):
                if E[h + 1, s2, b] > m:
                    m = E[h + 1, s2, b]
            nxt[s2] = m
        hc = 0 if pooled else h
        worst = 0.0
        for s2 in range(S):
            worst = max(worst, nxt[s2])
        # unclipped and unvisited: the n=1 bonus with the worst next state, so that
        # unvisited pairs rank at least as high as any visited one
        fresh = clip[h] if clipped else clip[h] * math.sqrt(2.0 * beta_nb(1.0, leading_log, S)) + d[h] * worst
        for s in range(S):
            for a in range(A):
                n = p_hat_row_nb(c_sa, c_sas, hc, s, a, row)
                if n == 0:
                    E[h, s, a] = fresh
                    continue
                future = 0.0
                for s2 in range(S):
                    future += row[s2] * nxt[s2]
                val = clip[h] * math.sqrt(2.0 * beta_nb(n, leading_log, S) / n) + d[h] * future
                if clipped and val > clip[h]:
                    val = clip[h]
                E[h, s, a] = val


@njit(cache=True)
def w_bounds_nb(n_sa, n_sas, leading_log, W):
    H, S, A = n_sa.shape
    row = np.empty(S)
    nxt = np.empty(S)
    for s in range(S):
        for a in range(A):
            W[H, s, a] = 0.0
    for h in range(H - 1, -1, -1):
        for s2 in range(S):
            m = W[h + 1, s2, 0]
            for b in range(1, A):
                if W[h + 1, s2, b] > m:
                    m = W[h + 1, s2, b]
            nxt[s2] = m
        for s in range(S):
            for a in range(A):
                n = p_hat_row_nb(n_sa, n_sas, h, s, a, row)
                if n == 0:
                    W[h, s, a] = H
                    continue
                future = 0.0
                for s2 in range(S):
                    future += row[s2] * nxt[s2]
                val = 9.0 * H * H * beta_nb(n, leading_log, S) / n + (1.0 + 1.0 / H) * future
                W[h, s, a] = min(float(H), val)


@njit(cache=True)
def _stat(table, policy, s1, mode):
    x = table[0, s1, policy[0, s1]]
    if mode == _MODE_W:
        return 2.0 * math.e * math.sqrt(x) + x
    return x


@njit(cache=True)
def rf_loop_nb(cdf, s1, n_sa, n_sas, t0, t_end, uniforms, mode, clipped, pooled,
               leading_log, clip, d, threshold, table, policy, trace):
    """Run episodes ``t0 .. t_end - 1``; return ``(t, stopped)``.

    Bounds, policy and ``trace[t]`` always reflect the data of the returned ``t``.
    """
    t = t0
    while True:
        if mode == _MODE_W:
            w_bounds_nb(n_sa, n_sas, leading_log, table)
        else:
            error_bounds_nb(n_sa, n_sas, leading_log, clip, d, clipped, pooled, table)
        greedy_nb(table, policy)
        stat = _stat(table, policy, s1, mode)
        trace[t] = stat
        if stat <= threshold:
            return t, True
        if t >= t_end:
            return t, False
        simulate_episode_nb(cdf, s1, policy, uniforms[t - t0], n_sa, n_sas)
        t += 1


def compute_error_bounds(
    state: EmpiricalState, cfg: RFConfig, spec: ThresholdSpec, gamma=1.0
) -> np.ndarray:
    """Error bound table ``(H+1, S, A)``; ``gamma`` is a scalar or per-step discount vector."""
    H, S, A = state.shape
    d = _discounts(gamma, H)
    clip = d * value_ceilings(d)[1:]
    E = np.empty((H + 1, S, A))
    error_bounds_nb(state.n_sa, state.n_sas, spec.leading_log, clip, d,
                    bool(cfg.clipped), bool(cfg.stationary_pooled), E)
    return E


def compute_w_bounds(state: EmpiricalState, spec: ThresholdSpec, H: int) -> np.ndarray:
    if state.shape[0] != H:
        raise DimensionError(f"state horizon {state.shape[0]} does not match H={H}")
    W = np.empty((H + 1,) + state.shape[1:])
    w_bounds_nb(state.n_sa, state.n_sas, spec.leading_log, W)
    return W


def greedy_policy(bounds: np.ndarray) -> np.ndarray:
    """Argmax over actions at every ``(h, s)`` for ``h < H``; ties go to the lowest index."""
    bounds = np.asarray(bounds, dtype=np.float64)
    H = bounds.shape[0] - 1
    policy = np.empty((H, bounds.shape[1]), dtype=np.int64)
    greedy_nb(bounds, policy)
    return policy


def rf_should_stop(bounds: np.ndarray, policy: np.ndarray, epsilon: float, initial_state: int = 0) -> bool:
    return bool(bounds[0, initial_state, policy[0, initial_state]] <= epsilon / 2.0)


def w_should_stop(W: np.ndarray, policy: np.ndarray, epsilon: float, initial_state: int = 0) -> bool:
    x = float(W[0, initial_state, policy[0, initial_state]])
    return bool(2.0 * math.e * math.sqrt(x) + x <= epsilon / 2.0)


def _drive(mdp, cfg, spec, rng, mode, checkpoints, clip, d, leading_log, pooled, stopping) -> RunResult:
    H, S, A = mdp.H, mdp.S, mdp.A
    state = EmpiricalState.empty(H, S, A)
    table = np.empty((H + 1, S, A))
    policy = np.empty((H, S), dtype=np.int64)
    trace = np.empty(cfg.budget + 1)
    cdf = np.ascontiguousarray(mdp.cdf)
    marks = sorted({int(c) for c in (checkpoints or []) if 0 <= int(c) <= cfg.budget})
    log: list[dict] = []
    stopped = False
    t = 0
    s1 = mdp.initial_state
    thr = cfg.epsilon / 2.0 if stopping else -math.inf
    targets = marks + [cfg.budget]
    for target in targets:
        while True:
            end = min(target, t + CHUNK)
            u = rng.random((end - t, H))
            t, stopped = rf_loop_nb(cdf, s1, state.n_sa, state.n_sas, t, end, u, mode,
                                    bool(cfg.clipped), pooled, leading_log, clip, d, thr,
                                    table, policy, trace)
            if stopped or t >= target:
                break
        state.t = t
        if target in marks and t == target:
            log.append({
                "t": t,
                "stop_value": float(trace[t]),
                "bound_initial": table[0, s1].copy(),
                "visits": state.state_visits(),
                "state": state.copy(),
            })
        if stopped:
            break
    state.t = t
    return RunResult(
        state=state,
        tau=t if stopped else None,
        budget_exhausted=not stopped,
        stop_values=trace[: t + 1].copy(),
        bounds=table,
        policy=policy,
        checkpoints=log,
    )


def run_rf_ucrl(
    mdp: TabularMDP,
    cfg: RFConfig,
    spec: ThresholdSpec | None,
    rng: np.random.Generator,
    checkpoints=None,
    stopping: bool = True,
) -> RunResult:
    """Explore until the error bound at the initial state is at most ``epsilon/2``.

    ``checkpoints`` lists episode indices at which a snapshot of the data is kept.
    With ``stopping=False`` the run always uses the whole budget.
    """
    spec = spec or cfg.threshold_spec(mdp)
    d = mdp.step_discount
    clip = d * mdp.ceilings[1:]
    return _drive(mdp, cfg, spec, rng, _MODE_E, checkpoints, clip, d, spec.leading_log,
                  bool(cfg.stationary_pooled), stopping)


def run_rf_express(
    mdp: TabularMDP,
    cfg: RFConfig,
    spec: ThresholdSpec | None,
    rng: np.random.Generator,
    checkpoints=None,
    stopping: bool = True,
) -> RunResult:
    """W-bonus exploration; only defined for undiscounted problems."""
    if mdp.gamma != 1.0 or np.any(mdp.step_discount != 1.0):
        raise ParameterError("the W-bonus algorithm requires gamma = 1")
    spec = spec or cfg.threshold_spec(mdp)
    d = mdp.step_discount
    clip = d * mdp.ceilings[1:]
    return _drive(mdp, cfg, spec, rng, _MODE_W, checkpoints, clip, d, spec.leading_log, False, stopping)


@dataclass(frozen=True)
class DominanceReport:
    max_gap: float  # max over samples of (e_hat - E_bar); <= 0 means dominance held
    event_held: bool


def verify_error_dominance(
    state: EmpiricalState,
    mdp: TabularMDP,
    num_policies: int,
    num_rewards: int,
    rng: np.random.Generator,
    clipped: bool = True,
    spec: ThresholdSpec | None = None,
    pooled: bool = False,
) -> DominanceReport:
    """Compare the true estimation error of random policies and rewards with the bound table."""
    spec = spec or ThresholdSpec(0.1, mdp.S, mdp.A, mdp.H, POOLED if pooled else PER_STEP)
    cfg = RFConfig(epsilon=1.0, delta=spec.delta, clipped=clipped, stationary_pooled=pooled)
    E = compute_error_bounds(state, cfg, spec, mdp.step_discount)
    p_hat = state.p_hat(pooled=pooled)
    H, S, A = mdp.H, mdp.S, mdp.A
    worst = -math.inf
    for _ in range(num_policies):
        policy = rng.integers(0, A, size=(H, S))
        for _ in range(num_rewards):
            reward = rng.random((H, S, A))
            q_hat = eval_policy_kernel(p_hat, reward, mdp.step_discount, policy).Q
            q_true = eval_policy_kernel(mdp.P, reward, mdp.step_discount, policy).Q
            gap = np.abs(q_hat - q_true)[:H] - E[:H]
            worst = max(worst, float(gap.max()))
    if pooled:
        n_sa, n_sas = state.pooled_counts()
        held = kl_event_holds(n_sa, n_sas, mdp.P[0], spec)
    else:
        held = kl_event_holds(state.n_sa, state.n_sas, mdp.P, spec)
    return DominanceReport(worst, held)
