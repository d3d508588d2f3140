"""Confidence thresholds, KL divergences and linear optimisation over KL balls.

The KL ball around an empirical distribution ``q`` is ``{p : KL(q, p) <= alpha}``.
Maximising ``p @ v`` over it reduces to a one-dimensional search: on the support of
``q`` the maximiser has the form ``p_i ∝ q_i / (nu - v_i)`` for a multiplier ``nu``
above the largest supported value, and any mass outside the support goes to the
best unsupported state. We search over ``t = 1 / (nu - q @ v)`` which lives in a
bounded bracket and makes the divergence increasing in ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numba import njit

from .errors import DimensionError, ParameterError
from .mdp import sigma

PER_STEP = "per-step"
POOLED = "stationary-pooled"

MAX_ITER = 200
BRACKET_TOL = 1e-12


@dataclass(frozen=True)
class ThresholdSpec:
    delta: float
    S: int
    A: int
    H: int
    mode: Literal["per-step", "stationary-pooled"] = PER_STEP

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if min(self.S, self.A, self.H) < 1:
            raise ParameterError("S, A and H must be positive")
        if self.mode not in (PER_STEP, POOLED):
            raise ParameterError(f"unknown threshold mode {self.mode!r}")

    @property
    def leading_log(self) -> float:
        """``log(2SAH/delta)`` per step, ``log(2SA/delta)`` when counts are pooled."""
        h = self.H if self.mode == PER_STEP else 1
        return math.log(2.0 * self.S * self.A * h / self.delta)

    @property
    def beta_cnt(self) -> float:
        return math.log(2.0 * self.S * self.A * self.H / self.delta)


@njit(cache=True)
def beta_nb(n: float, leading_log: float, S: int) -> float:
    if S == 1:
        return leading_log
    k = S - 1.0
    return leading_log + k * math.log(math.e * (1.0 + n / k))


def beta(n, spec: ThresholdSpec):
    """Threshold ``log(2SAH/delta) + (S-1) log(e (1 + n/(S-1)))``; works on arrays too."""
    n_arr = np.asarray(n, dtype=np.float64)
    if np.any(n_arr < 0):
        raise ParameterError("counts must be non-negative")
    if spec.S == 1:
        out = np.full_like(n_arr, spec.leading_log)
    else:
        k = spec.S - 1.0
        out = spec.leading_log + k * np.log(math.e * (1.0 + n_arr / k))
    return float(out) if out.ndim == 0 else out


def radius(n, spec: ThresholdSpec):
    """Ball radius ``beta(n)/n`` with ``1/0 = inf``."""
    n_arr = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.where(n_arr > 0, np.asarray(beta(n_arr, spec)) / np.maximum(n_arr, 1e-300), np.inf)
    return float(out) if out.ndim == 0 else out


def _check_distribution(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise DimensionError(f"{name} must be a non-empty vector")
    if np.any(x < 0.0) or abs(x.sum() - 1.0) > 1e-9:
        raise ParameterError(f"{name} must be a probability vector")
    return x


def kl_categorical(q: np.ndarray, p: np.ndarray) -> float:
    """``KL(q, p) = sum q log(q / p)``; ``+inf`` when ``p`` misses part of ``q``'s support."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise DimensionError(f"length mismatch {q.shape} vs {p.shape}")
    support = q > 0.0
    if np.any(p[support] <= 0.0):
        return math.inf
    qs, ps = q[support], p[support]
    return float(max(np.sum(qs * np.log(qs / ps)), 0.0))


def pinsker_l1(kl: float) -> float:
    """L1 radius implied by a KL budget through Pinsker's inequality."""
    if kl < 0:
        raise ParameterError(f"KL value must be non-negative, got {kl}")
    return math.sqrt(2.0 * kl)


@njit(cache=True)
def _divergence(q, w, t, S):
    """KL(q, p_t) and its t-derivative for the tilted distribution p_t ∝ q / (1 - w t)."""
    a = 0.0
    s0 = 0.0
    s1 = 0.0
    s2 = 0.0
    for i in range(S):
        if q[i] > 0.0:
            z = w[i] * t
            if z >= 1.0:
                return math.inf, 0.0
            g = 1.0 / (1.0 - z)
            a += q[i] * math.log1p(-z)
            s0 += q[i] * g
            s1 += q[i] * w[i] * g
            s2 += q[i] * w[i] * g * g
    f = a + math.log1p(t * s1)
    fp = -s1 + s2 / s0
    return f, fp


@njit(cache=True)
def kl_ball_max_row(q, v, alpha, p_out):
    """Maximise ``p @ v`` over ``KL(q, p) <= alpha``; writes the maximiser into ``p_out``."""
    S = q.shape[0]
    if alpha == math.inf:
        best = 0
        for i in range(1, S):
            if v[i] > v[best]:
                best = i
        for i in range(S):
            p_out[i] = 0.0
        p_out[best] = 1.0
        return v[best]
    m = 0.0
    for i in range(S):
        m += q[i] * v[i]
    if alpha <= 0.0:
        for i in range(S):
            p_out[i] = q[i]
        return m
    vmax_in = -math.inf
    vmax_out = -math.inf
    i_out = -1
    for i in range(S):
        if q[i] > 0.0:
            if v[i] > vmax_in:
                vmax_in = v[i]
        elif v[i] > vmax_out:
            vmax_out = v[i]
            i_out = i
    has_out = i_out >= 0 and vmax_out > vmax_in
    top = vmax_out if has_out else vmax_in
    scale = max(abs(top), abs(m), 1.0)
    if top - m <= 1e-15 * scale:
        # q already sits on the best value and nothing outside its support beats it
        for i in range(S):
            p_out[i] = q[i]
        return m
    w = np.empty(S)
    for i in range(S):
        w[i] = v[i] - m
    # remove rounding drift so that q @ w is zero
    drift = 0.0
    for i in range(S):
        drift += q[i] * w[i]
    var = 0.0
    for i in range(S):
        w[i] -= drift
        var += q[i] * w[i] * w[i]
    t_max = 1.0 / (top - m)

    if has_out:
        f_top, _ = _divergence(q, w, t_max, S)
        if f_top <= alpha:
            log_c = -alpha
            for i in range(S):
                if q[i] > 0.0:
                    log_c += q[i] * math.log1p(-w[i] * t_max)
            c = math.exp(log_c)
            inside = 0.0
            for i in range(S):
                if q[i] > 0.0:
                    p_out[i] = c * q[i] / (1.0 - w[i] * t_max)
                    inside += p_out[i]
                else:
                    p_out[i] = 0.0
            p_out[i_out] = max(1.0 - inside, 0.0)
            value = 0.0
            for i in range(S):
                value += p_out[i] * v[i]
            return min(value, top)

    lo = 0.0
    hi = t_max
    t = math.sqrt(2.0 * alpha / var) if var > 0.0 else 0.5 * hi
    if not (lo < t < hi):
        t = 0.5 * hi
    for _ in range(MAX_ITER):
        f, fp = _divergence(q, w, t, S)
        g = f - alpha
        if g > 0.0:
            hi = t
        else:
            lo = t
        if abs(g) <= 1e-13 * alpha or hi - lo <= BRACKET_TOL * t_max * 1e-3:
            break
        nxt = t - g / fp if (fp > 0.0 and f < math.inf) else -1.0
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        t = nxt
    f, _ = _divergence(q, w, t, S)
    # Newton on a convex increasing f converges from above, so allow a tiny overshoot
    if f > alpha * (1.0 + 1e-10):
        t = lo
    total = 0.0
    for i in range(S):
        if q[i] > 0.0:
            p_out[i] = q[i] / (1.0 - w[i] * t)
            total += p_out[i]
        else:
            p_out[i] = 0.0
    value = 0.0
    for i in range(S):
        p_out[i] /= total
        value += p_out[i] * v[i]
    return min(value, top)


@njit(cache=True)
def kl_ball_min_row(q, v, alpha, p_out):
    neg = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        neg[i] = -v[i]
    return -kl_ball_max_row(q, neg, alpha, p_out)


def _check_ball_args(q, v, alpha):
    q = _check_distribution(q, "q")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != q.shape:
        raise DimensionError(f"value vector shape {v.shape} does not match {q.shape}")
    if not np.all(np.isfinite(v)):
        raise ParameterError("value vector must be finite")
    alpha = float(alpha)
    if not alpha >= 0.0:
        raise ParameterError(f"radius must be non-negative, got {alpha}")
    return q, v, alpha


def kl_ball_max(q: np.ndarray, v: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """``max p @ v`` over ``{p : KL(q, p) <= alpha}`` and a maximiser.

    ``alpha = inf`` returns ``max(v)`` (the whole simplex).
    """
    q, v, alpha = _check_ball_args(q, v, alpha)
    p = np.empty_like(q)
    value = kl_ball_max_row(q, v, alpha, p)
    return float(value), p


def kl_ball_min(q: np.ndarray, v: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    q, v, alpha = _check_ball_args(q, v, alpha)
    p = np.empty_like(q)
    value = kl_ball_min_row(q, v, alpha, p)
    return float(value), p


def bernstein_kl_upper(pf: float, var_q: float, alpha: float, B: float) -> float:
    """Bernstein-type upper bound on ``q @ f`` given ``KL(p, q) <= alpha`` and ``0 <= f <= B``."""
    return pf + math.sqrt(2.0 * max(var_q, 0.0) * alpha) + alpha * B / 3.0


def cnt_pseudo_bound_holds(n: float, nbar: float, beta_n: float, beta_nbar: float, beta_cnt: float) -> bool:
    """Check ``n >= nbar/2 - beta_cnt  =>  min(beta_n/n, 1) <= 4 beta_nbar / max(nbar, 1)``."""
    if n < nbar / 2.0 - beta_cnt:
        return True
    lhs = 1.0 if n <= 0 else min(beta_n / n, 1.0)
    return lhs <= 4.0 * beta_nbar / max(nbar, 1.0)


def kl_event_holds(n_sa: np.ndarray, n_sas: np.ndarray, P: np.ndarray, spec: ThresholdSpec) -> bool:
    """Whether ``n KL(p_hat, p) <= beta(n)`` for every visited row."""
    return bool(kl_event_slack(n_sa, n_sas, P, spec) >= 0.0)


def kl_event_slack(n_sa: np.ndarray, n_sas: np.ndarray, P: np.ndarray, spec: ThresholdSpec) -> float:
    """Smallest ``beta(n) - n KL(p_hat, p)`` over visited rows (``inf`` when nothing is visited)."""
    worst = math.inf
    for idx in zip(*np.nonzero(n_sa)):
        n = n_sa[idx]
        kl = kl_categorical(n_sas[idx] / n, P[idx])
        worst = min(worst, beta(n, spec) - n * kl)
    return worst


def rf_sample_complexity_bound(S: int, A: int, H: int, epsilon: float, delta: float, gamma: float = 1.0) -> float:
    """High-probability upper bound on the reward-free stopping time (per-step threshold)."""
    return _complexity_bound(144.0, S, A, H, epsilon, delta, gamma)


def bpi_sample_complexity_bound(S: int, A: int, H: int, epsilon: float, delta: float, gamma: float = 1.0) -> float:
    return _complexity_bound(64.0, S, A, H, epsilon, delta, gamma)


def _complexity_bound(const, S, A, H, epsilon, delta, gamma):
    c_h = const * (1.0 + math.sqrt(2.0)) ** 2 * sigma(H, gamma) ** 4
    lead = math.log(2.0 * S * A * H / delta)
    scale = c_h * S * A / epsilon**2
    if S == 1:
        return scale * lead
    inner = lead + (S - 1) * (math.sqrt(math.e) + math.sqrt(math.e / (S - 1)))
    return scale * (lead + 2.0 * (S - 1) * math.log(scale * inner) + (S - 1))
