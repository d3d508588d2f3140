from __future__ import annotations

import itertools

import numpy as np
import pytest

from rfexplore.envs import make_random_mdp


def enumerate_policies(H: int, S: int, A: int):
    """Every deterministic time-dependent policy, as (H, S) integer arrays."""
    for flat in itertools.product(range(A), repeat=H * S):
        yield np.array(flat, dtype=np.int64).reshape(H, S)


def value_by_paths(mdp, policy, reward, start=None):
    """Expected discounted return by summing over every sequence of next states."""
    start = mdp.initial_state if start is None else start
    total = 0.0
    for path in itertools.product(range(mdp.S), repeat=mdp.H - 1):
        states = (start,) + path
        prob, ret, weight = 1.0, 0.0, 1.0
        for h, s in enumerate(states):
            a = policy[h, s]
            ret += weight * reward[h, s, a]
            weight *= mdp.step_discount[h]
            if h + 1 < mdp.H:
                prob *= mdp.P[h, s, a, states[h + 1]]
        total += prob * ret
    return total


def _kl_rows(q, points):
    supp = q > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(supp, q * np.log(np.where(supp, q, 1.0) / points), 0.0).sum(axis=1)
    return np.where((points[:, supp] <= 0).any(axis=1), np.inf, kl)


def _simplex_grid(S, step, logs=20):
    """Uniform simplex grid plus log-spaced points near each face."""
    x = np.arange(0.0, 1.0 + step / 2, step)
    small = np.logspace(-12, np.log10(step), logs, endpoint=False)
    if S == 2:
        x = np.concatenate([x, small, 1.0 - small])
        return np.stack([x, 1.0 - x], axis=1)
    a, b = np.meshgrid(x, x, indexing="ij")
    keep = a + b <= 1.0 + 1e-12
    a, b = a[keep], b[keep]
    parts = [np.stack([a, b, np.clip(1.0 - a - b, 0.0, None)], axis=1)]
    for i in range(3):
        eps, lin = np.meshgrid(small, np.concatenate([x, small]), indexing="ij")
        eps, lin = eps.ravel(), lin.ravel()
        rest = 1.0 - eps - lin
        ok = rest >= 0.0
        for j in (k for k in range(3) if k != i):
            pts = np.zeros((ok.sum(), 3))
            pts[:, i] = eps[ok]
            pts[:, j] = lin[ok]
            pts[:, 3 - i - j] = rest[ok]
            parts.append(pts)
    return np.concatenate(parts)


def _box(q, alpha, centre, h, linear=61, logs=30):
    """Feasible grid points within three cells ``h`` of ``centre``.

    The largest coordinate is left implicit; coordinates close to zero also get
    log-spaced values so that optima hugging a face are resolved.
    """
    S = len(q)
    order = np.argsort(centre)
    free = order[:-1]
    axes = []
    for i in free:
        lin = centre[i] + np.linspace(-3 * h, 3 * h, linear)
        near = np.logspace(-12, np.log10(3 * h), logs) if centre[i] <= 3 * h else np.empty(0)
        axes.append(np.clip(np.concatenate([lin, near]), 0.0, 1.0))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.zeros((mesh[0].size, S))
    for i, m in zip(free, mesh):
        pts[:, i] = m.ravel()
    pts[:, order[-1]] = 1.0 - pts.sum(axis=1)
    pts = pts[pts[:, order[-1]] >= 0.0]
    return pts[_kl_rows(q, pts) <= alpha]


def _spread_top(points, vals, k, radius):
    """Indices of up to ``k`` best points, each more than ``radius`` from those already taken."""
    chosen = []
    for i in np.argsort(vals)[::-1]:
        if len(chosen) == k:
            break
        if all(np.abs(points[i] - points[j]).max() > radius for j in chosen):
            chosen.append(i)
    return chosen


def grid_ball_extremes(q, v, alpha, step=1e-3, candidates=10, rounds=3):
    """(max, min) of p @ v over the KL ball by grid search.

    A simplex grid with spacing ``step`` gives the feasible set shared by both
    problems. Local refinements follow: each round grids a box around several
    spread-out best points at a tenth of the previous spacing. Keeping several
    candidates matters because flat directions can leave the coarse optimum
    many cells away from the true one.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    coarse = _simplex_grid(len(q), step)
    feasible = coarse[_kl_rows(q, coarse) <= alpha]
    out = []
    for sign in (1.0, -1.0):
        points, vals, h = feasible, sign * (feasible @ v), step
        best = vals.max()
        for _ in range(rounds):
            centres = [points[i] for i in _spread_top(points, vals, candidates, 2.5 * h)]
            points = np.concatenate([_box(q, alpha, c, h) for c in centres])
            vals = sign * (points @ v)
            best = max(best, vals.max())
            h /= 10
        out.append(sign * best)
    return out[0], out[1]


def grid_ball_extreme(q, v, alpha, step=1e-3, sign=1.0):
    top, low = grid_ball_extremes(q, v, alpha, step)
    return top if sign > 0 else low


@pytest.fixture
def small_mdp():
    return make_random_mdp(3, 2, 2, 1.0, np.random.default_rng(7))


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
