"""Experiment orchestration: error curves, visit counts, stopping times and event coverage.

Configurations are flat JSON objects (see ``DEFAULTS`` for every key). Budgets are
counted in transitions; agents that act in episodes use ``ceil(n / H)`` episodes.
Every run derives its generator from the master seed through ``SeedSequence``
spawning, so results depend only on ``(config, master_seed)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from .baselines import generative_model_snapshots, random_policy_snapshots
from .bpi import bpi_sampling_policy, compute_q_confidence, run_bpi_ucrl
from .confidence import (
    PER_STEP,
    POOLED,
    ThresholdSpec,
    beta,
    bpi_sample_complexity_bound,
    kl_categorical,
    rf_sample_complexity_bound,
)
from .empirical import EmpiricalState
from .envs import make_double_chain, make_gridworld, make_random_mdp, random_reward
from .errors import ConfigError
from .mdp import TabularMDP, eval_policy_kernel, occupancy, plan_optimal, plan_optimal_kernel, sample_episode
from .rf import RFConfig, compute_error_bounds, greedy_policy, run_rf_express, run_rf_ucrl

SCHEMA_VERSION = 1

AGENTS = ("rp", "gm", "rf-ucrl", "rf-express", "bpi-ucrl")
ENVS = ("double_chain", "gridworld", "random")

DEFAULTS: dict[str, Any] = {
    "env": "double_chain",
    "L": 31,
    "side": 21,
    "S": 5,
    "A": 2,
    "H": 20,
    "slip": None,  # environment default when omitted
    "gamma": 1.0,
    "reward_cell": [16, 16],
    "start_cell": None,
    "env_seed": 0,
    "agents": ["rp", "gm", "rf-ucrl", "bpi-ucrl"],
    "epsilon": 0.1,
    "delta": 0.1,
    "clipped": False,
    "pooled": False,
    "budget": 5000,
    "checkpoints": None,
    "seeds": 4,
    "master_seed": 0,
    "epsilons": [0.8, 0.6, 0.4, 0.3],
    "reward_battery": 0,
    "require_stop": False,
    "out": "results",
}


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    L: int
    side: int
    S: int
    A: int
    H: int
    slip: float | None
    gamma: float
    reward_cell: tuple
    start_cell: tuple | None
    env_seed: int
    agents: tuple
    epsilon: float
    delta: float
    clipped: bool
    pooled: bool
    budget: int
    checkpoints: tuple
    seeds: int
    master_seed: int
    epsilons: tuple
    reward_battery: int
    require_stop: bool
    out: str

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        merged = {**DEFAULTS, **raw}
        try:
            values = _coerce(merged)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad configuration value: {exc}") from exc
        cfg = cls(**values)
        cfg.validate()
        return cfg

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(_plain(data))

    def validate(self) -> None:
        if self.env not in ENVS:
            raise ConfigError(f"unknown environment {self.env!r}; expected one of {ENVS}")
        bad = [a for a in self.agents if a not in AGENTS]
        if bad or not self.agents:
            raise ConfigError(f"unknown agents {bad}; expected names from {AGENTS}")
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        if self.budget < 0 or any(c < 0 for c in self.checkpoints):
            raise ConfigError("budget and checkpoints must be non-negative")
        if list(self.checkpoints) != sorted(self.checkpoints):
            raise ConfigError("checkpoints must be sorted ascending")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.epsilon <= 0.0 or any(e <= 0.0 for e in self.epsilons):
            raise ConfigError("epsilon values must be positive")
        if self.reward_battery < 0:
            raise ConfigError("reward_battery must be non-negative")

    @property
    def schedule(self) -> list[int]:
        marks = sorted(set(self.checkpoints) | {self.budget})
        return [n for n in marks if n <= self.budget]


def _coerce(m: dict) -> dict:
    out = dict(m)
    for key in ("L", "side", "S", "A", "H", "env_seed", "budget", "seeds", "master_seed", "reward_battery"):
        v = m[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise TypeError(f"{key} must be an integer")
    for key in ("gamma", "epsilon", "delta"):
        out[key] = float(m[key])
    out["slip"] = None if m["slip"] is None else float(m["slip"])
    for key in ("clipped", "pooled", "require_stop"):
        if not isinstance(m[key], bool):
            raise TypeError(f"{key} must be true or false")
    agents = m["agents"]
    if isinstance(agents, str):
        agents = [agents]
    out["agents"] = tuple(str(a).lower() for a in agents)
    ck = m["checkpoints"]
    out["checkpoints"] = tuple(int(c) for c in ck) if ck is not None else (m["budget"],)
    out["epsilons"] = tuple(float(e) for e in m["epsilons"])
    out["reward_cell"] = tuple(int(c) for c in m["reward_cell"])
    out["start_cell"] = None if m["start_cell"] is None else tuple(int(c) for c in m["start_cell"])
    out["env"] = str(m["env"])
    out["out"] = str(m["out"])
    return out


def _plain(data: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def build_env(cfg: ExperimentConfig) -> TabularMDP:
    try:
        if cfg.env == "double_chain":
            kw = {} if cfg.slip is None else {"slip": cfg.slip}
            return make_double_chain(cfg.L, cfg.H, gamma=cfg.gamma, **kw)
        if cfg.env == "gridworld":
            kw = {} if cfg.slip is None else {"slip": cfg.slip}
            return make_gridworld(cfg.side, cfg.H, reward_cell=cfg.reward_cell,
                                  start_cell=cfg.start_cell, gamma=cfg.gamma, **kw)
        return make_random_mdp(cfg.S, cfg.A, cfg.H, cfg.gamma, np.random.default_rng(cfg.env_seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def seed_streams(cfg: ExperimentConfig):
    """``(reward_rng, [per-seed list of per-agent generators])``."""
    rewards_ss, runs_ss = np.random.SeedSequence(cfg.master_seed).spawn(2)
    per_seed = []
    for child in runs_ss.spawn(cfg.seeds):
        per_seed.append({name: np.random.default_rng(ss) for name, ss in zip(AGENTS, child.spawn(len(AGENTS)))})
    return np.random.default_rng(rewards_ss), per_seed


def episodes_for(n: int, H: int) -> int:
    return -(-n // H)


def rf_config_for(cfg: ExperimentConfig, budget_episodes: int, epsilon: float | None = None) -> RFConfig:
    return RFConfig(epsilon=cfg.epsilon if epsilon is None else epsilon, delta=cfg.delta,
                    clipped=cfg.clipped, stationary_pooled=cfg.pooled, budget=budget_episodes)


def threshold_spec_for(cfg: ExperimentConfig, mdp: TabularMDP, pooled: bool | None = None) -> ThresholdSpec:
    pooled = cfg.pooled if pooled is None else pooled
    return ThresholdSpec(cfg.delta, mdp.S, mdp.A, mdp.H, POOLED if pooled else PER_STEP)


def collect_snapshots(cfg: ExperimentConfig, mdp: TabularMDP, agent: str, rng: np.random.Generator):
    """Data after each checkpoint, as ``(n, snapshot, extra)`` triples.

    ``snapshot`` is an :class:`EmpiricalState`, except for BPI-UCRL where it is the
    recommended policy; ``extra`` holds the stopping statistic when there is one.
    Curves run without a stopping rule.
    """
    schedule = cfg.schedule
    H = mdp.H
    if agent == "rp":
        return [(n, st, math.nan) for n, st in zip(schedule, random_policy_snapshots(mdp, schedule, rng))]
    if agent == "gm":
        snaps = generative_model_snapshots(mdp, schedule, rng, pooled=cfg.pooled and mdp.stationary)
        return [(n, st, math.nan) for n, st in zip(schedule, snaps)]
    marks = [episodes_for(n, H) for n in schedule]
    if agent == "bpi-ucrl":
        res = run_bpi_ucrl(mdp, None, cfg.epsilon, cfg.delta, threshold_spec_for(cfg, mdp), rng, marks[-1],
                           checkpoints=marks, stopping=False)
        by_t = {c["t"]: c for c in res.checkpoints}
        return [(n, by_t[t]["recommendation"], by_t[t]["gap"]) for n, t in zip(schedule, marks)]
    runner = run_rf_ucrl if agent == "rf-ucrl" else run_rf_express
    res = runner(mdp, rf_config_for(cfg, marks[-1]), threshold_spec_for(cfg, mdp, cfg.pooled and agent == "rf-ucrl"),
                 rng, checkpoints=marks, stopping=False)
    by_t = {c["t"]: c for c in res.checkpoints}
    return [(n, by_t[t]["state"], by_t[t]["stop_value"]) for n, t in zip(schedule, marks)]


def _battery(cfg: ExperimentConfig, mdp: TabularMDP, rng: np.random.Generator) -> list[np.ndarray]:
    return [mdp.r] + [random_reward(mdp.H, mdp.S, mdp.A, rng) for _ in range(cfg.reward_battery)]


def _empirical_errors(mdp, state: EmpiricalState, reward, v_star, pooled) -> tuple[float, float]:
    """``|V_hat* - V*|`` at the initial state and the true gap of the empirical greedy policy."""
    p_hat = state.p_hat(pooled=pooled)
    pi_hat, table = plan_optimal_kernel(p_hat, reward, mdp.step_discount)
    s1 = mdp.initial_state
    v_pi = eval_policy_kernel(mdp.P, reward, mdp.step_discount, pi_hat).V[0, s1]
    return abs(table.V[0, s1] - v_star), v_star - v_pi


def curve_records(cfg: ExperimentConfig) -> list[dict]:
    """One record per (agent, seed, reward, checkpoint)."""
    mdp = build_env(cfg)
    reward_rng, streams = seed_streams(cfg)
    rewards = _battery(cfg, mdp, reward_rng)
    s1 = mdp.initial_state
    v_star = [plan_optimal(mdp, r)[1].V[0, s1] for r in rewards]
    rows = []
    for seed, gens in enumerate(streams):
        for agent in cfg.agents:
            snaps = collect_snapshots(cfg, mdp, agent, gens[agent])
            for n, snap, stat in snaps:
                if agent == "bpi-ucrl":
                    gap = v_star[0] - eval_policy_kernel(mdp.P, mdp.r, mdp.step_discount, snap).V[0, s1]
                    rows.append(dict(agent=agent, seed=seed, reward_id=0, n=n, error=gap,
                                     policy_gap=gap, stop_value=stat))
                    continue
                pooled = cfg.pooled and agent in ("rf-ucrl", "gm") and mdp.stationary
                for rid, reward in enumerate(rewards):
                    err, gap = _empirical_errors(mdp, snap, reward, v_star[rid], pooled)
                    rows.append(dict(agent=agent, seed=seed, reward_id=rid, n=n, error=err,
                                     policy_gap=gap, stop_value=stat))
    return rows


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


CURVE_COLUMNS = ["agent", "reward_id", "n", "runs", "mean_error", "stderr_error", "mean_policy_gap",
                 "stderr_policy_gap"]


def run_error_curve(cfg: ExperimentConfig) -> list[dict]:
    """Mean and standard error of the estimation error per agent, reward and checkpoint."""
    records = curve_records(cfg)
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["agent"], r["reward_id"], r["n"]), []).append(r)
    order = {a: i for i, a in enumerate(cfg.agents)}
    table = []
    for key in sorted(groups, key=lambda k: (order[k[0]], k[1], k[2])):
        g = groups[key]
        me, se = _mean_se([r["error"] for r in g])
        mg, sg = _mean_se([r["policy_gap"] for r in g])
        table.append(dict(agent=key[0], reward_id=key[1], n=key[2], runs=len(g), mean_error=me,
                          stderr_error=se, mean_policy_gap=mg, stderr_policy_gap=sg))
    return table


VISIT_COLUMNS = ["agent", "state", "visits"]


def run_visit_counts(cfg: ExperimentConfig) -> list[dict]:
    """Visits per state at the final budget, summed over steps, actions and seeds."""
    mdp = build_env(cfg)
    _, streams = seed_streams(cfg)
    totals = {a: np.zeros(mdp.S, dtype=np.int64) for a in cfg.agents}
    final_only = cfg.with_overrides(checkpoints=[cfg.budget])
    for gens in streams:
        for agent in cfg.agents:
            if agent == "bpi-ucrl":
                res = run_bpi_ucrl(mdp, None, cfg.epsilon, cfg.delta, threshold_spec_for(cfg, mdp), gens[agent],
                                   episodes_for(cfg.budget, mdp.H), stopping=False)
                totals[agent] += res.state.state_visits()
                continue
            (_, st, _), = collect_snapshots(final_only, mdp, agent, gens[agent])
            totals[agent] += st.state_visits()
    return [dict(agent=a, state=s, visits=int(totals[a][s])) for a in cfg.agents for s in range(mdp.S)]


COMPLEXITY_RUN_COLUMNS = ["agent", "seed", "epsilon", "tau", "censored"]
COMPLEXITY_COLUMNS = ["agent", "epsilon", "runs", "stopped", "censored_fraction", "mean_tau", "stderr_tau",
                      "theorem_bound"]


def first_crossing(trace: np.ndarray, threshold: float) -> int | None:
    hits = np.flatnonzero(trace <= threshold)
    return int(hits[0]) if len(hits) else None


def complexity_records(cfg: ExperimentConfig) -> list[dict]:
    """Per-seed stopping times read off one long run at the smallest epsilon."""
    mdp = build_env(cfg)
    _, streams = seed_streams(cfg)
    eps = sorted(cfg.epsilons)
    T = episodes_for(cfg.budget, mdp.H)
    rows = []
    for seed, gens in enumerate(streams):
        for agent in cfg.agents:
            if agent in ("rp", "gm"):
                raise ConfigError(f"agent {agent!r} has no stopping rule")
            if agent == "bpi-ucrl":
                trace = run_bpi_ucrl(mdp, None, eps[0], cfg.delta, threshold_spec_for(cfg, mdp), gens[agent], T).gaps
                thresholds = eps
            else:
                runner = run_rf_ucrl if agent == "rf-ucrl" else run_rf_express
                pooled = cfg.pooled and agent == "rf-ucrl"
                trace = runner(mdp, rf_config_for(cfg, T, eps[0]), threshold_spec_for(cfg, mdp, pooled), gens[agent]).stop_values
                thresholds = [e / 2.0 for e in eps]
            for e, thr in zip(eps, thresholds):
                tau = first_crossing(trace, thr)
                rows.append(dict(agent=agent, seed=seed, epsilon=e, tau=tau, censored=tau is None))
    return rows


def theorem_bound(agent: str, mdp: TabularMDP, epsilon: float, delta: float) -> float:
    if agent == "rf-ucrl":
        return rf_sample_complexity_bound(mdp.S, mdp.A, mdp.H, epsilon, delta, mdp.gamma)
    if agent == "bpi-ucrl":
        return bpi_sample_complexity_bound(mdp.S, mdp.A, mdp.H, epsilon, delta, mdp.gamma)
    return math.nan


def run_sample_complexity(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Summary per (agent, epsilon) and the per-seed records; censored runs are counted separately."""
    runs = complexity_records(cfg)
    mdp = build_env(cfg)
    summary = []
    for agent in cfg.agents:
        for e in sorted(cfg.epsilons):
            group = [r for r in runs if r["agent"] == agent and r["epsilon"] == e]
            taus = [r["tau"] for r in group if r["tau"] is not None]
            mean, se = _mean_se(taus) if taus else (math.nan, math.nan)
            summary.append(dict(agent=agent, epsilon=e, runs=len(group), stopped=len(taus),
                                censored_fraction=1.0 - len(taus) / len(group), mean_tau=mean,
                                stderr_tau=se, theorem_bound=theorem_bound(agent, mdp, e, cfg.delta)))
    return summary, runs


COVERAGE_COLUMNS = ["agent", "runs", "episodes", "delta", "violations_kl", "violations_cnt",
                    "fraction_kl", "fraction_cnt", "tolerance_kl"]


def coverage_run(mdp: TabularMDP, agent: str, cfg: ExperimentConfig, episodes: int,
                 rng: np.random.Generator) -> tuple[bool, bool]:
    """Whether the KL event and the pseudo-count event held at every episode of one run."""
    spec = threshold_spec_for(cfg, mdp, pooled=False)
    rf_cfg = RFConfig(epsilon=cfg.epsilon, delta=cfg.delta, clipped=cfg.clipped, budget=episodes)
    state = EmpiricalState.empty(mdp.H, mdp.S, mdp.A)
    nbar = np.zeros((mdp.H, mdp.S, mdp.A))
    kl_ok, cnt_ok = True, True
    steps = np.arange(mdp.H)
    for _ in range(episodes):
        if agent == "rf-ucrl":
            policy = greedy_policy(compute_error_bounds(state, rf_cfg, spec, mdp.step_discount))
        elif agent == "bpi-ucrl":
            policy = bpi_sampling_policy(compute_q_confidence(state, mdp.r, spec, mdp.step_discount))
        else:
            raise ConfigError(f"coverage supports rf-ucrl and bpi-ucrl, not {agent!r}")
        nbar += occupancy(mdp, policy)
        traj = sample_episode(mdp, policy, rng)
        state.update(traj)
        s, a = traj.states[:-1], traj.actions
        n = state.n_sa[steps, s, a]
        if kl_ok:
            for h in range(mdp.H):
                q = state.n_sas[h, s[h], a[h]] / n[h]
                if n[h] * kl_categorical(q, mdp.P[h, s[h], a[h]]) > beta(n[h], spec):
                    kl_ok = False
                    break
        if cnt_ok and np.any(state.n_sa < nbar / 2.0 - spec.beta_cnt):
            cnt_ok = False
    return kl_ok, cnt_ok


def run_event_coverage(cfg: ExperimentConfig) -> list[dict]:
    """Fraction of runs in which each high-probability event failed at some episode."""
    mdp = build_env(cfg)
    _, streams = seed_streams(cfg)
    T = episodes_for(cfg.budget, mdp.H)
    out = []
    for agent in cfg.agents:
        fails_kl = fails_cnt = 0
        for gens in streams:
            kl_ok, cnt_ok = coverage_run(mdp, agent, cfg, T, gens[agent])
            fails_kl += not kl_ok
            fails_cnt += not cnt_ok
        runs = len(streams)
        p = cfg.delta / 2.0
        out.append(dict(agent=agent, runs=runs, episodes=T, delta=cfg.delta, violations_kl=fails_kl,
                        violations_cnt=fails_cnt, fraction_kl=fails_kl / runs, fraction_cnt=fails_cnt / runs,
                        tolerance_kl=p + 3.0 * math.sqrt(p * (1.0 - p) / runs)))
    return out


# -- serialisation -------------------------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v) if math.isfinite(v) else "null"
    return json.dumps(str(v))


def render_table(rows: list[dict], columns: list[str], fmt: str = "csv") -> str:
    """CSV with a header row, or JSON with identical fields; both carry ``schema_version``."""
    cols = ["schema_version"] + list(columns)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in rows:
            writer.writerow([format_value(SCHEMA_VERSION)] + [format_value(r.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        items = []
        for r in rows:
            body = ", ".join(f"{json.dumps(c)}: {_json_value(SCHEMA_VERSION if c == 'schema_version' else r.get(c))}"
                             for c in cols)
            items.append("    {" + body + "}")
        return "{\n  \"columns\": " + json.dumps(cols) + ",\n  \"rows\": [\n" + ",\n".join(items) + "\n  ]\n}\n"
    raise ConfigError(f"unknown output format {fmt!r}")


def write_table(rows: list[dict], columns: list[str], path: Path, fmt: str = "csv") -> Path:
    path = Path(path).with_suffix("." + fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_table(rows, columns, fmt))
    return path

