"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration errors, 3 when a run that had to
stop ran out of budget instead.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import harness
from .bpi import run_bpi_ucrl
from .errors import ConfigError
from .harness import ExperimentConfig, build_env, load_config, write_table
from .mdp import eval_policy, plan_optimal, plan_optimal_kernel
from .rf import run_rf_express, run_rf_ucrl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

PLAN_COLUMNS = ["step", "state", "optimal_action", "value"]
EXPLORE_COLUMNS = ["agent", "seed", "stopped", "tau", "episodes", "transitions", "stop_value",
                   "policy_gap", "wall_clock"]


def _plan(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    mdp = build_env(cfg)
    policy, table = plan_optimal(mdp)
    rows = [dict(step=h, state=s, optimal_action=int(policy[h, s]), value=float(table.V[h, s]))
            for h in range(mdp.H) for s in range(mdp.S)]
    path = write_table(rows, PLAN_COLUMNS, out / "plan", fmt)
    print(f"optimal initial value: {table.V[0, mdp.initial_state]:.17g}")
    print(f"wrote {path}")
    return EXIT_OK


def _explore(cfg: ExperimentConfig, out: Path, fmt: str) -> int:
    """One run per configured seed and agent, with the stopping rule active."""
    mdp = build_env(cfg)
    _, streams = harness.seed_streams(cfg)
    s1 = mdp.initial_state
    v_star = plan_optimal(mdp)[1].V[0, s1]
    T = harness.episodes_for(cfg.budget, mdp.H)
    rows = []
    for seed, gens in enumerate(streams):
        for agent in cfg.agents:
            start = time.perf_counter()
            if agent == "bpi-ucrl":
                res = run_bpi_ucrl(mdp, None, cfg.epsilon, cfg.delta, harness.threshold_spec_for(cfg, mdp), gens[agent], T)
                stopped, tau, state, stat = res.stopped, res.tau, res.state, float(res.gaps[-1])
                pi_hat = res.policy
            elif agent in ("rf-ucrl", "rf-express"):
                runner = run_rf_ucrl if agent == "rf-ucrl" else run_rf_express
                pooled = cfg.pooled and agent == "rf-ucrl"
                res = runner(mdp, harness.rf_config_for(cfg, T), harness.threshold_spec_for(cfg, mdp, pooled), gens[agent])
                stopped, tau, state, stat = res.stopped, res.tau, res.state, float(res.stop_values[-1])
                pi_hat = plan_optimal_kernel(state.p_hat(pooled), mdp.r, mdp.step_discount)[0]
            else:
                (_, state, _), = harness.collect_snapshots(cfg.with_overrides(checkpoints=[cfg.budget]),
                                                          mdp, agent, gens[agent])
                stopped, tau, stat = False, None, float("nan")
                pi_hat = plan_optimal_kernel(state.p_hat(), mdp.r, mdp.step_discount)[0]
            gap = v_star - eval_policy(mdp, pi_hat).V[0, s1]
            rows.append(dict(agent=agent, seed=seed, stopped=stopped, tau=tau, episodes=state.t,
                             transitions=state.transitions, stop_value=stat, policy_gap=gap,
                             wall_clock=time.perf_counter() - start))
    path = write_table(rows, EXPLORE_COLUMNS, out / "explore", fmt)
    print(f"wrote {path}")
    needs_stop = [r for r in rows if r["agent"] not in ("rp", "gm")]
    if cfg.require_stop and any(not r["stopped"] for r in needs_stop):
        print("budget exhausted before the stopping rule fired", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _curve(cfg, out, fmt):
    print(f"wrote {write_table(harness.run_error_curve(cfg), harness.CURVE_COLUMNS, out / 'curve', fmt)}")
    return EXIT_OK


def _visits(cfg, out, fmt):
    print(f"wrote {write_table(harness.run_visit_counts(cfg), harness.VISIT_COLUMNS, out / 'visits', fmt)}")
    return EXIT_OK


def _complexity(cfg, out, fmt):
    summary, runs = harness.run_sample_complexity(cfg)
    print(f"wrote {write_table(summary, harness.COMPLEXITY_COLUMNS, out / 'complexity', fmt)}")
    print(f"wrote {write_table(runs, harness.COMPLEXITY_RUN_COLUMNS, out / 'complexity_runs', fmt)}")
    if cfg.require_stop and any(r["censored"] for r in runs):
        print("some runs were censored by the budget", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _coverage(cfg, out, fmt):
    print(f"wrote {write_table(harness.run_event_coverage(cfg), harness.COVERAGE_COLUMNS, out / 'coverage', fmt)}")
    return EXIT_OK


COMMANDS = {
    "plan": (_plan, "exact planning on the configured environment"),
    "explore": (_explore, "single exploration run per seed and agent"),
    "curve": (_curve, "estimation error as a function of collected transitions"),
    "visits": (_visits, "per-state visit counts at the final budget"),
    "complexity": (_complexity, "stopping times over a grid of accuracies"),
    "coverage": (_coverage, "how often the high-probability events fail"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfexplore", description="Reward-free exploration experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to a JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(master_seed=args.seed, out=args.out)
        handler, _ = COMMANDS[args.command]
        return handler(cfg, Path(cfg.out), args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
