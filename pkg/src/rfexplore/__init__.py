"""Reward-free exploration and best-policy identification for tabular episodic MDPs."""
from .baselines import run_generative_model, run_random_policy
from .bpi import (
    ConfidenceBounds,
    boost_and_select,
    boosting_rollouts,
    bpi_recommend,
    bpi_sampling_policy,
    bpi_should_stop,
    compute_q_confidence,
    run_bpi_ucrl,
)
from .confidence import (
    ThresholdSpec,
    bernstein_kl_upper,
    beta,
    cnt_pseudo_bound_holds,
    kl_ball_max,
    kl_ball_min,
    kl_categorical,
    pinsker_l1,
)
from .empirical import EmpiricalState, update_counts
from .envs import add_initial_state, make_double_chain, make_gridworld, make_random_mdp
from .errors import ConfigError, DimensionError, ParameterError
from .mdp import TabularMDP, Trajectory, ValueTable, eval_policy, occupancy, plan_optimal, sample_episode
from .rf import (
    RFConfig,
    compute_error_bounds,
    compute_w_bounds,
    greedy_policy,
    rf_should_stop,
    run_rf_express,
    run_rf_ucrl,
    verify_error_dominance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
