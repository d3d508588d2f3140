from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import enumerate_policies, value_by_paths
from rfexplore.envs import LEFT, RIGHT, make_double_chain, make_random_mdp
from rfexplore.errors import DimensionError, ParameterError
from rfexplore.mdp import (
    TabularMDP,
    Trajectory,
    accumulate_pseudo_counts,
    eval_policy,
    monte_carlo_value,
    occupancy,
    plan_optimal,
    sample_episode,
    sigma,
    value_ceilings,
)


def single_state(H=3, gamma=1.0, A=1):
    return TabularMDP(P=np.ones((H, 1, A, 1)), r=np.ones((H, 1, A)), gamma=gamma)


def deterministic_chain(H=4, S=5):
    P = np.zeros((H, S, 2, S))
    for s in range(S):
        P[:, s, 0, max(s - 1, 0)] = 1.0
        P[:, s, 1, min(s + 1, S - 1)] = 1.0
    r = np.zeros((H, S, 2))
    r[:, S - 1] = 1.0
    return TabularMDP(P=P, r=r, initial_state=0)


mdp_params = st.tuples(
    st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.sampled_from([1.0, 0.9, 0.5]), st.integers(0, 10**6)
)


class TestConstruction:
    def test_shapes_exposed(self, small_mdp):
        assert (small_mdp.H, small_mdp.S, small_mdp.A) == (2, 3, 2)

    def test_bad_kernel_shape(self):
        with pytest.raises(DimensionError):
            TabularMDP(P=np.ones((2, 3, 2, 2)) / 2, r=np.zeros((2, 3, 2)))

    def test_bad_reward_shape(self):
        with pytest.raises(DimensionError):
            TabularMDP(P=np.ones((2, 2, 2, 2)) / 2, r=np.zeros((2, 2)))

    def test_rows_must_sum_to_one(self):
        P = np.ones((1, 2, 1, 2)) / 2
        P[0, 0, 0, 0] += 1e-9
        with pytest.raises(ParameterError):
            TabularMDP(P=P, r=np.zeros((1, 2, 1)))

    def test_negative_probability(self):
        P = np.zeros((1, 2, 1, 2))
        P[0, :, 0] = [1.5, -0.5]
        with pytest.raises(ParameterError):
            TabularMDP(P=P, r=np.zeros((1, 2, 1)))

    @pytest.mark.parametrize("value", [-0.1, 1.1])
    def test_reward_range(self, value):
        with pytest.raises(ParameterError):
            TabularMDP(P=np.ones((1, 1, 1, 1)), r=np.full((1, 1, 1), value))

    @pytest.mark.parametrize("gamma", [0.0, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ParameterError):
            single_state(gamma=gamma)

    def test_stationary_flag_requires_equal_kernels(self):
        P = np.zeros((2, 2, 1, 2))
        P[0, :, 0, 0] = 1.0
        P[1, :, 0, 1] = 1.0
        with pytest.raises(ParameterError):
            TabularMDP(P=P, r=np.zeros((2, 2, 1)), stationary=True)

    def test_arrays_are_read_only(self, small_mdp):
        with pytest.raises(ValueError):
            small_mdp.P[0, 0, 0, 0] = 1.0

    def test_initial_state_range(self):
        with pytest.raises(ParameterError):
            TabularMDP(P=np.ones((1, 1, 1, 1)), r=np.zeros((1, 1, 1)), initial_state=1)


class TestSigma:
    def test_undiscounted(self):
        assert sigma(4, 1.0) == 4.0

    def test_discounted_closed_form(self):
        assert sigma(3, 0.9) == pytest.approx((1 - 0.9**3) / 0.1, abs=1e-12)

    def test_ceilings_match_sigma(self):
        c = value_ceilings(np.full(5, 0.8))
        assert np.allclose(c, [sigma(5 - h, 0.8) for h in range(6)], atol=1e-12)


class TestEvalPolicy:
    def test_single_path_sum(self):
        assert eval_policy(single_state(), np.zeros((3, 1), dtype=int)).V[0, 0] == 3.0

    def test_discounted_single_path(self):
        v = eval_policy(single_state(gamma=0.9), np.zeros((3, 1), dtype=int)).V[0, 0]
        assert v == pytest.approx(2.71, abs=1e-12)

    def test_matches_path_enumeration(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            mdp = make_random_mdp(3, 2, 2, 1.0, rng)
            policy = rng.integers(0, 2, size=(2, 3))
            exact = value_by_paths(mdp, policy, mdp.r)
            assert eval_policy(mdp, policy).V[0, mdp.initial_state] == pytest.approx(exact, abs=1e-12)

    def test_discounted_path_enumeration(self):
        rng = np.random.default_rng(4)
        mdp = make_random_mdp(2, 2, 4, 0.7, rng)
        policy = rng.integers(0, 2, size=(4, 2))
        assert eval_policy(mdp, policy).V[0, 0] == pytest.approx(value_by_paths(mdp, policy, mdp.r), abs=1e-12)

    def test_policy_shape_error(self, small_mdp):
        with pytest.raises(DimensionError):
            eval_policy(small_mdp, np.zeros((3, 3), dtype=int))

    def test_reward_shape_error(self, small_mdp):
        with pytest.raises(DimensionError):
            eval_policy(small_mdp, np.zeros((2, 3), dtype=int), np.zeros((2, 3)))

    def test_action_out_of_range(self, small_mdp):
        with pytest.raises(ParameterError):
            eval_policy(small_mdp, np.full((2, 3), 2))

    def test_terminal_layer_zero(self, small_mdp):
        vt = eval_policy(small_mdp, np.zeros((2, 3), dtype=int))
        assert not vt.V[-1].any() and not vt.Q[-1].any()

    @settings(max_examples=40, deadline=None)
    @given(mdp_params)
    def test_bellman_consistency(self, params):
        S, A, H, gamma, seed = params
        rng = np.random.default_rng(seed)
        mdp = make_random_mdp(S, A, H, gamma, rng)
        policy = rng.integers(0, A, size=(H, S))
        reward = rng.random((H, S, A))
        vt = eval_policy(mdp, policy, reward)
        for h in range(H):
            q = reward[h] + gamma * mdp.P[h] @ vt.V[h + 1]
            assert np.max(np.abs(q - vt.Q[h])) <= 1e-12
            assert np.array_equal(vt.V[h], vt.Q[h][np.arange(S), policy[h]])

    @settings(max_examples=40, deadline=None)
    @given(mdp_params)
    def test_values_within_ceiling(self, params):
        S, A, H, gamma, seed = params
        rng = np.random.default_rng(seed)
        mdp = make_random_mdp(S, A, H, gamma, rng)
        vt = eval_policy(mdp, rng.integers(0, A, size=(H, S)))
        c = value_ceilings(mdp.step_discount)
        assert np.all(vt.V >= 0.0) and np.all(vt.V <= c[:, None] + 1e-12)


class TestPlanOptimal:
    def test_brute_force_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            mdp = make_random_mdp(3, 2, 2, 1.0, rng)
            best = max(eval_policy(mdp, pi).V[0, 0] for pi in enumerate_policies(2, 3, 2))
            assert plan_optimal(mdp)[1].V[0, 0] == pytest.approx(best, abs=1e-12)

    def test_single_action_equals_evaluation(self):
        rng = np.random.default_rng(2)
        mdp = make_random_mdp(4, 1, 3, 0.9, rng)
        only = np.zeros((3, 4), dtype=int)
        assert np.allclose(plan_optimal(mdp)[1].V, eval_policy(mdp, only).V, atol=0)

    def test_zero_reward(self, small_mdp):
        policy, vt = plan_optimal(small_mdp, np.zeros((2, 3, 2)))
        assert not vt.V.any()
        assert not policy.any()  # ties go to action 0

    def test_greedy_and_max(self, small_mdp):
        policy, vt = plan_optimal(small_mdp)
        assert np.array_equal(vt.V[:-1], vt.Q[:-1].max(axis=2))
        assert np.array_equal(policy, vt.Q[:-1].argmax(axis=2))

    @settings(max_examples=30, deadline=None)
    @given(mdp_params)
    def test_dominates_random_policies(self, params):
        S, A, H, gamma, seed = params
        rng = np.random.default_rng(seed)
        mdp = make_random_mdp(S, A, H, gamma, rng)
        v_star = plan_optimal(mdp)[1].V
        for _ in range(5):
            v = eval_policy(mdp, rng.integers(0, A, size=(H, S))).V
            assert np.all(v <= v_star + 1e-12)


class TestSampling:
    def test_deterministic_path(self):
        mdp = deterministic_chain()
        traj = sample_episode(mdp, np.ones((4, 5), dtype=int), np.random.default_rng(0))
        assert traj.states.tolist() == [0, 1, 2, 3, 4]
        assert traj.rewards.tolist() == [0, 0, 0, 0]
        assert len(traj) == 4

    def test_same_seed_same_trajectory(self, small_mdp):
        pi = np.zeros((2, 3), dtype=int)
        a = sample_episode(small_mdp, pi, np.random.default_rng(5))
        b = sample_episode(small_mdp, pi, np.random.default_rng(5))
        assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)

    def test_first_state_is_initial(self):
        mdp = make_double_chain(7, 4)
        traj = sample_episode(mdp, np.zeros((4, 7), dtype=int), np.random.default_rng(1))
        assert traj.states[0] == 3

    def test_slip_frequency(self):
        mdp = make_double_chain(7, 2)
        rng = np.random.default_rng(9)
        right = np.full((2, 7), RIGHT)
        moves = [sample_episode(mdp, right, rng).states[1] for _ in range(10_000)]
        assert np.mean(np.array(moves) == 4) == pytest.approx(0.9, abs=0.01)


class TestOccupancy:
    def test_deterministic_indicator(self):
        mdp = deterministic_chain()
        occ = occupancy(mdp, np.ones((4, 5), dtype=int))
        for h in range(4):
            expected = np.zeros((5, 2))
            expected[h, 1] = 1.0
            assert np.array_equal(occ[h], expected)

    @settings(max_examples=30, deadline=None)
    @given(mdp_params)
    def test_layers_sum_to_one(self, params):
        S, A, H, gamma, seed = params
        rng = np.random.default_rng(seed)
        mdp = make_random_mdp(S, A, H, gamma, rng)
        occ = occupancy(mdp, rng.integers(0, A, size=(H, S)))
        assert np.allclose(occ.sum(axis=(1, 2)), 1.0, atol=1e-12)

    def test_chain_hand_value(self):
        occ = occupancy(make_double_chain(7, 3), np.full((3, 7), RIGHT))
        assert occ[1, 4, RIGHT] == pytest.approx(0.9, abs=1e-15)
        assert occ[1, 2, RIGHT] == pytest.approx(0.1, abs=1e-15)
        assert occ[1, :, LEFT].sum() == 0.0

    def test_matches_monte_carlo_frequencies(self, small_mdp):
        rng = np.random.default_rng(0)
        pi = np.array([[0, 1, 1], [1, 0, 1]])
        occ = occupancy(small_mdp, pi)
        counts = np.zeros_like(occ)
        for _ in range(20_000):
            traj = sample_episode(small_mdp, pi, rng)
            counts[np.arange(2), traj.states[:-1], traj.actions] += 1
        assert np.max(np.abs(counts / 20_000 - occ)) < 0.02


class TestPseudoCounts:
    def test_empty_history(self):
        assert not accumulate_pseudo_counts([], shape=(2, 3, 2)).any()

    def test_empty_history_needs_shape(self):
        with pytest.raises(DimensionError):
            accumulate_pseudo_counts([])

    def test_identical_policies_scale(self, small_mdp):
        occ = occupancy(small_mdp, np.zeros((2, 3), dtype=int))
        assert np.allclose(accumulate_pseudo_counts([occ] * 5), 5 * occ, atol=1e-15)

    def test_mixed_policies_and_monotone(self, small_mdp):
        rng = np.random.default_rng(1)
        history = [occupancy(small_mdp, rng.integers(0, 2, size=(2, 3))) for _ in range(6)]
        running = np.zeros((2, 3, 2))
        prev = running.copy()
        for k, occ in enumerate(history, start=1):
            running = running + occ
            total = accumulate_pseudo_counts(history[:k])
            assert np.allclose(total, running, atol=1e-15)
            assert np.all(total >= prev)
            prev = total

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            accumulate_pseudo_counts([np.zeros((1, 2, 2)), np.zeros((1, 3, 2))])


class TestMonteCarlo:
    def test_deterministic_exact(self):
        mdp = deterministic_chain(H=5)
        mean, se = monte_carlo_value(mdp, np.ones((5, 5), dtype=int), None, 50, np.random.default_rng(0))
        assert mean == 1.0 and se == 0.0

    def test_zero_reward(self, small_mdp):
        mean, _ = monte_carlo_value(small_mdp, np.zeros((2, 3), dtype=int), np.zeros((2, 3, 2)), 100,
                                    np.random.default_rng(0))
        assert mean == 0.0

    def test_within_four_standard_errors(self):
        rng = np.random.default_rng(21)
        mdp = make_random_mdp(4, 2, 5, 0.9, rng)
        pi = rng.integers(0, 2, size=(5, 4))
        mean, se = monte_carlo_value(mdp, pi, None, 10_000, rng)
        assert abs(mean - eval_policy(mdp, pi).V[0, 0]) <= 4 * se

    def test_needs_rollouts(self, small_mdp):
        with pytest.raises(ParameterError):
            monte_carlo_value(small_mdp, np.zeros((2, 3), dtype=int), None, 0, np.random.default_rng(0))


def test_trajectory_length():
    t = Trajectory(np.array([0, 1, 2]), np.array([0, 1]))
    assert len(t) == 2 and t.rewards is None
