import math

import numpy as np
import pytest

from bandit_core import make_rng
from policies import (
    BtsState,
    EmpiricalState,
    PolicyError,
    PolicyKind,
    UcbBv1Policy,
    build_policy,
    bts_select,
    bts_update,
    epsilon_first_select,
    kube_variant_select,
    pd_bwk_nu,
    pdbwk_select,
    ucbbv1_index,
    ucbbv1_select,
)


def frequencies(state, n, seed, k):
    rng = make_rng(seed)
    counts = np.bincount([bts_select(state, rng) for _ in range(n)], minlength=k)
    return counts / n


def test_bts_concentrated_posterior_wins():
    state = BtsState.empty(2)
    state.s_reward[0] = 10**6
    state.f_cost[0] = 10**6
    freq = frequencies(state, 10**4, seed=1, k=2)
    assert freq[0] >= 0.99


def test_bts_identical_counters_are_symmetric():
    state = BtsState(
        s_reward=np.array([5, 5]), f_reward=np.array([5, 5]),
        s_cost=np.array([5, 5]), f_cost=np.array([5, 5]),
    )
    freq = frequencies(state, 10**4, seed=2, k=2)
    assert abs(freq[0] - 0.5) < 0.02


def test_bts_select_draws_2k_betas_in_arm_order():
    state = BtsState.empty(3)
    state.s_reward[:] = [1, 2, 3]
    state.f_cost[:] = [4, 0, 2]
    rng = make_rng(17)
    arm = bts_select(state, rng)

    mirror = make_rng(17)
    theta = [
        mirror.beta(a, b)
        for a, b in [(2, 1), (1, 5), (3, 1), (1, 1), (4, 1), (1, 3)]
    ]
    expected = int(np.argmax([theta[0] / theta[1], theta[2] / theta[3], theta[4] / theta[5]]))
    assert arm == expected
    assert rng.random() == mirror.random()


def test_bts_update_bernoulli():
    state = BtsState.empty(3)
    bts_update(state, 0, 1.0, 0.0, "bernoulli", make_rng(0))
    assert state.s_reward.tolist() == [1, 0, 0]
    assert state.f_reward.tolist() == [0, 0, 0]
    assert state.s_cost.tolist() == [0, 0, 0]
    assert state.f_cost.tolist() == [1, 0, 0]
    assert state.pulls.tolist() == [1, 0, 0]


def test_bts_update_bernoulli_rejects_fractional_observation():
    with pytest.raises(PolicyError):
        bts_update(BtsState.empty(2), 0, 0.5, 1.0, "bernoulli", make_rng(0))


def test_bts_update_general_zero_observations():
    state = BtsState.empty(2)
    rng = make_rng(4)
    for _ in range(200):
        bts_update(state, 1, 0.0, 0.0, "general", rng)
    assert state.f_reward[1] == 200 and state.f_cost[1] == 200
    assert state.s_reward[1] == 0 and state.s_cost[1] == 0


def test_bts_update_general_is_unbiased():
    state = BtsState.empty(2)
    rng = make_rng(5)
    n = 10**5
    for _ in range(n):
        bts_update(state, 0, 0.37, 1.0, "general", rng)
    assert abs(state.s_reward[0] / n - 0.37) < 0.006
    assert state.s_cost[0] == n


def test_epsilon_first_explores_round_robin():
    state = EmpiricalState.empty(4)
    picks = []
    for _ in range(8):
        arm = epsilon_first_select(state, 50, 1000, 0.1)
        picks.append(arm)
        state.record(arm, 1.0, 1.0)
    assert picks == [0, 1, 2, 3, 0, 1, 2, 3]


def test_epsilon_first_boundary_exploits():
    state = EmpiricalState.from_averages([0.5, 0.4], [0.5, 0.2], [5, 5])
    # total_pulls % K would give arm 0; exploitation picks the better ratio
    assert epsilon_first_select(state, 100.0, 1000, 0.1) == 1
    assert epsilon_first_select(state, 99.0, 1000, 0.1) == 0


def test_epsilon_first_unpulled_arm_is_infinite():
    state = EmpiricalState.from_averages([0.9, 0.0], [0.1, 0.0], [10, 0])
    assert epsilon_first_select(state, 500.0, 1000, 0.1) == 1


def test_pd_bwk_nu_uses_natural_log():
    assert pd_bwk_nu(50000, 10) == pytest.approx(0.25 * math.log(500000))
    assert pd_bwk_nu(50000, 10) == pytest.approx(3.2806, abs=1e-4)


def test_pdbwk_pulls_each_arm_first():
    state = EmpiricalState.from_averages([0.5, 0.0, 0.5], [0.5, 0.0, 0.5], [3, 0, 3])
    assert pdbwk_select(state, 1000) == 1


def test_pdbwk_large_counts_follow_empirical_ratio():
    state = EmpiricalState.from_averages([0.5, 0.3], [0.5, 0.5], [10**12, 10**12])
    assert pdbwk_select(state, 1000) == 0
    state = EmpiricalState.from_averages([0.3, 0.5], [0.5, 0.5], [10**12, 10**12])
    assert pdbwk_select(state, 1000) == 1


def test_pdbwk_clamped_cost_gives_infinite_index():
    # arm 0's optimistic cost is clamped to 0, so it wins despite worse means
    state = EmpiricalState.from_averages([0.1, 0.9], [0.9, 0.1], [1, 10**9])
    assert pdbwk_select(state, 1000) == 0


def test_ucbbv1_tie_goes_to_lowest_index():
    state = EmpiricalState.from_averages([0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [1, 1, 1])
    assert ucbbv1_select(state, 4, 0.5) == 0


def test_ucbbv1_zero_slack_is_infinite():
    t, n = 5, 4
    lam = math.sqrt(math.log(t - 1) / n)
    state = EmpiricalState.from_averages([0.1, 0.9], [0.9, 0.1], [n, 10**9])
    index = ucbbv1_index(state, t, lam)
    assert math.isinf(index[0])
    assert ucbbv1_select(state, t, lam) == 0


def test_ucbbv1_large_counts_follow_empirical_ratio():
    state = EmpiricalState.from_averages([0.3, 0.5], [0.5, 0.5], [10**15, 10**15])
    index = ucbbv1_index(state, 10, 0.5)
    assert index.tolist() == pytest.approx([0.6, 1.0], abs=1e-6)


def test_ucbbv1_rejects_nonpositive_lambda():
    state = EmpiricalState.from_averages([0.5, 0.5], [0.5, 0.5], [1, 1])
    with pytest.raises(PolicyError):
        ucbbv1_index(state, 3, 0.0)
    with pytest.raises(PolicyError):
        UcbBv1Policy(2, -1.0)


def test_kube_t1_is_plain_ratio():
    state = EmpiricalState.from_averages([0.3, 0.5], [0.5, 0.5], [1, 1])
    assert kube_variant_select(state, 1) == 1


def test_kube_bonus_favours_rarely_pulled_arm():
    state = EmpiricalState.from_averages([0.5, 0.5], [1.0, 1.0], [1, 100])
    assert kube_variant_select(state, 100) == 0


def test_kube_zero_cost_is_infinite():
    state = EmpiricalState.from_averages([0.9, 0.1], [0.5, 0.0], [10, 10])
    assert kube_variant_select(state, 20) == 1


def test_policy_kind_validation():
    with pytest.raises(PolicyError):
        PolicyKind("ucb2")
    with pytest.raises(PolicyError):
        PolicyKind("epsilon_first", epsilon=1.0)
    with pytest.raises(PolicyError):
        PolicyKind("ucb_bv1", lam=0.0)
    assert PolicyKind("bts").display_name == "bts"
    assert PolicyKind("bts", label="BTS").display_name == "BTS"
    assert PolicyKind("ucb_bv1").anytime and PolicyKind("kube_variant").anytime
    assert not PolicyKind("pd_bwk").anytime


def test_build_policy_requirements():
    with pytest.raises(PolicyError):
        build_policy(PolicyKind("epsilon_first"), 3, "bernoulli")
    with pytest.raises(PolicyError):
        build_policy(PolicyKind("ucb_bv1"), 3, "bernoulli")
    with pytest.raises(PolicyError):
        build_policy(PolicyKind("bts"), 3, "poisson")
    agent = build_policy(PolicyKind("ucb_bv1"), 3, "bernoulli", min_cost=0.2)
    assert agent.lam == 0.2
    agent = build_policy(PolicyKind("ucb_bv1", lam=0.1), 3, "bernoulli", min_cost=0.2)
    assert agent.lam == 0.1


def test_empirical_policies_pull_every_arm_once_first():
    for name in ("pd_bwk", "ucb_bv1", "kube_variant"):
        agent = build_policy(PolicyKind(name), 4, "bernoulli", budget=100, min_cost=0.5)
        picks = []
        for _ in range(4):
            arm = agent.select(make_rng(0), 0.0)
            picks.append(arm)
            agent.update(arm, 1.0, 1.0, make_rng(0))
        assert picks == [0, 1, 2, 3], name


def test_bts_posterior_mean_after_successes():
    m = 20
    state = BtsState.empty(2)
    rng = make_rng(4)
    for _ in range(m):
        bts_update(state, 0, 1.0, 0.0, "bernoulli", rng)
    a, b = state.s_reward[0] + 1, state.f_reward[0] + 1
    n = 10**5
    theta = make_rng(5).beta(a, b, size=n)
    mean = (m + 1) / (m + 2)
    var = a * b / ((a + b) ** 2 * (a + b + 1))
    assert abs(theta.mean() - mean) <= 3 * math.sqrt(var / n)


def test_bts_selection_follows_arm_relabeling():
    state = BtsState(
        s_reward=np.array([3, 6, 2]), f_reward=np.array([5, 2, 4]),
        s_cost=np.array([4, 5, 1]), f_cost=np.array([4, 3, 5]),
    )
    perm = [2, 0, 1]
    relabeled = BtsState(*(getattr(state, f)[perm] for f in ("s_reward", "f_reward", "s_cost", "f_cost")))
    n = 3 * 10**4
    base = frequencies(state, n, seed=21, k=3)
    moved = frequencies(relabeled, n, seed=22, k=3)
    assert np.all(np.abs(moved - base[perm]) <= 0.015)


def random_empirical_state(rng, k):
    return EmpiricalState.from_averages(
        rng.uniform(0, 1, size=k), rng.uniform(0.05, 1, size=k), rng.integers(1, 60, size=k)
    )


def test_deterministic_baselines_are_pure_functions_of_state():
    rng = np.random.default_rng(12)
    selectors = {
        "epsilon_first": lambda s: epsilon_first_select(s, 50.0, 100.0, 0.1),
        "pd_bwk": lambda s: pdbwk_select(s, 1000),
        "ucb_bv1": lambda s: ucbbv1_select(s, s.total_pulls + 1, 0.2),
        "kube_variant": lambda s: kube_variant_select(s, s.total_pulls + 1),
    }
    for _ in range(200):
        k = int(rng.integers(2, 8))
        state = random_empirical_state(rng, k)
        snapshot = (state.counts.copy(), state.reward_sum.copy(), state.cost_sum.copy())
        for name, select in selectors.items():
            first = select(state)
            assert 0 <= first < k, name
            assert select(state) == first, name
            twin = EmpiricalState(*(x.copy() for x in snapshot))
            assert select(twin) == first, name
        assert np.array_equal(state.counts, snapshot[0])
        assert np.array_equal(state.reward_sum, snapshot[1])
        assert np.array_equal(state.cost_sum, snapshot[2])


def test_deterministic_policies_ignore_the_stream():
    rng = np.random.default_rng(3)
    state = random_empirical_state(rng, 5)
    for name in ("pd_bwk", "ucb_bv1", "kube_variant", "epsilon_first"):
        agent = build_policy(PolicyKind(name), 5, "bernoulli", budget=1000, min_cost=0.05)
        agent.state = EmpiricalState(state.counts.copy(), state.reward_sum.copy(), state.cost_sum.copy())
        picks = {agent.select(make_rng(seed), 500.0) for seed in range(20)}
        assert len(picks) == 1, name
