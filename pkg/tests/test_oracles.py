import pytest

from bandit_core import ArmModel, BanditInstance, DistributionSpec, generate_instance
from oracles import OracleEstimate, exhaustive_small_bandit_regret, mc_policy_value
from policies import PolicyKind


def bern(r, c):
    return ArmModel(DistributionSpec.bernoulli(r), DistributionSpec.bernoulli(c))


def test_estimate_from_samples():
    est = OracleEstimate.from_samples([1.0, 3.0, 5.0, 7.0])
    assert est.value == 4.0
    assert est.samples == 4
    assert est.standard_error == pytest.approx((20 / 3) ** 0.5 / 2)


def test_mc_deterministic_arm_is_exact():
    inst = BanditInstance(
        arms=(
            ArmModel(DistributionSpec.fixed(0.5), DistributionSpec.fixed(1.0)),
            bern(0.1, 0.9),
        )
    )
    est = mc_policy_value(inst, 0, 10, "general", 10**4, seed=0)
    assert est.value == 5.0
    assert est.standard_error == 0.0


def test_mc_rejects_few_episodes():
    inst = BanditInstance(arms=(bern(0.5, 0.5), bern(0.2, 0.5)))
    with pytest.raises(ValueError):
        mc_policy_value(inst, 0, 10, "bernoulli", 999, seed=0)


def test_mc_matches_ratio_times_budget():
    inst = BanditInstance(arms=(bern(0.5, 0.5), bern(0.2, 0.5)))
    est = mc_policy_value(inst, 0, 50, "bernoulli", 2 * 10**4, seed=3)
    assert abs(est.value - 50.0) <= 3 * est.standard_error


def test_mc_general_arm_respects_lower_bound():
    inst = generate_instance(12, 3, "multinomial")
    arm = inst.optimal_arm
    budget = 40
    est = mc_policy_value(inst, arm, budget, "general", 10**4, seed=8)
    assert est.value >= inst.ratios[arm] * (budget - 1) - 3 * est.standard_error
    # and never above the general-bandit optimum
    assert est.value <= inst.ratios[arm] * (budget + 1) + 3 * est.standard_error


def test_exhaustive_preconditions():
    three = BanditInstance(arms=(bern(0.5, 0.5), bern(0.2, 0.5), bern(0.3, 0.5)))
    two = BanditInstance(arms=(bern(0.5, 0.5), bern(0.2, 0.5)))
    with pytest.raises(ValueError):
        exhaustive_small_bandit_regret(three, PolicyKind("bts"), 5, range(10))
    with pytest.raises(ValueError):
        exhaustive_small_bandit_regret(two, PolicyKind("bts"), 6, range(10))
    with pytest.raises(ValueError):
        exhaustive_small_bandit_regret(generate_instance(1, 2, "multinomial"), PolicyKind("bts"), 5, range(10))


def test_exhaustive_identical_arms_have_zero_decomposition():
    same = BanditInstance(arms=(bern(0.4, 0.6), bern(0.4, 0.6)))
    summary = exhaustive_small_bandit_regret(same, PolicyKind("bts"), 5, range(200))
    assert summary.decomposed.value == 0.0
    assert summary.production_decomposed.value == 0.0


def test_exhaustive_regret_agrees_with_decomposition():
    inst = BanditInstance(arms=(bern(0.5, 0.5), bern(0.25, 0.5)))
    summary = exhaustive_small_bandit_regret(inst, PolicyKind("bts"), 5, range(5000))
    assert summary.z <= 4.0
    assert summary.production_decomposed.value == pytest.approx(summary.decomposed.value)
