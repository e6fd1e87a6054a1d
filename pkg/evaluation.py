"""
Budget accounting and regret.
- run_trajectory: play one policy until the budget is gone
- optimal_value: exact optimum (bernoulli) or its upper bound (general)
- pseudo_regret: realized regret plus the per-arm pull decomposition
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

from bandit_core import ArmStreams, BanditInstance, InvalidDistributionError, RngStream, pull
from policies import MODES, PolicyKind, build_policy

logger = logging.getLogger(__name__)

# runs longer than ROUND_CAP_FACTOR * B / min expected cost are aborted
ROUND_CAP_FACTOR = 100


class RunawayLoopError(RuntimeError):
    """A run hit the round cap before spending its budget."""


@dataclass(frozen=True)
class Checkpoint:
    budget: int
    total_reward: float
    total_cost: float
    stopping_time: int
    pulls: Tuple[int, ...]


@dataclass(frozen=True)
class Trajectory:
    """Record of one run. pulls[i] is T_i, sum(pulls) == stopping_time."""

    stopping_time: int
    pulls: Tuple[int, ...]
    total_reward: float
    total_cost: float
    checkpoints: Tuple[Checkpoint, ...] = ()

    def at_budget(self, budget: int) -> "Trajectory":
        """The run as it would have ended with `budget` (must be a recorded checkpoint)."""
        for cp in self.checkpoints:
            if cp.budget == budget:
                return Trajectory(
                    stopping_time=cp.stopping_time,
                    pulls=cp.pulls,
                    total_reward=cp.total_reward,
                    total_cost=cp.total_cost,
                )
        raise KeyError(f"no checkpoint recorded at budget {budget}")


@dataclass(frozen=True)
class RegretBreakdown:
    regret: float
    decomposed: float
    kind: str


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown mode: {mode!r} (use bernoulli or general)")


def round_cap(instance: BanditInstance, budget: float) -> int:
    return math.ceil(ROUND_CAP_FACTOR * budget / instance.min_cost_mean)


def run_trajectory(
    instance: BanditInstance,
    policy: PolicyKind,
    budget: int,
    mode: str,
    rng: RngStream,
    checkpoints: Optional[Iterable[int]] = None,
    environment: Optional[ArmStreams] = None,
) -> Trajectory:
    """Select, pull, pay, update while budget remains.

    A pull whose cost exceeds the remaining budget still counts as a round and
    its cost is paid, but its reward is forfeited and the game stops.
    checkpoints (each <= budget) snapshot the run as a fresh run with that
    smaller budget would have ended; only meaningful for policies that never
    look at B.
    environment, when given, supplies the rewards and costs from per-arm
    streams; rng then only feeds the policy. Without it both come from rng.
    """
    _check_mode(mode)
    if budget <= 0 or int(budget) != budget:
        raise ValueError(f"budget must be a positive integer, got {budget}")
    if mode == "bernoulli" and not instance.is_binary:
        raise InvalidDistributionError("bernoulli mode needs binary reward and cost distributions")
    if environment is not None and environment.instance != instance:
        raise ValueError("environment streams belong to a different instance")
    marks = sorted(set(int(b) for b in (checkpoints or ())))
    if marks and (marks[0] <= 0 or marks[-1] > budget):
        raise ValueError(f"checkpoints must lie in (0, {budget}], got {marks}")

    agent = build_policy(
        policy, instance.n_arms, mode, budget=budget, min_cost=instance.min_cost_mean
    )
    cap = round_cap(instance, budget)
    pulls = [0] * instance.n_arms
    spent = 0.0
    total_reward = 0.0
    rounds = 0
    recorded = []
    next_mark = 0

    while budget - spent > 0:
        if rounds >= cap:
            raise RunawayLoopError(
                f"{policy.display_name}: {rounds} rounds without exhausting budget {budget}"
            )
        arm = agent.select(rng, spent)
        if environment is None:
            reward, cost = pull(instance, arm, rng)
        else:
            reward, cost = environment.pull(arm)
        rounds += 1
        pulls[arm] += 1
        while next_mark < len(marks) and spent + cost >= marks[next_mark]:
            mark = marks[next_mark]
            gained = 0.0 if cost > mark - spent else reward
            recorded.append(
                Checkpoint(mark, total_reward + gained, spent + cost, rounds, tuple(pulls))
            )
            next_mark += 1
        if cost <= budget - spent:
            total_reward += reward
        spent += cost
        agent.update(arm, reward, cost, rng)

    return Trajectory(
        stopping_time=rounds,
        pulls=tuple(pulls),
        total_reward=total_reward,
        total_cost=spent,
        checkpoints=tuple(recorded),
    )


def regret_kind(mode: str) -> str:
    _check_mode(mode)
    return "exact" if mode == "bernoulli" else "upper_bound"


def optimal_value(instance: BanditInstance, budget: float, mode: str) -> float:
    """R* = rho_opt * B for bernoulli bandits; rho_opt * (B + 1) bounds it for general ones."""
    _check_mode(mode)
    if mode == "bernoulli":
        return instance.optimal_ratio * budget
    return instance.optimal_ratio * (budget + 1)


def fixed_arm_lower_bound(instance: BanditInstance, budget: float) -> float:
    """Expected reward guaranteed by always pulling the optimal arm: rho_opt * (B - 1)."""
    return instance.optimal_ratio * (budget - 1)


def pull_decomposition(instance: BanditInstance, pulls: Tuple[int, ...], mode: str) -> float:
    """sum over suboptimal i of mu_i^c * Delta_i * T_i (+ 2 rho_opt for general bandits)."""
    _check_mode(mode)
    total = math.fsum(
        instance.cost_means[i] * instance.gaps[i] * pulls[i]
        for i in range(instance.n_arms)
        if i != instance.optimal_arm
    )
    if mode == "general":
        total += 2.0 * instance.optimal_ratio
    return total


def pseudo_regret(
    instance: BanditInstance, traj: Trajectory, budget: float, mode: str
) -> RegretBreakdown:
    return RegretBreakdown(
        regret=optimal_value(instance, budget, mode) - traj.total_reward,
        decomposed=pull_decomposition(instance, traj.pulls, mode),
        kind=regret_kind(mode),
    )
