"""
Closed-form quantities from the regret analysis of budgeted Thompson sampling.
- delta/epsilon ratio gaps and the learning length L_i = 2 ln B / delta_i^2
- leading ln B coefficients of the BTS and UCB-BV1 regret bounds
- regime of the hidden per-arm term (only its order is reported, never a number)
- Beta CDF through the exact binomial tail sum
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp

from bandit_core import BanditInstance

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 1.0 / math.sqrt(2.0)
PHI_HIGH_COST = "μ1c+ε ≥ 1: O(1/ε⁴)"
PHI_LOW_COST = "μ1c+ε < 1: O(1/(ε⁶(1−μ1c−ε)))"


class DegenerateInstanceError(ValueError):
    """The instance makes a bound vacuous (ties for the optimal arm, zero denominators)."""


@dataclass(frozen=True)
class ArmGap:
    arm: int
    ratio_gap: float
    delta_gap: float
    epsilon_gap: float
    learning_length: float
    pulls_leading: float
    phi_regime: str
    phi_argument: float


@dataclass(frozen=True)
class GapReport:
    gamma: float
    budget: float
    optimal_arm: int
    arms: Tuple[ArmGap, ...]
    tied_arms: Tuple[int, ...] = ()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(a) for a in self.arms])


def _check_gamma(gamma: float, allow_one: bool = False) -> None:
    upper_ok = gamma <= 1.0 if allow_one else gamma < 1.0
    if not (gamma > 0.0 and upper_ok):
        interval = "(0,1]" if allow_one else "(0,1)"
        raise ValueError(f"gamma must lie in {interval}, got {gamma}")


def _suboptimal_arms(instance: BanditInstance, strict: bool) -> List[int]:
    """Arms with a positive ratio gap; arms tied with the optimum raise (strict) or are logged."""
    tied = [
        i for i in range(instance.n_arms)
        if i != instance.optimal_arm and instance.gaps[i] == 0.0
    ]
    if tied:
        msg = f"arms {tied} tie with optimal arm {instance.optimal_arm}; their bound terms are vacuous"
        if strict:
            raise DegenerateInstanceError(msg)
        logger.warning(msg + " and are excluded")
    return [i for i in range(instance.n_arms) if instance.gaps[i] > 0.0]


def delta_ratio_gap(instance: BanditInstance, arm: int, gamma: float) -> float:
    """gamma * mu_i^c * Delta_i / (rho_opt + 1)."""
    return gamma * instance.cost_means[arm] * instance.gaps[arm] / (instance.optimal_ratio + 1.0)


def epsilon_ratio_gap(instance: BanditInstance, arm: int, gamma: float) -> float:
    """(1 - gamma) * mu_opt^c * Delta_i / (rho_i + 1)."""
    opt_cost = instance.cost_means[instance.optimal_arm]
    return (1.0 - gamma) * opt_cost * instance.gaps[arm] / (instance.ratios[arm] + 1.0)


def phi_regime(instance: BanditInstance, epsilon: float) -> Tuple[str, float]:
    opt_cost = instance.cost_means[instance.optimal_arm]
    if opt_cost + epsilon >= 1.0:
        return PHI_HIGH_COST, 1.0 / epsilon**4
    return PHI_LOW_COST, 1.0 / (epsilon**6 * (1.0 - opt_cost - epsilon))


def gaps(instance: BanditInstance, gamma: float, budget: float) -> GapReport:
    _check_gamma(gamma)
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    log_budget = math.log(budget)
    rows = []
    for i in _suboptimal_arms(instance, strict=False):
        delta = delta_ratio_gap(instance, i, gamma)
        eps = epsilon_ratio_gap(instance, i, gamma)
        regime, argument = phi_regime(instance, eps)
        learning_length = 2.0 * log_budget / delta**2
        rows.append(
            ArmGap(
                arm=i,
                ratio_gap=instance.gaps[i],
                delta_gap=delta,
                epsilon_gap=eps,
                learning_length=learning_length,
                pulls_leading=1.0 + learning_length,
                phi_regime=regime,
                phi_argument=argument,
            )
        )
    tied = tuple(
        i for i in range(instance.n_arms)
        if i != instance.optimal_arm and instance.gaps[i] == 0.0
    )
    return GapReport(
        gamma=gamma,
        budget=budget,
        optimal_arm=instance.optimal_arm,
        arms=tuple(rows),
        tied_arms=tied,
    )


def expected_pulls_leading_term(instance: BanditInstance, gamma: float, budget: float) -> dict:
    """1 + 2 ln B / delta_i^2(gamma) per suboptimal arm."""
    return {a.arm: a.pulls_leading for a in gaps(instance, gamma, budget).arms}


def ratio_gap_identity_residual(instance: BanditInstance, arm: int, gamma: float) -> float:
    """|(mu_i^r + delta)/(mu_i^c - delta) - (mu_opt^r - eps)/(mu_opt^c + eps)|; zero up to rounding."""
    _check_gamma(gamma)
    if arm == instance.optimal_arm or instance.gaps[arm] <= 0.0:
        raise DegenerateInstanceError(f"arm {arm} is not strictly suboptimal")
    delta = delta_ratio_gap(instance, arm, gamma)
    eps = epsilon_ratio_gap(instance, arm, gamma)
    den = instance.cost_means[arm] - delta
    if den <= 0.0:
        raise DegenerateInstanceError(f"mu_c - delta = {den} is not positive for arm {arm}")
    opt = instance.optimal_arm
    lhs = (instance.reward_means[arm] + delta) / den
    rhs = (instance.reward_means[opt] - eps) / (instance.cost_means[opt] + eps)
    return abs(lhs - rhs)


def bts_lnB_constant(
    instance: BanditInstance, gamma: float = DEFAULT_GAMMA, strict: bool = True
) -> float:
    """sum_i 2 / (gamma^2 mu_i^c Delta_i) * (rho_opt + 1)^2 over strictly suboptimal arms."""
    _check_gamma(gamma, allow_one=True)
    scale = 2.0 * (instance.optimal_ratio + 1.0) ** 2 / gamma**2
    return math.fsum(
        scale / (instance.cost_means[i] * instance.gaps[i])
        for i in _suboptimal_arms(instance, strict)
    )


def ucbbv1_lnB_constant(instance: BanditInstance, strict: bool = True) -> float:
    """Lower bound on the ln B coefficient of UCB-BV1's regret bound."""
    mu_min = instance.min_cost_mean
    opt = instance.optimal_arm
    opt_reward = instance.reward_means[opt]
    first, second = [], []
    for i in _suboptimal_arms(instance, strict):
        gap = instance.gaps[i]
        term = (2.0 + 2.0 / mu_min + gap) / (gap * mu_min)
        first.append(term**2)
        if instance.reward_means[i] < opt_reward:
            second.append((opt_reward - instance.reward_means[i]) * term)
    return instance.optimal_ratio * math.fsum(first) + math.fsum(second)


def regret_bound_leading_term(instance: BanditInstance, gamma: float, budget: float) -> float:
    """bts_lnB_constant * ln B: the part of the BTS bound with explicit constants."""
    return bts_lnB_constant(instance, gamma, strict=False) * math.log(budget)


def beta_binomial_cdf(alpha: int, beta: int, y: float) -> float:
    """Beta(alpha, beta) CDF at y for integer parameters.

    F_Beta(y) = P(Binomial(alpha+beta-1, y) >= alpha). Terms are summed in log
    space, over whichever tail carries less mass.
    """
    if int(alpha) != alpha or int(beta) != beta or alpha < 1 or beta < 1:
        raise ValueError(f"alpha and beta must be positive integers, got {alpha}, {beta}")
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"y must lie in [0,1], got {y}")
    alpha, beta = int(alpha), int(beta)
    if y == 0.0:
        return 0.0
    if y == 1.0:
        return 1.0
    n = alpha + beta - 1
    k = np.arange(n + 1)
    log_pmf = (
        gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        + k * math.log(y) + (n - k) * math.log1p(-y)
    )
    if alpha > n * y:
        return float(min(1.0, math.exp(logsumexp(log_pmf[alpha:]))))
    return float(max(0.0, -math.expm1(logsumexp(log_pmf[:alpha]))))


def constants_report(instance: BanditInstance, gamma: float, budget: float):
    """Per-arm gap table plus a one-row summary of the bound constants."""
    report = gaps(instance, gamma, budget)
    summary = pd.DataFrame(
        [
            {
                "gamma": gamma,
                "budget": budget,
                "optimal_arm": instance.optimal_arm,
                "bts_lnB_constant": bts_lnB_constant(instance, gamma, strict=False),
                "bts_lnB_constant_reference_gamma": bts_lnB_constant(
                    instance, DEFAULT_GAMMA, strict=False
                ),
                "ucbbv1_lnB_constant": ucbbv1_lnB_constant(instance, strict=False),
                "bts_leading_term": regret_bound_leading_term(instance, gamma, budget),
                "tied_arms": " ".join(str(i) for i in report.tied_arms),
            }
        ]
    )
    return report.to_frame(), summary
