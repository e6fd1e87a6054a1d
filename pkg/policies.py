"""
Pulling policies for budgeted bandits.
- Budgeted Thompson Sampling: Beta posteriors on reward and cost, pull argmax of the sampled ratio
- eps-first: spend eps*B exploring round-robin, then exploit the best empirical ratio
- PD-BwK variant, UCB-BV1 and the fractional KUBE variant (optimistic ratio indices)

Selectors are plain functions of the policy state; the classes at the bottom wrap
them behind one select()/update() interface used by the simulator.
Ratio conventions: a zero or negative denominator gives +inf, an arm never pulled
gives +inf, and argmax ties go to the lowest index.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from bandit_core import RngStream, bernoulli_trial

logger = logging.getLogger(__name__)

MODES = ("bernoulli", "general")
POLICY_NAMES = ("bts", "epsilon_first", "pd_bwk", "ucb_bv1", "kube_variant")
# indices of these policies never look at B, so one long run serves every smaller budget
ANYTIME_POLICIES = frozenset({"bts", "ucb_bv1", "kube_variant"})
DEFAULT_EPSILON = 0.1


class PolicyError(ValueError):
    """Invalid policy parameters or observations."""


# ==================== STATE ====================


@dataclass
class BtsState:
    """Success/failure counters of the reward and cost posteriors, per arm."""

    s_reward: np.ndarray
    f_reward: np.ndarray
    s_cost: np.ndarray
    f_cost: np.ndarray

    @classmethod
    def empty(cls, n_arms: int) -> "BtsState":
        return cls(*(np.zeros(n_arms, dtype=np.int64) for _ in range(4)))

    @property
    def n_arms(self) -> int:
        return len(self.s_reward)

    @property
    def pulls(self) -> np.ndarray:
        return self.s_reward + self.f_reward


@dataclass
class EmpiricalState:
    """Pull counts and cumulative reward/cost, per arm."""

    counts: np.ndarray
    reward_sum: np.ndarray
    cost_sum: np.ndarray

    @classmethod
    def empty(cls, n_arms: int) -> "EmpiricalState":
        return cls(
            counts=np.zeros(n_arms, dtype=np.int64),
            reward_sum=np.zeros(n_arms),
            cost_sum=np.zeros(n_arms),
        )

    @classmethod
    def from_averages(cls, mean_reward, mean_cost, counts) -> "EmpiricalState":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(
            counts=counts,
            reward_sum=np.asarray(mean_reward, dtype=float) * counts,
            cost_sum=np.asarray(mean_cost, dtype=float) * counts,
        )

    @property
    def n_arms(self) -> int:
        return len(self.counts)

    @property
    def total_pulls(self) -> int:
        return int(self.counts.sum())

    def record(self, arm: int, reward: float, cost: float) -> None:
        self.counts[arm] += 1
        self.reward_sum[arm] += reward
        self.cost_sum[arm] += cost

    def averages(self):
        """(r_bar, c_bar); entries of arms never pulled are 0 and must not be used."""
        n = np.maximum(self.counts, 1)
        return self.reward_sum / n, self.cost_sum / n

    def first_unpulled(self) -> Optional[int]:
        unpulled = np.flatnonzero(self.counts == 0)
        return int(unpulled[0]) if unpulled.size else None


def _argmax(index: np.ndarray) -> int:
    # np.argmax returns the first maximum, inf ties included
    return int(np.argmax(index))


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / den, np.inf)


# ==================== BUDGETED THOMPSON SAMPLING ====================


def bts_select(state: BtsState, rng: RngStream) -> int:
    """Draw theta_r, theta_c for every arm and pull argmax theta_r / theta_c.

    Exactly 2K Beta draws, in arm order, reward before cost.
    """
    k = state.n_arms
    alpha = np.empty(2 * k)
    beta = np.empty(2 * k)
    alpha[0::2] = state.s_reward + 1
    alpha[1::2] = state.s_cost + 1
    beta[0::2] = state.f_reward + 1
    beta[1::2] = state.f_cost + 1
    theta = rng.beta(alpha, beta)
    return _argmax(_ratio(theta[0::2], theta[1::2]))


def bts_update(
    state: BtsState, arm: int, reward: float, cost: float, mode: str, rng: RngStream
) -> BtsState:
    """Posterior update of the pulled arm; other arms are left unchanged.

    bernoulli mode uses the observations as they are, general mode first turns
    them into Bernoulli trials (reward trial, then cost trial).
    """
    if mode == "bernoulli":
        if reward not in (0.0, 1.0) or cost not in (0.0, 1.0):
            raise PolicyError(
                f"bernoulli mode needs binary observations, got reward={reward} cost={cost}"
            )
        r_tilde, c_tilde = int(reward), int(cost)
    elif mode == "general":
        r_tilde = bernoulli_trial(reward, rng)
        c_tilde = bernoulli_trial(cost, rng)
    else:
        raise PolicyError(f"unknown mode: {mode!r}")
    state.s_reward[arm] += r_tilde
    state.f_reward[arm] += 1 - r_tilde
    state.s_cost[arm] += c_tilde
    state.f_cost[arm] += 1 - c_tilde
    return state


# ==================== BASELINES ====================


def epsilon_first_select(
    state: EmpiricalState, spent_budget: float, budget: float, epsilon: float
) -> int:
    # exploration phase uses strict <, so spent == eps*B already exploits
    if spent_budget < epsilon * budget:
        return state.total_pulls % state.n_arms
    r_bar, c_bar = state.averages()
    index = np.where(state.counts > 0, _ratio(r_bar, c_bar), np.inf)
    return _argmax(index)


def pd_bwk_nu(budget: float, n_arms: int) -> float:
    """nu = 0.25 ln(BK), natural log."""
    return 0.25 * math.log(budget * n_arms)


def pd_bwk_radius(x: np.ndarray, n: np.ndarray, nu: float) -> np.ndarray:
    return np.sqrt(nu * x / n) + nu / n


def pdbwk_select(state: EmpiricalState, budget: float) -> int:
    """argmax of min(r_bar + phi, 1) / max(c_bar - phi, 0); arms are pulled once first."""
    unpulled = state.first_unpulled()
    if unpulled is not None:
        return unpulled
    nu = pd_bwk_nu(budget, state.n_arms)
    r_bar, c_bar = state.averages()
    n = state.counts.astype(float)
    num = np.minimum(r_bar + pd_bwk_radius(r_bar, n, nu), 1.0)
    den = np.maximum(c_bar - pd_bwk_radius(c_bar, n, nu), 0.0)
    return _argmax(_ratio(num, den))


def ucbbv1_index(state: EmpiricalState, t: float, lam: float) -> np.ndarray:
    """D_i = r_bar/c_bar + (1 + 1/lam) e_i / (lam - e_i), e_i = sqrt(ln(t-1)/n_i).

    Index of UCB-BV1 as originally published.
    """
    if lam <= 0:
        raise PolicyError(f"UCB-BV1 needs lambda > 0, got {lam}")
    r_bar, c_bar = state.averages()
    e = np.sqrt(math.log(t - 1) / state.counts)
    slack = lam - e
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.where(slack > 0, (1.0 + 1.0 / lam) * e / slack, np.inf)
    return _ratio(r_bar, c_bar) + bonus


def ucbbv1_select(state: EmpiricalState, t: float, lam: float) -> int:
    unpulled = state.first_unpulled()
    if unpulled is not None:
        return unpulled
    return _argmax(ucbbv1_index(state, t, lam))


def kube_variant_select(state: EmpiricalState, t: float) -> int:
    """argmax of (r_bar + sqrt(2 ln t / n)) / c_bar."""
    unpulled = state.first_unpulled()
    if unpulled is not None:
        return unpulled
    r_bar, c_bar = state.averages()
    bonus = np.sqrt(2.0 * math.log(t) / state.counts)
    return _argmax(_ratio(r_bar + bonus, c_bar))


# ==================== POLICY OBJECTS ====================


@dataclass(frozen=True)
class PolicyKind:
    """Which policy to run and its parameters (lam=None: caller supplies min expected cost)."""

    name: str
    epsilon: float = DEFAULT_EPSILON
    lam: Optional[float] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise PolicyError(f"unknown policy: {self.name!r} (use one of {', '.join(POLICY_NAMES)})")
        if self.name == "epsilon_first" and not 0.0 < self.epsilon < 1.0:
            raise PolicyError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.lam is not None and self.lam <= 0:
            raise PolicyError(f"lambda must be positive, got {self.lam}")

    @property
    def display_name(self) -> str:
        return self.label or self.name

    @property
    def anytime(self) -> bool:
        return self.name in ANYTIME_POLICIES


class BudgetedPolicy:
    """Common interface: select(rng, spent) -> arm, then update(arm, reward, cost, rng)."""

    name = "base"

    def __init__(self, n_arms: int):
        self.n_arms = n_arms

    def select(self, rng: RngStream, spent: float) -> int:
        raise NotImplementedError

    def update(self, arm: int, reward: float, cost: float, rng: RngStream) -> None:
        raise NotImplementedError


class BtsPolicy(BudgetedPolicy):
    name = "bts"

    def __init__(self, n_arms: int, mode: str):
        super().__init__(n_arms)
        if mode not in MODES:
            raise PolicyError(f"unknown mode: {mode!r}")
        self.mode = mode
        self.state = BtsState.empty(n_arms)

    def select(self, rng, spent):
        return bts_select(self.state, rng)

    def update(self, arm, reward, cost, rng):
        bts_update(self.state, arm, reward, cost, self.mode, rng)


class _EmpiricalPolicy(BudgetedPolicy):
    def __init__(self, n_arms: int):
        super().__init__(n_arms)
        self.state = EmpiricalState.empty(n_arms)

    def update(self, arm, reward, cost, rng):
        self.state.record(arm, reward, cost)


class EpsilonFirstPolicy(_EmpiricalPolicy):
    name = "epsilon_first"

    def __init__(self, n_arms: int, budget: float, epsilon: float = DEFAULT_EPSILON):
        super().__init__(n_arms)
        self.budget = budget
        self.epsilon = epsilon

    def select(self, rng, spent):
        return epsilon_first_select(self.state, spent, self.budget, self.epsilon)


class PdBwkPolicy(_EmpiricalPolicy):
    name = "pd_bwk"

    def __init__(self, n_arms: int, budget: float):
        super().__init__(n_arms)
        self.budget = budget

    def select(self, rng, spent):
        return pdbwk_select(self.state, self.budget)


class UcbBv1Policy(_EmpiricalPolicy):
    name = "ucb_bv1"

    def __init__(self, n_arms: int, lam: float):
        super().__init__(n_arms)
        if lam <= 0:
            raise PolicyError(f"UCB-BV1 needs lambda > 0, got {lam}")
        self.lam = lam

    def select(self, rng, spent):
        return ucbbv1_select(self.state, self.state.total_pulls + 1, self.lam)


class KubeVariantPolicy(_EmpiricalPolicy):
    name = "kube_variant"

    def select(self, rng, spent):
        return kube_variant_select(self.state, self.state.total_pulls + 1)


def build_policy(
    kind: PolicyKind,
    n_arms: int,
    mode: str,
    budget: Optional[float] = None,
    min_cost: Optional[float] = None,
) -> BudgetedPolicy:
    """Fresh policy for one run. budget is required by eps-first and PD-BwK,
    min_cost by UCB-BV1 when kind.lam is not set."""
    if kind.name == "bts":
        return BtsPolicy(n_arms, mode)
    if kind.name == "kube_variant":
        return KubeVariantPolicy(n_arms)
    if kind.name == "ucb_bv1":
        lam = kind.lam if kind.lam is not None else min_cost
        if lam is None:
            raise PolicyError("UCB-BV1 needs lambda or the minimum expected cost")
        return UcbBv1Policy(n_arms, lam)
    if budget is None:
        raise PolicyError(f"{kind.name} needs the budget in advance")
    if kind.name == "epsilon_first":
        return EpsilonFirstPolicy(n_arms, budget, kind.epsilon)
    return PdBwkPolicy(n_arms, budget)
