"""
Budgeted bandit environment.
- Reward/cost distributions supported on [0,1] (bernoulli, multinomial, fixed)
- Closed-form means, scalar and vectorized sampling
- Arm models and bandit instances (optimal arm, ratio gaps)
- Seeded PCG64 streams, one per run, and per-arm streams for paired runs
- Bernoulli-trial reduction of a [0,1] observation to {0,1}

Arm indices are 0-based. Stream usage per call:
  bernoulli / multinomial sample -> 1 uniform, fixed -> 0,
  pull -> reward draws then cost draws, bernoulli_trial -> 1 uniform.
"""

import bisect
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

RngStream = np.random.Generator

PROB_TOLERANCE = 1e-12
KINDS = ("bernoulli", "multinomial", "fixed")
FAMILIES = ("bernoulli", "multinomial")

# random instances: supports and floors used by generate_instance
GENERATED_SUPPORT = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)
GENERATED_MEAN_RANGE = (0.05, 0.95)
GENERATED_MIN_MEAN = 0.05


class InvalidDistributionError(ValueError):
    """Distribution, arm or instance parameters outside their domain."""


def make_rng(seed: int) -> RngStream:
    """Stream for one run. PCG64 output does not depend on the platform."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def _in_unit_interval(x: float) -> bool:
    return 0.0 <= x <= 1.0


# ==================== DISTRIBUTIONS ====================


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution on [0,1]. Build it with bernoulli(), multinomial() or fixed()."""

    kind: str
    p: float = 0.0
    support: Tuple[float, ...] = ()
    probs: Tuple[float, ...] = ()
    v: float = 0.0
    _cdf: Tuple[float, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidDistributionError(f"unknown distribution kind: {self.kind!r}")
        if self.kind == "bernoulli" and not _in_unit_interval(self.p):
            raise InvalidDistributionError(f"bernoulli p must lie in [0,1], got {self.p}")
        if self.kind == "fixed" and not _in_unit_interval(self.v):
            raise InvalidDistributionError(f"fixed value must lie in [0,1], got {self.v}")
        if self.kind == "multinomial":
            self._check_multinomial()
            object.__setattr__(self, "_cdf", tuple(itertools.accumulate(self.probs)))

    def _check_multinomial(self):
        if not self.support or len(self.support) != len(self.probs):
            raise InvalidDistributionError(
                "multinomial needs a non-empty support and one probability per value"
            )
        if not all(_in_unit_interval(s) for s in self.support):
            raise InvalidDistributionError(f"support values must lie in [0,1]: {self.support}")
        if any(q < 0.0 for q in self.probs):
            raise InvalidDistributionError(f"probabilities must be nonnegative: {self.probs}")
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise InvalidDistributionError(f"probabilities sum to {total!r}, expected 1")

    @classmethod
    def bernoulli(cls, p: float) -> "DistributionSpec":
        return cls(kind="bernoulli", p=float(p))

    @classmethod
    def multinomial(cls, support: Sequence[float], probs: Sequence[float]) -> "DistributionSpec":
        return cls(
            kind="multinomial",
            support=tuple(float(s) for s in support),
            probs=tuple(float(q) for q in probs),
        )

    @classmethod
    def fixed(cls, v: float) -> "DistributionSpec":
        return cls(kind="fixed", v=float(v))

    @property
    def mean(self) -> float:
        return exact_mean(self)

    @property
    def is_binary(self) -> bool:
        """True when every outcome is 0 or 1 (usable in bernoulli mode)."""
        if self.kind == "bernoulli":
            return True
        if self.kind == "fixed":
            return self.v in (0.0, 1.0)
        return all(s in (0.0, 1.0) for s, q in zip(self.support, self.probs) if q > 0.0)

    @property
    def draws_per_sample(self) -> int:
        return 0 if self.kind == "fixed" else 1

    def to_dict(self) -> Dict:
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.p}
        if self.kind == "fixed":
            return {"kind": "fixed", "v": self.v}
        return {"kind": "multinomial", "support": list(self.support), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, data: Dict) -> "DistributionSpec":
        kind = data.get("kind")
        if kind == "bernoulli":
            return cls.bernoulli(data["p"])
        if kind == "fixed":
            return cls.fixed(data["v"])
        if kind == "multinomial":
            return cls.multinomial(data["support"], data["probs"])
        raise InvalidDistributionError(f"unknown distribution kind: {kind!r}")


def exact_mean(d: DistributionSpec) -> float:
    if d.kind == "bernoulli":
        return d.p
    if d.kind == "fixed":
        return d.v
    return math.fsum(s * q for s, q in zip(d.support, d.probs))


def sample(d: DistributionSpec, rng: RngStream) -> float:
    """One i.i.d. draw from d."""
    if d.kind == "fixed":
        return d.v
    u = rng.random()
    if d.kind == "bernoulli":
        return 1.0 if u < d.p else 0.0
    idx = bisect.bisect_right(d._cdf, u)
    return d.support[min(idx, len(d.support) - 1)]


def sample_many(d: DistributionSpec, rng: RngStream, size: int) -> np.ndarray:
    """`size` i.i.d. draws as a float array, same per-draw stream usage as sample()."""
    if d.kind == "fixed":
        return np.full(size, d.v, dtype=float)
    u = rng.random(size)
    if d.kind == "bernoulli":
        return (u < d.p).astype(float)
    idx = np.searchsorted(np.asarray(d._cdf), u, side="right")
    np.minimum(idx, len(d.support) - 1, out=idx)
    return np.asarray(d.support, dtype=float)[idx]


def bernoulli_trial(x: float, rng: RngStream) -> int:
    """Return 1 with probability x, so E[output] = x."""
    if not _in_unit_interval(x):
        raise InvalidDistributionError(f"bernoulli trial needs x in [0,1], got {x}")
    return 1 if rng.random() < x else 0


# ==================== ARMS AND INSTANCES ====================


@dataclass(frozen=True)
class ArmModel:
    """Independent reward and cost distributions of one arm."""

    reward: DistributionSpec
    cost: DistributionSpec

    def __post_init__(self):
        if self.reward.mean <= 0.0 or self.cost.mean <= 0.0:
            raise InvalidDistributionError(
                f"arm needs positive mean reward and cost, got "
                f"{self.reward.mean} / {self.cost.mean}"
            )

    @property
    def ratio(self) -> float:
        return self.reward.mean / self.cost.mean


@dataclass(frozen=True)
class BanditInstance:
    """K >= 2 arms; optimal arm and ratio gaps are derived at construction."""

    arms: Tuple[ArmModel, ...]
    optimal_arm: int = field(default=-1, init=False)
    gaps: Tuple[float, ...] = field(default=(), init=False)

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        if len(self.arms) < 2:
            raise InvalidDistributionError(f"an instance needs K >= 2 arms, got {len(self.arms)}")
        ratios = [arm.ratio for arm in self.arms]
        # max() keeps the first maximum: lowest index wins ties
        best = max(range(len(ratios)), key=lambda i: ratios[i])
        gaps = tuple(0.0 if i == best else ratios[best] - r for i, r in enumerate(ratios))
        object.__setattr__(self, "optimal_arm", best)
        object.__setattr__(self, "gaps", gaps)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def reward_means(self) -> Tuple[float, ...]:
        return tuple(arm.reward.mean for arm in self.arms)

    @property
    def cost_means(self) -> Tuple[float, ...]:
        return tuple(arm.cost.mean for arm in self.arms)

    @property
    def ratios(self) -> Tuple[float, ...]:
        return tuple(arm.ratio for arm in self.arms)

    @property
    def optimal_ratio(self) -> float:
        return self.arms[self.optimal_arm].ratio

    @property
    def min_cost_mean(self) -> float:
        return min(self.cost_means)

    @property
    def is_binary(self) -> bool:
        return all(arm.reward.is_binary and arm.cost.is_binary for arm in self.arms)


def pull(instance: BanditInstance, arm: int, rng: RngStream) -> Tuple[float, float]:
    """Reward first, then cost, drawn independently."""
    if not 0 <= arm < instance.n_arms:
        raise InvalidDistributionError(f"arm {arm} out of range for K={instance.n_arms}")
    model = instance.arms[arm]
    reward = sample(model.reward, rng)
    cost = sample(model.cost, rng)
    return reward, cost


class ArmStreams:
    """One PCG64 stream per arm, spawned from a single seed.

    The k-th pull of arm i draws the same (reward, cost) whichever policy is
    playing, so runs that share the seed see common random numbers.
    """

    def __init__(self, instance: BanditInstance, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.instance = instance
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(instance.n_arms)
        self._streams = [np.random.Generator(np.random.PCG64(c)) for c in children]

    def pull(self, arm: int) -> Tuple[float, float]:
        if not 0 <= arm < self.instance.n_arms:
            raise InvalidDistributionError(f"arm {arm} out of range for K={self.instance.n_arms}")
        return pull(self.instance, arm, self._streams[arm])


def instance_to_dict(instance: BanditInstance) -> Dict:
    return {
        "arms": [
            {"reward": arm.reward.to_dict(), "cost": arm.cost.to_dict()}
            for arm in instance.arms
        ]
    }


def instance_from_dict(data: Dict) -> BanditInstance:
    arms: List[ArmModel] = []
    for entry in data["arms"]:
        arms.append(
            ArmModel(
                reward=DistributionSpec.from_dict(entry["reward"]),
                cost=DistributionSpec.from_dict(entry["cost"]),
            )
        )
    return BanditInstance(arms=tuple(arms))


def _random_multinomial(rng: RngStream) -> DistributionSpec:
    while True:
        weights = rng.dirichlet(np.ones(len(GENERATED_SUPPORT)))
        weights = weights / weights.sum()
        d = DistributionSpec.multinomial(GENERATED_SUPPORT, weights.tolist())
        if d.mean >= GENERATED_MIN_MEAN:
            return d


def generate_instance(seed: int, n_arms: int, family: str) -> BanditInstance:
    """Random instance for the experiment protocol.

    bernoulli: means ~ U(0.05, 0.95). multinomial: support {0, 1/3, 2/3, 1} with
    Dirichlet(1,1,1,1) weights, redrawn while the mean is below 0.05.
    Draw order is arm by arm, reward before cost.
    """
    if family not in FAMILIES:
        raise InvalidDistributionError(f"unknown instance family: {family!r}")
    rng = make_rng(seed)
    low, high = GENERATED_MEAN_RANGE
    arms = []
    for _ in range(n_arms):
        if family == "bernoulli":
            reward = DistributionSpec.bernoulli(rng.uniform(low, high))
            cost = DistributionSpec.bernoulli(rng.uniform(low, high))
        else:
            reward = _random_multinomial(rng)
            cost = _random_multinomial(rng)
        arms.append(ArmModel(reward=reward, cost=cost))
    instance = BanditInstance(arms=tuple(arms))
    logger.debug(
        f"Generated {family} instance seed={seed} K={n_arms} optimal_arm={instance.optimal_arm}"
    )
    return instance
