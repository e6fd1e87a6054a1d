"""
Experiment harness.
- JSON experiment config validated with pydantic
- Deterministic per-run seeds (blake2b over base seed, policy, budget, run)
- Shared per-arm environment streams per run index, so policies are paired
- Runs fanned out over a process pool, rows sorted before writing
- CSV output and per (policy, budget) aggregation with pandas
- Logging setup for the command line
"""

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from logging.handlers import RotatingFileHandler
from typing import Annotated, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bandit_core import (
    FAMILIES,
    ArmModel,
    ArmStreams,
    BanditInstance,
    DistributionSpec,
    generate_instance,
    make_rng,
)
from evaluation import RunawayLoopError, pseudo_regret, run_trajectory
from policies import POLICY_NAMES, PolicyKind

logger = logging.getLogger(__name__)

LOG_DIR = "logs"
LOG_FILE = "bandit.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

RUNAWAY_MARKER = "runaway_loop"
# policy id slot of the shared environment seeds
ENVIRONMENT_ID = "environment"
GROUP_KEYS = ["policy", "budget"]
AGGREGATE_COLUMNS = ["policy", "budget", "mean_regret", "std_regret", "runs", "std_defined", "errors"]


class ConfigError(ValueError):
    """Experiment config missing, unreadable or invalid."""


def setup_logging(log_dir: str = LOG_DIR, level: int = logging.INFO) -> None:
    os.makedirs(log_dir, exist_ok=True)
    log_path = os.path.join(log_dir, LOG_FILE)
    try:
        file_handler = RotatingFileHandler(log_path, maxBytes=5 * 1024 * 1024, backupCount=5)
    except Exception:
        file_handler = logging.FileHandler(log_path)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[file_handler, logging.StreamHandler()],
        force=True,
    )


# ==================== CONFIG ====================


class BernoulliConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["bernoulli"]
    p: float


class MultinomialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["multinomial"]
    support: List[float]
    probs: List[float]


class FixedConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["fixed"]
    v: float


DistributionConfig = Annotated[
    Union[BernoulliConfig, MultinomialConfig, FixedConfig], Field(discriminator="kind")
]


class ArmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    reward: DistributionConfig
    cost: DistributionConfig

    def build(self) -> ArmModel:
        return ArmModel(
            reward=DistributionSpec.from_dict(self.reward.model_dump()),
            cost=DistributionSpec.from_dict(self.cost.model_dump()),
        )


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    seed: int = Field(ge=0, lt=2**64)
    arms: int = Field(ge=2)
    family: Literal[FAMILIES]


class InstanceConfig(BaseModel):
    """Either explicit arms or a generator block, never both."""

    model_config = ConfigDict(extra="forbid")
    arms: Optional[List[ArmConfig]] = None
    generator: Optional[GeneratorConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.arms is None) == (self.generator is None):
            raise ValueError("instance needs exactly one of 'arms' or 'generator'")
        return self

    def build(self) -> BanditInstance:
        if self.generator is not None:
            g = self.generator
            return generate_instance(g.seed, g.arms, g.family)
        return BanditInstance(arms=tuple(a.build() for a in self.arms))


class PolicyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: Literal[POLICY_NAMES]
    epsilon: float = 0.1
    lam: Optional[float] = None
    label: Optional[str] = None

    def to_kind(self) -> PolicyKind:
        return PolicyKind(name=self.name, epsilon=self.epsilon, lam=self.lam, label=self.label)


def _strictly_increasing_positive(values: List[int], what: str) -> List[int]:
    if not values:
        raise ValueError(f"{what} must not be empty")
    if values[0] <= 0 or any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"{what} must be positive and strictly increasing, got {values}")
    return values


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    instance: InstanceConfig
    policies: List[PolicyConfig] = Field(min_length=1)
    budgets: List[int]
    runs: int = Field(ge=1)
    base_seed: int = Field(ge=0, lt=2**64)
    mode: Literal["bernoulli", "general"]
    checkpoint_budgets: Optional[List[int]] = None
    threads: int = Field(default=1, ge=1)
    common_random_numbers: bool = True

    @field_validator("budgets")
    @classmethod
    def _check_budgets(cls, v):
        return _strictly_increasing_positive(v, "budgets")

    @field_validator("checkpoint_budgets")
    @classmethod
    def _check_checkpoints(cls, v):
        if v is None:
            return v
        return _strictly_increasing_positive(v, "checkpoint_budgets")

    @model_validator(mode="after")
    def _check_against_instance(self):
        if self.checkpoint_budgets and self.checkpoint_budgets[-1] > self.budgets[-1]:
            raise ValueError(
                f"checkpoint_budgets must not exceed the largest budget {self.budgets[-1]}, "
                f"got {self.checkpoint_budgets}"
            )
        labels = [p.to_kind().display_name for p in self.policies]
        duplicates = sorted({x for x in labels if labels.count(x) > 1})
        if duplicates:
            raise ValueError(f"policy labels must be unique, repeated: {duplicates}")
        instance = self.instance.build()
        if self.mode == "bernoulli" and not instance.is_binary:
            raise ValueError("bernoulli mode requires binary reward and cost distributions")
        for p in self.policies:
            if p.name == "ucb_bv1" and p.lam is not None and p.lam > instance.min_cost_mean:
                raise ValueError(
                    f"UCB-BV1 lambda {p.lam} exceeds the minimum expected cost "
                    f"{instance.min_cost_mean}"
                )
        return self

    @cached_property
    def bandit(self) -> BanditInstance:
        return self.instance.build()

    @property
    def policy_kinds(self) -> List[PolicyKind]:
        return [p.to_kind() for p in self.policies]

    @property
    def anytime_marks(self) -> List[int]:
        """budgets plus any extra checkpoint_budgets, ascending."""
        return sorted(set(self.budgets) | set(self.checkpoint_budgets or ()))


def load_config(path: str, overrides: Optional[Dict] = None) -> ExperimentConfig:
    """Read and validate a JSON config; overrides (e.g. base_seed, threads) replace top-level keys."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"could not read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}:\n{e}") from e
    logger.info(
        f"Loaded config {path}: K={config.bandit.n_arms} mode={config.mode} "
        f"policies={len(config.policies)} budgets={config.budgets} runs={config.runs}"
    )
    return config


# ==================== RUNS ====================


def derive_seed(base_seed: int, policy_id: str, budget: int, run_index: int) -> int:
    """First 8 bytes (little-endian) of blake2b("{base_seed}:{policy_id}:{budget}:{run_index}")."""
    key = f"{base_seed}:{policy_id}:{budget}:{run_index}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def environment_seed(base_seed: int, run_index: int) -> int:
    """Seed of the per-arm reward/cost streams of run `run_index`, shared by every policy and budget."""
    return derive_seed(base_seed, ENVIRONMENT_ID, 0, run_index)


@dataclass(frozen=True)
class ResultRow:
    policy: str
    budget: int
    run: int
    seed: int
    regret: Optional[float] = None
    total_reward: Optional[float] = None
    total_cost: Optional[float] = None
    stopping_time: Optional[int] = None
    pulls_optimal: Optional[int] = None
    pulls: Tuple[int, ...] = ()
    decomposed_regret: Optional[float] = None
    regret_kind: str = ""
    error: str = ""


@dataclass(frozen=True)
class _RunTask:
    instance: BanditInstance
    kind: PolicyKind
    budget: int
    marks: Tuple[int, ...]
    mode: str
    seed: int
    run: int
    environment_seed: Optional[int] = None


def _execute_task(task: _RunTask) -> List[ResultRow]:
    """One seeded run, one row per mark. Top-level so worker processes can pickle it."""
    label = task.kind.display_name
    try:
        environment = None
        if task.environment_seed is not None:
            environment = ArmStreams(task.instance, task.environment_seed)
        traj = run_trajectory(
            task.instance,
            task.kind,
            task.budget,
            task.mode,
            make_rng(task.seed),
            task.marks,
            environment=environment,
        )
    except RunawayLoopError as e:
        logger.warning(f"{label} run {task.run} seed {task.seed}: {e}")
        return [
            ResultRow(policy=label, budget=b, run=task.run, seed=task.seed, error=RUNAWAY_MARKER)
            for b in task.marks
        ]
    rows = []
    for b in task.marks:
        snap = traj.at_budget(b)
        breakdown = pseudo_regret(task.instance, snap, b, task.mode)
        rows.append(
            ResultRow(
                policy=label,
                budget=b,
                run=task.run,
                seed=task.seed,
                regret=breakdown.regret,
                total_reward=snap.total_reward,
                total_cost=snap.total_cost,
                stopping_time=snap.stopping_time,
                pulls_optimal=snap.pulls[task.instance.optimal_arm],
                pulls=snap.pulls,
                decomposed_regret=breakdown.decomposed,
                regret_kind=breakdown.kind,
            )
        )
    return rows


def build_tasks(config: ExperimentConfig) -> List[_RunTask]:
    """Anytime policies run once at the largest mark; the others once per budget.

    With common_random_numbers every task of run r draws rewards and costs from
    the same per-arm streams, so policies are compared on paired samples.
    """
    instance = config.bandit
    tasks = []
    for kind in config.policy_kinds:
        if kind.anytime:
            marks = tuple(config.anytime_marks)
            plan = [(marks[-1], marks)]
        else:
            plan = [(b, (b,)) for b in config.budgets]
        for budget, marks in plan:
            for run in range(config.runs):
                seed = derive_seed(config.base_seed, kind.display_name, budget, run)
                env_seed = (
                    environment_seed(config.base_seed, run) if config.common_random_numbers else None
                )
                tasks.append(
                    _RunTask(instance, kind, budget, marks, config.mode, seed, run, env_seed)
                )
    return tasks


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> List[ResultRow]:
    """All runs of the config, sorted by (policy order, budget, run) whatever the thread count."""
    workers = threads or config.threads
    tasks = build_tasks(config)
    logger.info(f"Starting experiment: {len(tasks)} runs on {workers} worker(s)")
    if workers > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_execute_task, tasks, chunksize=chunksize))
    else:
        batches = []
        for i, task in enumerate(tasks):
            batches.append(_execute_task(task))
            logger.debug(f"run {i + 1}/{len(tasks)} done ({task.kind.display_name}, B={task.budget})")

    order = {kind.display_name: i for i, kind in enumerate(config.policy_kinds)}
    rows = [row for batch in batches for row in batch]
    rows.sort(key=lambda r: (order[r.policy], r.budget, r.run))
    failed = sum(1 for r in rows if r.error)
    if failed:
        logger.warning(f"{failed} row(s) carry an error marker")
    logger.info(f"Experiment finished: {len(rows)} rows")
    return rows


# ==================== CSV ====================


def raw_columns(n_arms: int) -> List[str]:
    return (
        ["policy", "budget", "run", "seed", "regret", "total_reward", "total_cost",
         "stopping_time", "pulls_optimal"]
        + [f"pulls_arm_{i + 1}" for i in range(n_arms)]
        + ["decomposed_regret", "regret_kind", "error"]
    )


def rows_to_frame(rows: Sequence[ResultRow], n_arms: Optional[int] = None) -> pd.DataFrame:
    if n_arms is None:
        n_arms = max((len(r.pulls) for r in rows), default=0)
    records = []
    for r in rows:
        rec = {
            "policy": r.policy,
            "budget": r.budget,
            "run": r.run,
            "seed": r.seed,
            "regret": r.regret,
            "total_reward": r.total_reward,
            "total_cost": r.total_cost,
            "stopping_time": r.stopping_time,
            "pulls_optimal": r.pulls_optimal,
        }
        for i in range(n_arms):
            rec[f"pulls_arm_{i + 1}"] = r.pulls[i] if r.pulls else None
        rec.update(decomposed_regret=r.decomposed_regret, regret_kind=r.regret_kind, error=r.error)
        records.append(rec)
    df = pd.DataFrame.from_records(records, columns=raw_columns(n_arms))
    df = df.astype({"budget": "Int64", "run": "Int64", "seed": "UInt64"})
    for col in ["stopping_time", "pulls_optimal"] + [f"pulls_arm_{i + 1}" for i in range(n_arms)]:
        df[col] = df[col].astype("Int64")
    for col in ["regret", "total_reward", "total_cost", "decomposed_regret"]:
        df[col] = df[col].astype(float)
    return df


def _write_csv(df: pd.DataFrame, path: str) -> str:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    tmp = path + ".tmp"
    df.to_csv(tmp, index=False, sep=",", encoding="utf-8")
    os.replace(tmp, path)
    return path


def write_rows(rows: Sequence[ResultRow], path: str, n_arms: Optional[int] = None) -> str:
    _write_csv(rows_to_frame(rows, n_arms), path)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def read_rows(path: str) -> pd.DataFrame:
    df = pd.read_csv(
        path, sep=",", encoding="utf-8", dtype={"seed": "UInt64", "policy": str},
        float_precision="round_trip",
    )
    if "error" in df.columns:
        df["error"] = df["error"].fillna("").astype(str)
    return df


def aggregate(rows: Union[Sequence[ResultRow], pd.DataFrame]) -> pd.DataFrame:
    """Mean and sample std (n-1) of regret per (policy, budget); error rows are counted, not averaged."""
    df = rows if isinstance(rows, pd.DataFrame) else rows_to_frame(rows)
    if df.empty:
        raise ValueError("cannot aggregate an empty result set")
    if "error" in df.columns:
        failed = df["error"].fillna("").astype(str) != ""
    else:
        failed = pd.Series(False, index=df.index)

    ok = df[~failed]
    grouped = (
        ok.groupby(GROUP_KEYS, sort=False)
        .agg(mean_regret=("regret", "mean"), std_regret=("regret", "std"), runs=("regret", "size"))
        .reset_index()
    )
    every_group = df[GROUP_KEYS].drop_duplicates()
    if len(every_group) != len(grouped):
        missing = every_group.merge(grouped[GROUP_KEYS], how="left", indicator=True)
        missing = missing[missing["_merge"] == "left_only"]
        raise ValueError(
            "groups with no successful run: "
            + ", ".join(f"{p}@{b}" for p, b in zip(missing["policy"], missing["budget"]))
        )

    errors = df[failed].groupby(GROUP_KEYS, sort=False).size()
    if len(errors):
        logger.warning(f"Dropped {int(errors.sum())} error row(s) from aggregation")
    grouped["std_defined"] = grouped["runs"] > 1
    grouped["std_regret"] = grouped["std_regret"].fillna(0.0)
    grouped["errors"] = [
        int(errors.get((p, b), 0)) for p, b in zip(grouped["policy"], grouped["budget"])
    ]
    return grouped[AGGREGATE_COLUMNS]


def write_aggregated(aggregated: pd.DataFrame, path: str) -> str:
    _write_csv(aggregated, path)
    logger.info(f"Wrote {len(aggregated)} aggregated groups to {path}")
    return path


def slope_against_log_budget(aggregated: pd.DataFrame, policy: str) -> float:
    """Least-squares slope of mean regret against ln B for one policy."""
    sub = aggregated[aggregated["policy"] == policy]
    if len(sub) < 2:
        raise ValueError(f"need at least two budgets for {policy!r}, got {len(sub)}")
    x = np.log(sub["budget"].astype(float).to_numpy())
    y = sub["mean_regret"].astype(float).to_numpy()
    slope = float(np.polyfit(x, y, 1)[0])
    if not math.isfinite(slope) or slope <= 0:
        logger.warning(f"{policy}: regret slope against ln B is {slope}")
    return slope
