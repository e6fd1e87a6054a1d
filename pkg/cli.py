#!/usr/bin/env python3
"""Command line for budgeted bandit experiments.

  run           simulate every (policy, budget, run) of a config into a raw CSV
  bounds        gap table and regret-bound constants of a config's instance
  aggregate     mean/std regret per (policy, budget) from a raw CSV
  gen-instance  random instance as JSON, usable as a config's "instance" block
  oracle        Monte Carlo value of always pulling one arm (manual check)

Exit codes: 0 ok, 1 config error, 2 any other failure.
"""
import argparse
import importlib.util
import json
import logging
import os
import sys

import harness
import theory
from bandit_core import FAMILIES, generate_instance, instance_to_dict
from evaluation import fixed_arm_lower_bound, optimal_value

logger = logging.getLogger(__name__)

ORACLES_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "tests", "oracles.py")


def _load_oracles():
    """tests/oracles.py is test-only; import it from its path on demand."""
    if not os.path.exists(ORACLES_PATH):
        raise RuntimeError(f"oracle module not found at {ORACLES_PATH}")
    spec = importlib.util.spec_from_file_location("oracles", ORACLES_PATH)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def cmd_run(args) -> None:
    config = harness.load_config(
        args.config, overrides={"base_seed": args.seed, "threads": args.threads}
    )
    rows = harness.run_experiment(config)
    harness.write_rows(rows, args.out, n_arms=config.bandit.n_arms)
    if args.aggregate_out:
        harness.write_aggregated(harness.aggregate(rows), args.aggregate_out)


def cmd_bounds(args) -> None:
    config = harness.load_config(args.config)
    instance = config.bandit
    budget = args.budget or max(config.budgets)
    arms, summary = theory.constants_report(instance, args.gamma, budget)
    summary["optimal_value"] = optimal_value(instance, budget, config.mode)
    summary["fixed_arm_lower_bound"] = fixed_arm_lower_bound(instance, budget)
    if args.format == "csv":
        print(arms.to_csv(index=False), end="")
        print()
        print(summary.to_csv(index=False), end="")
    else:
        print(arms.to_string(index=False))
        print()
        print(summary.T.to_string(header=False))


def cmd_aggregate(args) -> None:
    df = harness.read_rows(args.input)
    harness.write_aggregated(harness.aggregate(df), args.out)


def cmd_gen_instance(args) -> None:
    instance = generate_instance(args.seed, args.arms, args.family)
    text = json.dumps(instance_to_dict(instance), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text + "\n")
        logger.info(f"Wrote instance (optimal arm {instance.optimal_arm}) to {args.out}")
    else:
        print(text)


def cmd_oracle(args) -> None:
    oracles = _load_oracles()
    config = harness.load_config(args.config)
    instance = config.bandit
    arm = instance.optimal_arm if args.arm is None else args.arm
    budget = args.budget or min(config.budgets)
    est = oracles.mc_policy_value(instance, arm, budget, config.mode, args.episodes, args.seed)
    print(
        f"arm={arm} budget={budget} value={est.value:.6f} "
        f"se={est.standard_error:.6f} samples={est.samples} "
        f"ratio*B={instance.ratios[arm] * budget:.6f}"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Budgeted multi-armed bandit experiments")
    parser.add_argument("--log-dir", default=harness.LOG_DIR)
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG logging")
    sub = parser.add_subparsers(dest="cmd")

    p_run = sub.add_parser("run", help="Run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--seed", type=int, help="Override base_seed")
    p_run.add_argument("--aggregate-out", help="Also write the aggregated CSV here")
    p_run.set_defaults(func=cmd_run)

    p_bounds = sub.add_parser("bounds", help="Gap table and bound constants")
    p_bounds.add_argument("--config", required=True)
    p_bounds.add_argument("--gamma", type=float, default=theory.DEFAULT_GAMMA)
    p_bounds.add_argument("--budget", type=int, help="Defaults to the largest config budget")
    p_bounds.add_argument("--format", choices=["text", "csv"], default="text")
    p_bounds.set_defaults(func=cmd_bounds)

    p_agg = sub.add_parser("aggregate", help="Aggregate a raw CSV")
    p_agg.add_argument("--in", dest="input", required=True)
    p_agg.add_argument("--out", required=True)
    p_agg.set_defaults(func=cmd_aggregate)

    p_gen = sub.add_parser("gen-instance", help="Random instance as JSON")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--arms", type=int, required=True)
    p_gen.add_argument("--family", choices=FAMILIES, required=True)
    p_gen.add_argument("--out")
    p_gen.set_defaults(func=cmd_gen_instance)

    p_oracle = sub.add_parser("oracle", help="Monte Carlo value of a fixed-arm policy")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--arm", type=int, help="0-based; defaults to the optimal arm")
    p_oracle.add_argument("--budget", type=int, help="Defaults to the smallest config budget")
    p_oracle.add_argument("--episodes", type=int, default=10**4)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_help()
        return 0
    harness.setup_logging(args.log_dir, logging.DEBUG if args.verbose else logging.INFO)
    try:
        args.func(args)
    except harness.ConfigError as e:
        logger.error(str(e))
        return 1
    except Exception as e:
        logger.exception(f"{args.cmd} failed: {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
