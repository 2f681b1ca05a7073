"""Command-line entry point.

    moa run --config exp.ini [--out results.csv] [--format csv|jsonl] [--seed N]
    moa verify-theorem --config theorem.ini [--out report.csv]
    moa compare --config exp.ini [--out summary.csv]

Set ``MOA_LOG`` to ``off``, ``info`` or ``debug`` to control log output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from .advantage import Strategy
from .config import ConfigError, ExperimentConfig, load_config
from .records import StepRecord, write_dict_rows, write_step_records
from .simulator import (
    EnvKind,
    PolicyParams,
    exact_dimension_gradient,
    reward_auc,
    run_training,
    verify_theorem,
)
from .types import MoaError

log = logging.getLogger("moa")

EMA_FACTOR = 0.9
THEOREM_COLUMNS = ["beta", "measured_gap", "predicted_gap", "covariance_u_s", "trials", "zero_covariance"]
SUMMARY_COLUMNS = [
    "strategy", "seeds", "final_mean", "final_std", "auc_mean", "auc_std", "win_rate_vs_uniform",
]


def _setup_logging() -> None:
    level = os.environ.get("MOA_LOG", "off").strip().lower()
    levels = {"off": logging.CRITICAL + 1, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.CRITICAL + 1),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def train_all(config: ExperimentConfig) -> dict[tuple[int, int], list[StepRecord]]:
    """Run every (seed, strategy) pair; keys are (seed, position in the strategy list)."""
    env = config.env.build()
    runs = {}
    for seed in config.seeds:
        for k, strategy in enumerate(config.strategies):
            log.info("training seed=%d strategy=%s", seed, strategy.value)
            runs[(seed, k)] = run_training(
                env,
                strategy,
                config.steps,
                config.moa,
                group_size=config.group_size,
                groups_per_step=config.groups_per_step,
                off_policy_count=config.off_policy_count,
                seed=seed,
                eta=config.eta,
                expert_temperature=config.expert_temperature,
                optimizer=config.optimizer,
            )
    return runs


def smooth_records(records: Sequence[StepRecord], factor: float = EMA_FACTOR) -> list[StepRecord]:
    """Exponential moving average of the reward columns: ``s_t = f*s_{t-1} + (1-f)*x_t``, ``s_0 = x_0``."""
    out = []
    mean = scal = None
    for rec in records:
        x = np.array(rec.mean_rewards)
        if mean is None:
            mean, scal = x, rec.scalarized
        else:
            mean = factor * mean + (1 - factor) * x
            scal = factor * scal + (1 - factor) * rec.scalarized
        out.append(replace(rec, mean_rewards=tuple(float(v) for v in mean), scalarized=float(scal)))
    return out


def cmd_run(config: ExperimentConfig, out: str | None = None, fmt: str | None = None) -> int:
    path = out or config.output_path
    fmt = fmt or config.output_format
    if not path:
        return _fail("no output path (use --out or [output] path)")
    runs = train_all(config)
    records = []
    for key in sorted(runs):
        recs = runs[key]
        records.extend(smooth_records(recs) if config.smooth else recs)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_step_records(records, fh, fmt)
    except OSError as exc:
        return _fail(f"cannot write {path}: {exc}")
    log.info("wrote %d rows to %s", len(records), path)
    return 0


def theorem_reports(config: ExperimentConfig):
    env = config.env.build()
    th = config.theorem
    sigma = th.sigma_xi
    if sigma is None:
        s = np.array([
            np.sum(exact_dimension_gradient(PolicyParams.uniform(env.num_actions), env, d) ** 2)
            for d in range(env.n_dims)
        ])
        sigma = th.sigma_xi_rel * float(np.mean(np.sqrt(s)))
    seed = config.seeds[0]
    return [verify_theorem(env, th.c, sigma, beta, th.eta, th.trials, seed) for beta in th.betas]


def theorem_check(report, small_beta: float = 0.05, rel_tol: float = 0.25) -> str | None:
    """Return a failure message for one report row, or None when it passes."""
    if report.beta == 0:
        return None if report.measured_gap == 0 else f"beta=0 gave nonzero gap {report.measured_gap}"
    if report.beta > small_beta or report.zero_covariance:
        return None
    if not report.measured_gap > 0:
        return f"beta={report.beta}: measured gap {report.measured_gap:.3e} is not positive"
    if not report.within(rel_tol):
        return (f"beta={report.beta}: measured gap {report.measured_gap:.6e} differs from "
                f"predicted {report.predicted_gap:.6e} by more than {rel_tol:.0%}")
    return None


def cmd_verify_theorem(config: ExperimentConfig, out: str | None = None) -> int:
    if config.env.kind is not EnvKind.ORTHOGONAL:
        return _fail(f"verify-theorem needs env kind 'orthogonal', got '{config.env.kind.value}'", 2)
    reports = theorem_reports(config)
    rows = [{c: getattr(r, c) for c in THEOREM_COLUMNS} for r in reports]
    path = out or config.output_path
    try:
        if path:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                write_dict_rows(rows, fh, THEOREM_COLUMNS)
        else:
            write_dict_rows(rows, sys.stdout, THEOREM_COLUMNS)
    except OSError as exc:
        return _fail(f"cannot write {path}: {exc}")
    if any(r.zero_covariance for r in reports):
        print("note: gradient norms are all equal (zero-covariance regime); gaps are expected to vanish",
              file=sys.stderr)
    failures = [m for m in map(theorem_check, reports) if m]
    for m in failures:
        print(f"check failed: {m}", file=sys.stderr)
    return 1 if failures else 0


def final_reward(records: Sequence[StepRecord]) -> float:
    """Mean scalarised reward over the last tenth of the run (at least one step)."""
    n = max(1, len(records) // 10)
    return float(np.mean([r.scalarized for r in records[-n:]]))


def summarize(config: ExperimentConfig, runs) -> list[dict]:
    uniform_k = next(
        (k for k, s in enumerate(config.strategies) if s is Strategy.UNIFORM_GRPO), None
    )
    rows = []
    for k, strategy in enumerate(config.strategies):
        finals = np.array([final_reward(runs[(s, k)]) for s in config.seeds])
        aucs = np.array([reward_auc(runs[(s, k)]) for s in config.seeds])
        win = ""
        if uniform_k is not None and strategy is not Strategy.UNIFORM_GRPO:
            base = np.array([reward_auc(runs[(s, uniform_k)]) for s in config.seeds])
            win = float(np.mean(aucs > base))
        rows.append({
            "strategy": strategy.value,
            "seeds": len(config.seeds),
            "final_mean": float(finals.mean()),
            "final_std": float(finals.std()),
            "auc_mean": float(aucs.mean()),
            "auc_std": float(aucs.std()),
            "win_rate_vs_uniform": win,
        })
    return rows


def cmd_compare(config: ExperimentConfig, out: str | None = None) -> int:
    if len(config.strategies) < 2:
        return _fail("compare needs at least 2 strategies", 2)
    if len(config.seeds) < 2:
        return _fail("compare needs at least 2 seeds", 2)
    rows = summarize(config, train_all(config))
    try:
        if out:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                write_dict_rows(rows, fh, SUMMARY_COLUMNS)
        else:
            write_dict_rows(rows, sys.stdout, SUMMARY_COLUMNS)
    except OSError as exc:
        return _fail(f"cannot write {out}: {exc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moa", description="Multi-objective advantage experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the INI experiment config")
        p.add_argument("--seed", type=int, help="override the first seed in the config")
        p.add_argument("--out", help="output path (defaults to [output] path)")

    p_run = sub.add_parser("run", help="train and write one row per step")
    common(p_run)
    p_run.add_argument("--format", choices=["csv", "jsonl"])
    p_run.add_argument("--smooth", action="store_true", help=f"EMA-smooth rewards (factor {EMA_FACTOR})")
    common(sub.add_parser("verify-theorem", help="check the small-temperature improvement gap"))
    common(sub.add_parser("compare", help="summarise strategies across seeds"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except OSError as exc:
        return _fail(f"cannot read config {args.config}: {exc}")
    except ConfigError as exc:
        return _fail(f"invalid config: {exc}", 2)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    try:
        if args.command == "run":
            if args.smooth:
                config = replace(config, smooth=True)
            return cmd_run(config, args.out, args.format)
        if args.command == "verify-theorem":
            return cmd_verify_theorem(config, args.out)
        return cmd_compare(config, args.out)
    except MoaError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())

