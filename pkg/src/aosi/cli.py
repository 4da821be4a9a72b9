"""Command-line front end.

    aosi train   --config C [--policy P] [--seed S] --out DIR
    aosi eval    --config C [--policy P] [--checkpoint F] [--seed S] --out FILE
    aosi sweep   --config C --axis sources|tau [--reps R] [--policy P ...] --out FILE
    aosi oracle  --config C [--seed S] --out FILE
    aosi export-similarity [--config C] --out FILE

Exit codes: 0 success, 1 runtime error, 2 bad arguments, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, SimConfig, atomic_write_text, fingerprint, load_config, read_config_file
from .engine import (POLICY_NAMES, Environment, ResultRow, StateNorm, evaluate, make_policy,
                     run_sweep, train, write_results)
from .oracle import OracleSettings, oracle_report, write_report
from .policy import RA_MODES
from .semantics import build_similarity, export_table

log = logging.getLogger("aosi")

REWARD_COLUMNS = ("episode", "greedy_prob", "mean_reward", "long_term_avg_aosi", "mean_loss",
                  "config_fingerprint")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aosi", description="AoSI status-update simulator and DQN scheduler.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, type=Path)
        p.add_argument("--seed", type=int, default=None, help="overrides sim.master_seed")
        p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train", help="train a policy; writes checkpoint and per-episode rewards")
    common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, default="dqn-joint")
    p.add_argument("--ra", choices=RA_MODES, default="dqn")

    p = sub.add_parser("eval", help="greedy evaluation of a (trained) policy")
    common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, default="dqn-joint")
    p.add_argument("--ra", choices=RA_MODES, default="dqn")
    p.add_argument("--checkpoint", type=Path)

    p = sub.add_parser("sweep", help="train+evaluate over a grid of source counts or intervals")
    common(p)
    p.add_argument("--axis", choices=("sources", "tau"), required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--policy", choices=POLICY_NAMES, action="append")
    p.add_argument("--ra", choices=RA_MODES, default="dqn")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("oracle", help="exhaustive optimum and policy gaps on tiny instances")
    common(p)

    p = sub.add_parser("export-similarity", help="tabulate the similarity model as CSV")
    common(p, config_required=False)
    p.add_argument("--snr-db", type=float, nargs=3, default=(-10.0, 30.0, 1.0),
                   metavar=("MIN", "MAX", "STEP"))
    return parser


def _load(args):
    """Configs plus the similarity model (a bad table file is a config error)."""
    sim, dqn = load_config(args.config)
    if args.seed is not None:
        sim = dataclasses.replace(sim, master_seed=args.seed)
    try:
        model = build_similarity(sim)
    except (OSError, ValueError) as exc:
        raise ConfigError("similarity_model", f"similarity_model: {exc}") from exc
    return sim, dqn, model


def cmd_train(args) -> None:
    sim, dqn, model = _load(args)
    seed = sim.master_seed
    env = Environment(sim, model, StateNorm.from_config(sim, dqn), seed)
    policy = make_policy(args.policy, sim, dqn, model, seed, args.ra)
    fp = fingerprint(sim, dqn)
    records = train(policy, env, dqn,
                    on_episode=lambda r: log.info("episode %d reward %.5f", r.episode, r.mean_reward))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REWARD_COLUMNS)
    for r in records:
        writer.writerow([r.episode, repr(r.greedy_prob), repr(r.mean_reward), repr(r.long_term_avg_aosi),
                         "" if r.mean_loss is None else repr(r.mean_loss), fp])
    args.out.mkdir(parents=True, exist_ok=True)
    agent = getattr(policy, "agent", None)
    if agent is not None:
        agent.save(args.out / "checkpoint.npz")
    atomic_write_text(args.out / "rewards.csv", buf.getvalue())


def cmd_eval(args) -> None:
    sim, dqn, model = _load(args)
    seed = sim.master_seed
    policy = make_policy(args.policy, sim, dqn, model, seed, args.ra)
    agent = getattr(policy, "agent", None)
    if agent is not None:
        if args.checkpoint is None:
            raise ConfigError("checkpoint", f"--checkpoint is required to evaluate {args.policy} with a DQN")
        agent.load(args.checkpoint)
    env = Environment(sim, model, StateNorm.from_config(sim, dqn), seed)
    summary = evaluate(policy, env, dqn)
    row = ResultRow(args.policy, sim.sources, sim.tau, 0, None, summary.long_term_avg_aosi,
                    summary.mean_reward, fingerprint(sim, dqn))
    write_results([row], args.out)


def cmd_sweep(args) -> None:
    sim, dqn, _ = _load(args)
    if args.reps < 1 or args.jobs < 1:
        raise _UsageError("aosi sweep: --reps and --jobs must be >= 1")
    policies = tuple(args.policy) if args.policy else POLICY_NAMES
    rows = run_sweep(sim, dqn, args.axis, args.reps, policies, ra=args.ra, jobs=args.jobs)
    write_results(rows, args.out)


def cmd_oracle(args) -> None:
    data = read_config_file(args.config)
    sim, dqn, _ = _load(args)
    settings = OracleSettings.from_dict(data.get("oracle"))
    write_report(oracle_report(sim, dqn, settings, sim.master_seed), args.out)


def cmd_export_similarity(args) -> None:
    if args.config:
        sim, _, model = _load(args)
    else:
        sim = SimConfig(sources=1)
        model = build_similarity(sim)
    lo, hi, step = args.snr_db
    if step <= 0 or hi < lo:
        raise _UsageError("aosi export-similarity: --snr-db needs MIN <= MAX and STEP > 0")
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    export_table(model, range(1, sim.max_symbols_per_word + 1), grid, args.out)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "export-similarity": cmd_export_similarity,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
