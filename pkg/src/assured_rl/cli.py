"""Command line: ``train``, ``oracle`` and ``compare``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cmdp import ModelError, Policy, TabularCmdp
from .experiment import (
    ConfigError,
    ExperimentConfig,
    compare,
    default_seed,
    load_config,
    parse_config,
    run_experiment,
)
from .gridworld import ACTION_NAMES, MazeParseError, load_maze, shipped_maze, to_cmdp
from .learners import Algorithm
from .oracle import SolverError, constrained_value_iteration, qd_policy_eval, safety_kernel


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, help="master seed (overrides config and $ASSURED_RL_SEED)")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="assured-rl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="multi-trial training run")
    _common(train)
    train.add_argument("--algo", choices=[a.value for a in Algorithm])
    train.add_argument("--workers", type=int, default=1)

    cmp_ = sub.add_parser("compare", help="assured-q vs baseline-q with shared seeds")
    _common(cmp_)
    cmp_.add_argument("--algo", choices=[a.value for a in Algorithm], help="ignored; both are run")
    cmp_.add_argument("--workers", type=int, default=1)

    oracle = sub.add_parser("oracle", help="exact safety kernel, constrained Q* and q_D tables")
    oracle.add_argument("--config", help="config file (its maze and gamma are used)")
    src = oracle.add_mutually_exclusive_group()
    src.add_argument("--maze", help="maze text file (default: shipped maze)")
    src.add_argument("--model", help="tabular model text file")
    oracle.add_argument("--gamma", type=float)
    oracle.add_argument("--out-dir", default="oracle")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            values = parse_config(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    overrides = {
        "master_seed": args.seed,
        "out_dir": args.out_dir,
        "trials": args.trials,
        "episodes": args.episodes,
        "algorithm": getattr(args, "algo", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    values.setdefault("master_seed", default_seed())
    return ExperimentConfig(**values)


def _cmd_train(args) -> int:
    config = _experiment_config(args)
    result = run_experiment(config, workers=args.workers)
    print(f"wrote {len(result.logs)} trials to {result.out_dir}")
    return 0


def _cmd_compare(args) -> int:
    config = _experiment_config(args)
    results = compare(config, workers=args.workers)
    for name, res in results.items():
        last = res.curve.mean_cum_violations[-1] if len(res.curve) else 0.0
        print(f"{name}: mean cumulative violations at the end = {last:.3f}")
    print(f"report: {Path(config.out_dir) / 'report.csv'}")
    return 0


def _matrix_text(a: np.ndarray) -> str:
    return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in a)


def _cmd_oracle(args) -> int:
    gamma = 0.9
    maze = None
    if args.config:
        config = load_config(args.config)
        gamma = config.gamma
        maze = config.maze()
    if args.gamma is not None:
        gamma = args.gamma
    if args.model:
        model = TabularCmdp.from_text(Path(args.model).read_text(encoding="utf-8"))
    else:
        if args.maze:
            maze = load_maze(args.maze)
        model = to_cmdp(maze or shipped_maze())
    kernel = safety_kernel(model)
    q_star = constrained_value_iteration(model, kernel, gamma)
    qd = qd_policy_eval(model, Policy.uniform(model.n_states, model.n_actions))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.txt").write_text(model.to_text(), encoding="utf-8")
    (out / "kernel.txt").write_text(kernel.to_barrier().to_text(), encoding="utf-8")
    (out / "q_star.txt").write_text(q_star.to_text(), encoding="utf-8")
    (out / "qd_uniform.txt").write_text(_matrix_text(qd), encoding="utf-8")
    info = {
        "gamma": gamma,
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "damage_state": model.damage_state,
        "unsafe_pairs": int(kernel.unsafe.sum()),
        "dead_states": kernel.dead_states(),
        "action_names": list(ACTION_NAMES) if model.n_actions == 4 and not args.model else None,
    }
    (out / "oracle.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    print(f"wrote oracle tables to {out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"train": _cmd_train, "compare": _cmd_compare, "oracle": _cmd_oracle}
    try:
        return handlers[args.command](args)
    except (ConfigError, MazeParseError, ModelError, SolverError, OSError, ValueError) as exc:
        print(f"assured-rl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
