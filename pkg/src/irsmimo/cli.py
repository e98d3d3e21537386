"""Command-line entry points: train, evaluate, compare, sweep-actions."""

import argparse

from . import harness
from .harness import ExperimentConfig


def _add_common(parser):
    parser.add_argument("--config", default=None,
                        help="YAML experiment config (defaults if omitted)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's first seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--steps", type=int, default=None,
                        help="override the training step budget")


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = harness.load_config(args.config)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.run.seeds = [args.seed]
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsmimo",
        description="IRS phase control experiments: simulator + DRL agents")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one algorithm")
    _add_common(p_train)
    p_train.add_argument("--algorithm", default="ppo_gru",
                         choices=harness.ALGORITHMS)

    p_eval = sub.add_parser("evaluate",
                            help="greedy evaluation of a saved checkpoint")
    _add_common(p_eval)
    p_eval.add_argument("--algorithm", default="ppo_gru",
                        choices=harness.ALGORITHMS)
    p_eval.add_argument("--checkpoint", required=True)

    p_cmp = sub.add_parser("compare",
                           help="train+evaluate all configured algorithms")
    _add_common(p_cmp)

    p_sweep = sub.add_parser("sweep-actions",
                             help="PPO-GRU action-space size sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--sizes", type=int, nargs="+", default=[3, 5, 11])

    args = parser.parse_args(argv)
    cfg = _load(args)

    if args.command == "train":
        for seed in cfg.run.seeds:
            path, _ = harness.run_training(cfg, args.algorithm, seed,
                                           args.out, args.steps)
            print(path)
    elif args.command == "evaluate":
        agent = harness.load_agent(cfg, args.algorithm, args.checkpoint)
        for seed in cfg.run.seeds:
            rate = harness.evaluate_agent(cfg, agent, args.algorithm, seed)
            print(f"{args.algorithm} seed={seed} mean_rate={rate:.6g}")
    elif args.command == "compare":
        summary = harness.run_comparison(cfg, args.out, args.steps)
        for alg, row in summary.items():
            print(f"{alg}: mean={row['mean']:.6g} +- {row['ci95']:.6g}")
    elif args.command == "sweep-actions":
        summary = harness.run_action_space_sweep(
            cfg, tuple(args.sizes), args.out, args.steps)
        for size, rows in summary.items():
            plateaus = [r["plateau"] for r in rows]
            print(f"|A|={size}: plateau mean "
                  f"{sum(plateaus) / len(plateaus):.6g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
