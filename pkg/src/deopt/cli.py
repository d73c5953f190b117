"""Command-line entry point.

Subcommands:
  train          offline training; writes a checkpoint and a training log
  eval           evaluation protocol over one or more policies; writes CSVs
  features-dump  per-step state-vector audit trace as CSV
  bench-list     registered benchmark functions with class tags
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from deopt.bench import BenchError, make_suite, registered_functions
from deopt.de import DERun, Strategy
from deopt.features import N_FEATURES
from deopt.harness import (
    Config,
    ConfigError,
    derive_seed,
    evaluate,
    parse_config,
    resolve_policy,
    train,
)
from deopt.neural import CheckpointError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="offline training")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True, help="checkpoint path")

    p_eval = sub.add_parser("eval", help="evaluation protocol")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument(
        "--policy", action="append", required=True,
        help="random | fixed:<strategy> | ddqn:<checkpoint>; repeatable",
    )
    p_eval.add_argument("--runs", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", required=True, help="results CSV path")
    p_eval.add_argument("--jobs", type=int, default=1)

    p_dump = sub.add_parser("features-dump", help="per-step state audit trace")
    p_dump.add_argument("--config", required=True)
    p_dump.add_argument("--out", required=True)
    p_dump.add_argument("--function", default=None, help="function id (default: first test function)")
    p_dump.add_argument("--dim", type=int, default=None)
    p_dump.add_argument("--steps", type=int, default=500)

    sub.add_parser("bench-list", help="list registered benchmark functions")
    return parser


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out)
    report = train(cfg, out, log_path=out.with_suffix(out.suffix + ".train_log.csv"))
    print(f"checkpoint: {report.checkpoint_path}")
    print(f"best cycle: {report.best_cycle} "
          f"(mean reward {report.cycle_rewards[report.best_cycle]:.6g})")
    print(f"cycles run: {len(report.cycle_rewards)}")
    print(f"evaluations consumed: {report.total_evaluations}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = parse_config(args.config)
    runs = args.runs if args.runs is not None else cfg.runs
    seed = args.seed if args.seed is not None else cfg.seed
    suite = make_suite(cfg.test_functions, cfg.dims)
    results = evaluate(
        args.policy, suite, runs, seed, cfg.de_params(),
        gen_history=cfg.gen_history, window_size=cfg.window_size, jobs=args.jobs,
    )
    out = Path(args.out)
    out.write_text(results.results_csv())
    ranks_path = out.with_suffix(out.suffix + ".ranks.csv")
    ranks_path.write_text(results.ranks_csv())
    print(f"results: {out}")
    print(f"ranks:   {ranks_path}")
    for method in results.methods:
        print(f"  {method}: mean rank {results.mean_ranks[method]:.3f}")
    return EXIT_OK


def _cmd_features_dump(args) -> int:
    cfg = parse_config(args.config)
    name = args.function or cfg.test_functions[0]
    dim = args.dim or cfg.dims[0]
    func = make_suite([name], [dim])[0]
    rng = np.random.default_rng(derive_seed(cfg.seed, "features-dump", func.id))
    run = DERun(
        func, cfg.de_params(), rng,
        gen_history=cfg.gen_history, window_size=cfg.window_size,
    )
    lines = ["step,action," + ",".join(f"f{k}" for k in range(1, N_FEATURES + 1))]
    step = 0
    while not run.done and step < args.steps:
        state = run.observe()
        action = Strategy(int(rng.integers(4)))
        run.step(action)
        lines.append(
            f"{step},{int(action)}," + ",".join(repr(float(v)) for v in state)
        )
        step += 1
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {step} steps to {args.out}")
    return EXIT_OK


def _cmd_bench_list() -> int:
    for name, tag in registered_functions():
        print(f"{name}\t{tag}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "features-dump":
            return _cmd_features_dump(args)
        return _cmd_bench_list()
    except (ConfigError, BenchError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
